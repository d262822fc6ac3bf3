#pragma once

// Procedural "real" images, generated images from trained samplers, and the
// on-disk triplet dataset.
//
// Layout under the dataset root:
//   manifest.jsonl                       one JSON record per line
//   <tag>/<split>/<id>.{src,rec,dire}.dtf

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dire/epsnet.hpp"
#include "dire/residual.hpp"
#include "dire/tensor.hpp"

namespace dire {

namespace fs = std::filesystem;

/// Families: "shapes" (anti-aliased rectangles and discs over a smooth random
/// background), "fields" (multi-scale smooth random texture) and
/// "shapes+grain" (shapes plus iid Gaussian grain, std 0.02 to 0.05 per image).
ImageTensor gen_real_one(const std::string& family, std::uint64_t seed, Shape shape);
/// Image i uses seed mix(seed, first_index + i).
ImageBatch gen_real(const std::string& family, std::uint64_t seed, int count, Shape shape,
                    std::uint64_t first_index = 0, int jobs = 1);
bool is_real_family(const std::string& family);

struct SamplerSpec {
  std::string tag;
  std::string kind = "ddim";  // "ddim" or "ddpm"
  int steps = 20;             // DDIM only
  std::string model = "primary";
  bool seen = false;          // seen samplers also get train and val splits

  bool operator==(const SamplerSpec&) const = default;
};

void to_json(nlohmann::json& j, const SamplerSpec& s);
void from_json(const nlohmann::json& j, SamplerSpec& s);

std::vector<SamplerSpec> default_samplers();

struct DatasetConfig {
  std::string real_family = "shapes";
  int train_per_class = 2000;
  int val_per_class = 200;
  int test_per_class = 200;
  int recon_steps = 20;
  bool use_abs = true;
  std::uint64_t seed = 0;
  std::vector<SamplerSpec> samplers = default_samplers();

  void validate() const;
  int count(Split split) const;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

struct ManifestRecord {
  std::string id;
  Label label = Label::Real;
  std::string sampler_tag;
  Split split = Split::Test;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  bool signed_residual = false;
  std::string source, reconstruction, dire;              // paths relative to the root
  std::string source_hash, reconstruction_hash, dire_hash;

  bool operator==(const ManifestRecord&) const = default;
};

void to_json(nlohmann::json& j, const ManifestRecord& r);
void from_json(const nlohmann::json& j, ManifestRecord& r);

struct DatasetManifest {
  fs::path root;
  std::vector<ManifestRecord> records;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

void write_manifest(const DatasetManifest& m);
DatasetManifest read_manifest(const fs::path& root);

/// Throws naming the offending record when files are missing or corrupt,
/// ids repeat, a tag has unequal real/generated counts, or (with `cfg`) a
/// split count differs from the configuration.
void validate_manifest(const DatasetManifest& m, const DatasetConfig* cfg = nullptr);

/// Triples of one split, optionally restricted to the listed tags. Hashes and
/// triple invariants are re-checked for every record.
std::vector<DireTriple> load_split(const DatasetManifest& m, Split split,
                                   const std::vector<std::string>& tags = {});

struct Models {
  const EpsModel* primary = nullptr;
  const EpsModel* secondary = nullptr;

  const EpsModel& get(const std::string& name) const;
};

/// Images for one sampler; per-image noise is seeded by (seed, index).
ImageBatch generate_images(const SamplerSpec& spec, const Models& models, std::uint64_t seed, int count,
                           int jobs = 1);

using LogFn = std::function<void(const std::string&)>;

/// Generates, reconstructs with the primary model at `recon_steps`, and writes
/// every triple under `root`, then the manifest (atomically, last).
DatasetManifest build_dataset(const Models& models, const DatasetConfig& cfg, const fs::path& root, int jobs = 1,
                              const LogFn& log = {});

}  // namespace dire
