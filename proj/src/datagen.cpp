#include "dire/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dire/ddim.hpp"
#include "dire/io.hpp"
#include "dire/perturb.hpp"
#include "dire/rng.hpp"

namespace dire {

namespace {

ImageTensor smooth_field(Shape shape, double sigma, Rng& rng) {
  ImageTensor f = gaussian_blur(standard_normal(shape, rng), sigma);
  // Unit standard deviation per channel.
  const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
  for (int c = 0; c < shape.channels; ++c) {
    float* p = f.values().data() + c * plane;
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m += p[i];
    m /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) s += (p[i] - m) * (p[i] - m);
    s = std::sqrt(s / static_cast<double>(plane));
    for (std::size_t i = 0; i < plane; ++i) p[i] = static_cast<float>((p[i] - m) / (s > 0 ? s : 1.0));
  }
  return f;
}

// Fraction of a 4x4 grid of subpixel samples inside the shape.
template <class Inside>
float coverage(int y, int x, Inside inside) {
  int hits = 0;
  for (int sy = 0; sy < 4; ++sy)
    for (int sx = 0; sx < 4; ++sx)
      if (inside(y + (sy + 0.5) / 4.0, x + (sx + 0.5) / 4.0)) ++hits;
  return static_cast<float>(hits) / 16.0f;
}

ImageTensor gen_shapes(std::uint64_t seed, Shape shape) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageTensor img = smooth_field(shape, 3.0, rng);
  const double bg_std = 0.1 + 0.2 * u(rng);
  for (int c = 0; c < shape.channels; ++c) {
    const double bg_mean = -0.5 + u(rng);
    const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
    float* p = img.values().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = static_cast<float>(bg_mean + bg_std * p[i]);
  }
  const int count = std::uniform_int_distribution<int>(1, 4)(rng);
  const double H = shape.height, W = shape.width;
  for (int k = 0; k < count; ++k) {
    const bool disc = u(rng) < 0.5;
    const double cy = H * u(rng), cx = W * u(rng);
    const double a = 2.5 + 0.25 * W * u(rng), b = 2.5 + 0.25 * H * u(rng);
    std::vector<float> level(static_cast<std::size_t>(shape.channels));
    for (float& v : level) v = static_cast<float>(-0.9 + 1.8 * u(rng));
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x) {
        const float cov = disc ? coverage(y, x, [&](double py, double px) {
          return (py - cy) * (py - cy) + (px - cx) * (px - cx) <= a * a;
        })
                               : coverage(y, x, [&](double py, double px) {
                                   return std::abs(py - cy) <= b && std::abs(px - cx) <= a;
                                 });
        if (cov == 0.0f) continue;
        for (int c = 0; c < shape.channels; ++c)
          img.at(c, y, x) = (1.0f - cov) * img.at(c, y, x) + cov * level[static_cast<std::size_t>(c)];
      }
  }
  return clamp(std::move(img), -1.0f, 1.0f);
}

ImageTensor gen_fields(std::uint64_t seed, Shape shape) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageTensor img(shape);
  for (double sigma : {1.0, 2.0, 4.0}) {
    const ImageTensor f = smooth_field(shape, sigma, rng);
    const float w = static_cast<float>(0.05 + 0.25 * u(rng));
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += w * f[i];
  }
  const float offset = static_cast<float>(-0.4 + 0.8 * u(rng));
  for (float& v : img.values()) v += offset;
  return clamp(std::move(img), -1.0f, 1.0f);
}

// Shapes plus per-pixel Gaussian grain, like a sensor noise floor.
ImageTensor gen_shapes_grain(std::uint64_t seed, Shape shape) {
  ImageTensor img = gen_shapes(seed, shape);
  Rng rng(mix_seed(seed, {tag_hash("grain")}));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const float level = static_cast<float>(0.02 + 0.03 * u(rng));
  const ImageTensor n = standard_normal(shape, rng);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] += level * n[i];
  return clamp(std::move(img), -1.0f, 1.0f);
}

std::string pad_index(std::uint64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05llu", static_cast<unsigned long long>(i));
  return buf;
}

const char* label_name(Label l) { return l == Label::Real ? "real" : "gen"; }

std::string record_context(const ManifestRecord& r) { return "record " + r.id; }

}  // namespace

bool is_real_family(const std::string& family) { return family == "shapes" || family == "fields" || family == "shapes+grain";
}

ImageTensor gen_real_one(const std::string& family, std::uint64_t seed, Shape shape) {
  if (family == "shapes") return gen_shapes(seed, shape);
  if (family == "fields") return gen_fields(seed, shape);
  if (family == "shapes+grain") return gen_shapes_grain(seed, shape);
  throw std::invalid_argument("gen_real: unknown family '" + family + "'");
}

ImageBatch gen_real(const std::string& family, std::uint64_t seed, int count, Shape shape,
                    std::uint64_t first_index, int jobs) {
  if (!is_real_family(family)) throw std::invalid_argument("gen_real: unknown family '" + family + "'");
  if (count < 1) throw std::invalid_argument("gen_real: n must be >= 1");
  ImageBatch out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static) num_threads(jobs) if (jobs > 1)
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] =
        gen_real_one(family, mix_seed(seed, {0x7265616cULL, first_index + static_cast<std::uint64_t>(i)}), shape);
  return out;
}

void to_json(nlohmann::json& j, const SamplerSpec& s) {
  j = {{"tag", s.tag}, {"kind", s.kind}, {"steps", s.steps}, {"model", s.model}, {"seen", s.seen}};
}

void from_json(const nlohmann::json& j, SamplerSpec& s) {
  j.at("tag").get_to(s.tag);
  j.at("kind").get_to(s.kind);
  j.at("steps").get_to(s.steps);
  j.at("model").get_to(s.model);
  j.at("seen").get_to(s.seen);
}

std::vector<SamplerSpec> default_samplers() {
  return {{"ddim20", "ddim", 20, "primary", true},
          {"ddim5", "ddim", 5, "primary", false},
          {"ddim50", "ddim", 50, "primary", false},
          {"ddpm", "ddpm", 0, "primary", false},
          {"seed2", "ddim", 20, "secondary", false}};
}

void DatasetConfig::validate() const {
  if (!is_real_family(real_family)) throw std::invalid_argument("dataset: unknown real family '" + real_family + "'");
  if (train_per_class < 1 || val_per_class < 1 || test_per_class < 1)
    throw std::invalid_argument("dataset: per-class counts must be >= 1");
  if (recon_steps < 1) throw std::invalid_argument("dataset: recon_steps must be >= 1");
  if (samplers.empty()) throw std::invalid_argument("dataset: no samplers configured");
  std::set<std::string> tags;
  for (const auto& s : samplers) {
    if (s.tag.empty() || s.tag.find_first_of("/\\. ") != std::string::npos)
      throw std::invalid_argument("dataset: bad sampler tag '" + s.tag + "'");
    if (!tags.insert(s.tag).second) throw std::invalid_argument("dataset: duplicate sampler tag " + s.tag);
    if (s.kind != "ddim" && s.kind != "ddpm")
      throw std::invalid_argument("dataset: sampler " + s.tag + " has unknown kind " + s.kind);
    if (s.kind == "ddim" && s.steps < 1) throw std::invalid_argument("dataset: sampler " + s.tag + " needs steps >= 1");
    if (s.model != "primary" && s.model != "secondary")
      throw std::invalid_argument("dataset: sampler " + s.tag + " model must be primary or secondary");
  }
}

int DatasetConfig::count(Split split) const {
  switch (split) {
    case Split::Train: return train_per_class;
    case Split::Val: return val_per_class;
    case Split::Test: return test_per_class;
  }
  return 0;
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"real_family", c.real_family}, {"train_per_class", c.train_per_class},
       {"val_per_class", c.val_per_class}, {"test_per_class", c.test_per_class},
       {"recon_steps", c.recon_steps},     {"use_abs", c.use_abs},
       {"seed", c.seed},                   {"samplers", c.samplers}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
  j.at("real_family").get_to(c.real_family);
  j.at("train_per_class").get_to(c.train_per_class);
  j.at("val_per_class").get_to(c.val_per_class);
  j.at("test_per_class").get_to(c.test_per_class);
  j.at("recon_steps").get_to(c.recon_steps);
  j.at("use_abs").get_to(c.use_abs);
  j.at("seed").get_to(c.seed);
  j.at("samplers").get_to(c.samplers);
}

void to_json(nlohmann::json& j, const ManifestRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"label", static_cast<int>(r.label)},
                     {"sampler_tag", r.sampler_tag},
                     {"split", to_string(r.split)},
                     {"seed", r.seed},
                     {"index", r.index},
                     {"signed_residual", r.signed_residual},
                     {"files", {{"source", r.source}, {"reconstruction", r.reconstruction}, {"dire", r.dire}}},
                     {"hashes",
                      {{"source", r.source_hash}, {"reconstruction", r.reconstruction_hash}, {"dire", r.dire_hash}}}};
}

void from_json(const nlohmann::json& j, ManifestRecord& r) {
  j.at("id").get_to(r.id);
  const int label = j.at("label").get<int>();
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
  r.label = static_cast<Label>(label);
  j.at("sampler_tag").get_to(r.sampler_tag);
  r.split = parse_split(j.at("split").get<std::string>());
  j.at("seed").get_to(r.seed);
  j.at("index").get_to(r.index);
  j.at("signed_residual").get_to(r.signed_residual);
  const auto& f = j.at("files");
  f.at("source").get_to(r.source);
  f.at("reconstruction").get_to(r.reconstruction);
  f.at("dire").get_to(r.dire);
  const auto& h = j.at("hashes");
  h.at("source").get_to(r.source_hash);
  h.at("reconstruction").get_to(r.reconstruction_hash);
  h.at("dire").get_to(r.dire_hash);
}

void write_manifest(const DatasetManifest& m) {
  std::string text;
  for (const auto& r : m.records) text += nlohmann::json(r).dump() + "\n";
  io::write_text_atomic(m.root / kManifestName, text);
}

DatasetManifest read_manifest(const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  std::istringstream in(io::read_text(root / kManifestName));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.records.push_back(nlohmann::json::parse(line).get<ManifestRecord>());
    } catch (const std::exception& e) {
      throw std::runtime_error((root / kManifestName).string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

namespace {

ImageTensor load_checked(const fs::path& root, const ManifestRecord& r, const std::string& rel,
                         const std::string& hash) {
  const fs::path p = root / rel;
  if (!fs::exists(p)) throw std::runtime_error(record_context(r) + ": missing file " + p.string());
  const auto bytes = io::read_file(p);
  if (io::content_hash(bytes) != hash) throw std::runtime_error(record_context(r) + ": hash mismatch for " + p.string());
  try {
    return io::decode_tensor(bytes, p.string());
  } catch (const std::exception& e) {
    throw std::runtime_error(record_context(r) + ": " + e.what());
  }
}

DireTriple load_record(const DatasetManifest& m, const ManifestRecord& r) {
  DireTriple t;
  t.id = r.id;
  t.label = r.label;
  t.sampler_tag = r.sampler_tag;
  t.split = r.split;
  t.seed = r.seed;
  t.signed_residual = r.signed_residual;
  t.source = load_checked(m.root, r, r.source, r.source_hash);
  t.reconstruction = load_checked(m.root, r, r.reconstruction, r.reconstruction_hash);
  t.dire = load_checked(m.root, r, r.dire, r.dire_hash);
  validate_triple(t);
  return t;
}

}  // namespace

void validate_manifest(const DatasetManifest& m, const DatasetConfig* cfg) {
  std::set<std::string> ids;
  // (tag, split) -> {real, generated}
  std::map<std::pair<std::string, Split>, std::array<int, 2>> counts;
  for (const auto& r : m.records) {
    if (!ids.insert(r.id).second) throw std::runtime_error(record_context(r) + ": duplicate id");
    (void)load_record(m, r);
    counts[{r.sampler_tag, r.split}][static_cast<int>(r.label)]++;
  }
  std::map<std::string, std::array<int, 2>> per_tag;
  for (const auto& [key, c] : counts) {
    per_tag[key.first][0] += c[0];
    per_tag[key.first][1] += c[1];
  }
  for (const auto& [tag, c] : per_tag)
    if (c[0] != c[1])
      throw std::runtime_error("sampler " + tag + ": " + std::to_string(c[0]) + " real vs " + std::to_string(c[1]) +
                               " generated records");
  if (!cfg) return;
  for (const auto& s : cfg->samplers) {
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
      const bool present = s.seen || split == Split::Test;
      const auto it = counts.find({s.tag, split});
      const std::array<int, 2> c = it == counts.end() ? std::array<int, 2>{0, 0} : it->second;
      const int want = present ? cfg->count(split) : 0;
      if (c[0] != want || c[1] != want)
        throw std::runtime_error("sampler " + s.tag + " split " + to_string(split) + ": expected " +
                                 std::to_string(want) + " per class, found " + std::to_string(c[0]) + "/" +
                                 std::to_string(c[1]));
    }
  }
  for (const auto& [tag, c] : per_tag) {
    (void)c;
    if (std::none_of(cfg->samplers.begin(), cfg->samplers.end(), [&](const auto& s) { return s.tag == tag; }))
      throw std::runtime_error("sampler " + tag + " is not in the dataset configuration");
  }
}

std::vector<DireTriple> load_split(const DatasetManifest& m, Split split, const std::vector<std::string>& tags) {
  std::vector<DireTriple> out;
  for (const auto& r : m.records) {
    if (r.split != split) continue;
    if (!tags.empty() && std::find(tags.begin(), tags.end(), r.sampler_tag) == tags.end()) continue;
    out.push_back(load_record(m, r));
  }
  return out;
}

const EpsModel& Models::get(const std::string& name) const {
  const EpsModel* m = name == "primary" ? primary : name == "secondary" ? secondary : nullptr;
  if (!m) throw std::invalid_argument("no " + name + " diffusion model available");
  return *m;
}

ImageBatch generate_images(const SamplerSpec& spec, const Models& models, std::uint64_t seed, int count, int jobs) {
  const EpsModel& model = models.get(spec.model);
  const Shape shape = model.config().image_shape();
  if (spec.kind == "ddpm") return ddpm_generate(model, model.schedule(), seed, count, shape, 0, jobs);
  if (spec.kind == "ddim")
    return ddim_generate(model, model.schedule(), make_subsequence(model.schedule().steps(), spec.steps), seed,
                         count, shape, 0, jobs);
  throw std::invalid_argument("unknown sampler kind " + spec.kind);
}

DatasetManifest build_dataset(const Models& models, const DatasetConfig& cfg, const fs::path& root, int jobs,
                              const LogFn& log) {
  cfg.validate();
  const EpsModel& recon = models.get("primary");
  for (const auto& s : cfg.samplers) (void)models.get(s.model);
  const Shape shape = recon.config().image_shape();
  const StepSequence seq = make_subsequence(recon.schedule().steps(), cfg.recon_steps);

  fs::create_directories(root);
  for (const auto& s : cfg.samplers) fs::remove_all(root / s.tag);

  DatasetManifest m;
  m.root = root;
  for (const auto& s : cfg.samplers) {
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
      if (!s.seen && split != Split::Test) continue;
      const int n = cfg.count(split);
      const std::uint64_t words = tag_hash(s.tag);
      const std::uint64_t real_seed = mix_seed(cfg.seed, {0x7265616cULL, words, static_cast<std::uint64_t>(split)});
      const std::uint64_t gen_seed = mix_seed(cfg.seed, {0x67656eULL, words, static_cast<std::uint64_t>(split)});
      if (log) log("dataset: " + s.tag + "/" + to_string(split) + " generating " + std::to_string(n) + " per class");
      const ImageBatch real = gen_real(cfg.real_family, real_seed, n, shape, 0, jobs);
      const ImageBatch gen = generate_images(s, models, gen_seed, n, jobs);
      const fs::path dir = fs::path(s.tag) / to_string(split);
      fs::create_directories(root / dir);
      for (Label label : {Label::Real, Label::Generated}) {
        const ImageBatch& src = label == Label::Real ? real : gen;
        if (log) log("dataset: " + s.tag + "/" + to_string(split) + " reconstructing " + label_name(label));
        const auto triples = compute_dire_batch(src, recon, recon.schedule(), seq, cfg.use_abs, jobs);
        for (std::size_t i = 0; i < triples.size(); ++i) {
          ManifestRecord r;
          r.id = s.tag + "-" + to_string(split) + "-" + label_name(label) + "-" + pad_index(i);
          r.label = label;
          r.sampler_tag = s.tag;
          r.split = split;
          r.seed = label == Label::Real ? real_seed : gen_seed;
          r.index = i;
          r.signed_residual = !cfg.use_abs;
          auto put = [&](const ImageTensor& t, const char* ext, std::string& rel, std::string& hash) {
            const auto bytes = io::encode_tensor(t);
            rel = (dir / (r.id + ext)).generic_string();
            io::write_file_atomic(root / rel, bytes);
            hash = io::content_hash(bytes);
          };
          put(triples[i].source, ".src.dtf", r.source, r.source_hash);
          put(triples[i].reconstruction, ".rec.dtf", r.reconstruction, r.reconstruction_hash);
          put(triples[i].dire, ".dire.dtf", r.dire, r.dire_hash);
          m.records.push_back(std::move(r));
        }
      }
    }
  }
  write_manifest(m);
  return m;
}

}  // namespace dire
