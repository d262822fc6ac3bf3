#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "dire/datagen.hpp"
#include "dire/io.hpp"
#include "support.hpp"

using namespace dire;

namespace {

const Shape kShape{1, 8, 8};

EpsModel tiny_model(std::uint64_t seed) {
  return EpsModel::init(EpsNetConfig{1, 8, 4, 2, 8}, linear_schedule(40, 1e-4, 0.05), seed);
}

DatasetConfig tiny_config() {
  DatasetConfig c;
  c.train_per_class = 3;
  c.val_per_class = 2;
  c.test_per_class = 2;
  c.recon_steps = 4;
  c.seed = 77;
  c.samplers = {SamplerSpec{"seen", "ddim", 4, "primary", true}, SamplerSpec{"fast", "ddim", 2, "primary", false},
                SamplerSpec{"anc", "ddpm", 0, "primary", false}, SamplerSpec{"other", "ddim", 4, "secondary", false}};
  return c;
}

std::string file_hash(const fs::path& p) { return io::content_hash(io::read_file(p)); }

}  // namespace

TEST_CASE("real image families") {
  const Shape sh{3, 16, 16};
  for (const std::string fam : {"shapes", "fields", "shapes+grain"}) {
    CAPTURE(fam);
    const ImageBatch a = gen_real(fam, 4, 6, sh);
    const ImageBatch b = gen_real(fam, 4, 6, sh, 0, 3);
    CHECK(a == b);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].shape() == sh);
      for (float v : a[i].values()) CHECK((v >= -1.0f && v <= 1.0f));
      for (std::size_t j = 0; j < i; ++j) CHECK(mean_abs_diff(a[i], a[j]) > 0.05);
    }
    // Index i of a batch does not depend on where the batch starts.
    CHECK(gen_real(fam, 4, 2, sh, 3) == ImageBatch{a[3], a[4]});
    CHECK_FALSE(gen_real(fam, 5, 1, sh) == ImageBatch{a[0]});
  }
  CHECK(is_real_family("shapes"));
  // Grain sits on top of the same scene, at a few hundredths of amplitude.
  {
    const ImageBatch plain = gen_real("shapes", 4, 3, sh), grain = gen_real("shapes+grain", 4, 3, sh);
    for (std::size_t i = 0; i < plain.size(); ++i) {
      const double d = mean_abs_diff(plain[i], grain[i]);
      CHECK(d > 0.005);
      CHECK(d < 0.05);
    }
  }
  CHECK_FALSE(is_real_family("lsun"));
  CHECK_THROWS_AS(gen_real("lsun", 1, 1, sh), std::invalid_argument);
  CHECK_THROWS_AS(gen_real("shapes", 1, 0, sh), std::invalid_argument);
}

TEST_CASE("dataset config validation") {
  DatasetConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.count(Split::Train) == 3);
  c.samplers.push_back(c.samplers.front());
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.samplers[1].kind = "euler";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.test_per_class = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  const nlohmann::json j = c;
  const DatasetConfig back = j.get<DatasetConfig>();
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("build, validate and reload a dataset") {
  const EpsModel primary = tiny_model(1), secondary = tiny_model(2);
  const Models models{&primary, &secondary};
  const DatasetConfig cfg = tiny_config();
  testing::TempDir dir("datagen");
  const fs::path root = dir.path / "ds";

  const DatasetManifest m = build_dataset(models, cfg, root, 2);
  CHECK(fs::exists(root / kManifestName));
  CHECK_NOTHROW(validate_manifest(m, &cfg));
  const DatasetManifest reread = read_manifest(root);
  CHECK(reread.records == m.records);

  SUBCASE("counts per tag, split and label") {
    // seen: 3 + 2 + 2 per class; unseen: test only.
    CHECK(m.records.size() == 2 * (7 + 2 + 2 + 2));
    for (const auto& s : cfg.samplers)
      for (Split sp : {Split::Train, Split::Val, Split::Test}) {
        int real = 0, gen = 0;
        for (const auto& r : m.records)
          if (r.sampler_tag == s.tag && r.split == sp) (r.label == Label::Real ? real : gen)++;
        const int want = (s.seen || sp == Split::Test) ? cfg.count(sp) : 0;
        CHECK(real == want);
        CHECK(gen == want);
      }
  }

  SUBCASE("splits and sources are disjoint") {
    std::set<std::string> ids, hashes;
    for (const auto& r : m.records) {
      CHECK(ids.insert(r.id).second);
      if (r.label == Label::Generated) CHECK(hashes.insert(r.source_hash).second);
    }
    std::set<std::string> real_hashes;
    for (const auto& r : m.records)
      if (r.label == Label::Real && r.sampler_tag == "seen") CHECK(real_hashes.insert(r.source_hash).second);
  }

  SUBCASE("loaded triples replay the stored residuals") {
    const auto test = load_split(m, Split::Test, {"seen", "anc"});
    CHECK(test.size() == 8);
    for (const auto& t : test) {
      CHECK_NOTHROW(validate_triple(t));
      CHECK((t.sampler_tag == "seen" || t.sampler_tag == "anc"));
      CHECK(t.split == Split::Test);
    }
    const StepSequence seq = make_subsequence(primary.schedule().steps(), cfg.recon_steps);
    const DireTriple again = compute_dire(test.front().source, primary, primary.schedule(), seq, cfg.use_abs);
    CHECK(again.reconstruction == test.front().reconstruction);
    CHECK(again.dire == test.front().dire);
    CHECK(load_split(m, Split::Train, {"fast"}).empty());
    CHECK(load_split(m, Split::Train).size() == 6);
  }

  SUBCASE("rebuilding reproduces every file") {
    const DatasetManifest m2 = build_dataset(models, cfg, dir.path / "ds2", 1);
    CHECK(m2.records == m.records);
    CHECK(file_hash(root / kManifestName) == file_hash(dir.path / "ds2" / kManifestName));
  }

  SUBCASE("a corrupted file is named") {
    const ManifestRecord& r = m.records.at(5);
    {
      std::ofstream out(root / r.dire, std::ios::binary | std::ios::app);
      out << 'x';
    }
    try {
      validate_manifest(m);
      FAIL("expected a validation error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(r.id) != std::string::npos);
    }
  }

  SUBCASE("unbalanced manifests are rejected") {
    DatasetManifest cut = m;
    cut.records.pop_back();
    CHECK_THROWS_AS(validate_manifest(cut), std::runtime_error);
  }

  SUBCASE("config mismatch is rejected") {
    DatasetConfig other = cfg;
    other.test_per_class = 5;
    CHECK_THROWS_AS(validate_manifest(m, &other), std::runtime_error);
  }
}

TEST_CASE("generated images depend only on seed and index") {
  const EpsModel primary = tiny_model(1);
  const Models models{&primary, nullptr};
  const SamplerSpec ddim{"d", "ddim", 3, "primary", false}, ddpm{"p", "ddpm", 0, "primary", false};
  for (const auto& spec : {ddim, ddpm}) {
    const ImageBatch a = generate_images(spec, models, 11, 3, 1);
    const ImageBatch b = generate_images(spec, models, 11, 3, 3);
    CHECK(a == b);
    CHECK(a[0] != a[1]);
    for (const auto& img : a) CHECK(img.shape() == kShape);
  }
  CHECK_THROWS_AS(generate_images(SamplerSpec{"s", "ddim", 3, "secondary", false}, models, 1, 1),
                  std::invalid_argument);
}
