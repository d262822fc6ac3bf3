#include <doctest.h>

#include <map>
#include <sstream>

#include "dire/cli.hpp"
#include "dire/evaluate.hpp"
#include "dire/io.hpp"
#include "support.hpp"

using namespace dire;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kTiny = DIRE_TEST_DATA "/tiny_config.json";

struct Result {
  int status;
  std::string out, err;
};

Result dire_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dire");
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

std::map<std::string, std::string> hashes(const fs::path& root) {
  std::map<std::string, std::string> h;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) h[fs::relative(e.path(), root).string()] = io::content_hash(io::read_file(e.path()));
  return h;
}

json error_line(const std::string& err) {
  const auto nl = err.find('\n');
  return json::parse(err.substr(0, nl));
}

}  // namespace

TEST_CASE("config overrides") {
  json cfg = cli::default_config();
  CHECK(cfg["diffusion"]["seed"].is_null());
  CHECK(cfg["dataset"]["recon_steps"] == 20);
  cli::apply_assignment(cfg, "dataset.recon_steps=5");
  CHECK(cfg["dataset"]["recon_steps"] == 5);
  cli::apply_assignment(cfg, "diffusion.learning_rate=1");
  CHECK(cfg["diffusion"]["learning_rate"].is_number_float());
  cli::apply_assignment(cfg, "dataset.real_family=fields");
  CHECK(cfg["dataset"]["real_family"] == "fields");
  cli::apply_assignment(cfg, "eval.perturbations=[\"none\",\"jpeg:30\"]");
  CHECK(cfg["eval"]["perturbations"].size() == 2);
  cli::apply_assignment(cfg, "diffusion.seed=18446744073709551615");
  CHECK(cfg["diffusion"]["seed"].get<std::uint64_t>() == 18446744073709551615ull);
  CHECK_THROWS_AS(cli::apply_assignment(cfg, "diffusion.seed=-1"), cli::CliError);
  CHECK_THROWS_AS(cli::apply_assignment(cfg, "dataset.recon_steps=2.5"), cli::CliError);
  CHECK_THROWS_AS(cli::apply_assignment(cfg, "dataset.use_abs=1"), cli::CliError);
  CHECK_THROWS_AS(cli::apply_assignment(cfg, "dataset.nope=1"), cli::CliError);
  CHECK_THROWS_AS(cli::apply_assignment(cfg, "dataset..seed=1"), cli::CliError);
  CHECK_THROWS_AS(cli::apply_assignment(cfg, "noequals"), cli::CliError);

  json merged = cli::default_config();
  cli::merge_config(merged, json{{"epsnet", {{"base_width", 8}}}, {"detector", {{"train", {{"seed", nullptr}}}}}});
  CHECK(merged["epsnet"]["base_width"] == 8);
  CHECK(merged["epsnet"]["levels"] == 2);
  CHECK_THROWS_AS(cli::merge_config(merged, json{{"epsnet", {{"depth", 3}}}}), cli::CliError);
  // A resolved config overlays onto the defaults as a fixed point.
  json again = cli::default_config();
  cli::merge_config(again, merged);
  CHECK(again == merged);
}

TEST_CASE("usage and configuration errors") {
  testing::TempDir dir("cli-errors");
  const std::string w = dir.path.string();

  Result r = dire_cli({"eval", "--workdir", w, "--frobnicate"});
  CHECK(r.status != 0);
  CHECK(error_line(r.err)["error"] == "usage");
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(r.out.empty());

  r = dire_cli({"transmogrify"});
  CHECK(r.status != 0);
  CHECK(r.err.find("Usage") != std::string::npos);

  r = dire_cli({"train-diffusion", "--workdir", w});
  CHECK(r.status == 1);
  CHECK(error_line(r.err)["error"] == "config");
  CHECK(error_line(r.err)["message"].get<std::string>().find("diffusion.seed") != std::string::npos);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  r = dire_cli({"build-dataset", "--workdir", w, "--config", kTiny});
  CHECK(r.status == 1);
  CHECK(error_line(r.err)["error"] == "missing_file");

  r = dire_cli({"eval", "--workdir", w + "/absent", "--config", kTiny});
  CHECK(error_line(r.err)["error"] == "missing_file");

  r = dire_cli({"eval", "--workdir", w, "--config", w + "/absent.json"});
  CHECK(error_line(r.err)["error"] == "missing_file");

  r = dire_cli({"ablate", "sideways", "--workdir", w, "--config", kTiny});
  CHECK(r.status == 2);

  r = dire_cli({"--help"});
  CHECK(r.status == 0);
  CHECK(r.out.find("train-diffusion") != std::string::npos);
}

TEST_CASE("full pipeline on a tiny config, conflicts, and replay") {
  testing::TempDir dir("cli-pipeline");
  const std::string w = dir.path.string();
  const std::vector<std::string> base{"--workdir", w, "--config", kTiny};
  auto cmd = [&](std::vector<std::string> head, std::vector<std::string> extra = {}) {
    head.insert(head.end(), base.begin(), base.end());
    head.insert(head.end(), extra.begin(), extra.end());
    const Result r = dire_cli(head);
    INFO(r.err);
    REQUIRE(r.status == 0);
    return r;
  };
  cmd({"train-diffusion"});
  cmd({"train-diffusion", "--secondary"});
  cmd({"build-dataset"}, {"--jobs", "2"});
  cmd({"train-detector"});
  const Result e1 = cmd({"eval"});
  const std::string report1 = io::read_text(dir.path / "eval/report.jsonl");
  CHECK(e1.out.find("seen") != std::string::npos);
  const EvalReport rep = EvalReport::from_jsonl(report1);
  CHECK(rep.cells.size() == 4 * 3);
  CHECK(rep.find("seen", "DIRE", 4, "none") != nullptr);

  SUBCASE("eval twice gives identical reports") {
    cmd({"eval"}, {"--jobs", "3"});
    CHECK(io::read_text(dir.path / "eval/report.jsonl") == report1);
  }

  SUBCASE("disagreeing with upstream configs is a conflict") {
    Result r = dire_cli({"eval", "--workdir", w, "--config", kTiny, "--set", "dataset.recon_steps=3"});
    CHECK(r.status == 1);
    CHECK(error_line(r.err)["error"] == "conflict");
    r = dire_cli({"eval", "--workdir", w, "--config", kTiny, "--set", "detector.input_mode=RGB"});
    CHECK(error_line(r.err)["error"] == "conflict");
    r = dire_cli({"build-dataset", "--workdir", w, "--config", kTiny, "--set", "epsnet.base_width=6"});
    CHECK(error_line(r.err)["error"] == "conflict");
  }

  SUBCASE("eval on the training split is at least the recorded validation accuracy") {
    const json metrics = json::parse(io::read_text(dir.path / "detector/metrics.json"));
    cmd({"eval"}, {"--set", "eval.split=train", "--set", "eval.tags=[\"seen\"]", "--set", "eval.perturbations=[\"none\"]",
                   "--set", "paths.eval=eval-train"});
    const EvalReport tr = EvalReport::from_jsonl(io::read_text(dir.path / "eval-train/report.jsonl"));
    REQUIRE(tr.cells.size() == 1);
    MESSAGE("train ACC " << tr.cells[0].acc << " vs best val ACC " << metrics["best_val_acc"]);
    CHECK(tr.cells[0].acc >= metrics["best_val_acc"].get<double>());
  }

  SUBCASE("replaying stored configs reproduces every file") {
    cmd({"ablate", "steps"});
    cmd({"analyze", "fft"});
    const auto before = hashes(dir.path);
    for (const char* sub : {"diffusion/primary", "diffusion/secondary", "dataset", "detector", "eval", "ablate/steps",
                            "analysis/fft"}) {
      const std::string cfg = (dir.path / sub / cli::kRunConfigName).string();
      const json stored = json::parse(io::read_text(cfg));
      std::string command = "eval";
      if (std::string(sub).starts_with("diffusion")) command = "train-diffusion";
      if (std::string(sub) == "dataset") command = "build-dataset";
      if (std::string(sub) == "detector") command = "train-detector";
      if (std::string(sub).starts_with("ablate")) command = "ablate";
      if (std::string(sub).starts_with("analysis")) command = "analyze";
      const Result r = dire_cli({command, "--workdir", w, "--config", cfg, "--jobs", "3"});
      INFO(sub << ": " << r.err);
      CHECK(r.status == 0);
    }
    CHECK(hashes(dir.path) == before);
  }
}
