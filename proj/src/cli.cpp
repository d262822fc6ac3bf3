#include "dire/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dire/analysis.hpp"
#include "dire/datagen.hpp"
#include "dire/detector.hpp"
#include "dire/evaluate.hpp"
#include "dire/io.hpp"
#include "dire/rng.hpp"
#include "dire/schedule.hpp"

namespace dire::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json default_config() {
  DatasetConfig ds;
  json dataset = ds;
  dataset["seed"] = nullptr;
  DetectorTrainConfig dt;
  json dtrain = dt;
  dtrain["seed"] = nullptr;
  DetectorConfig dnet;
  json net = dnet;
  // Channels and image size follow the dataset.
  net.erase("in_channels");
  net.erase("image_size");
  return {
      {"schedule", {{"T", 200}, {"beta_start", 1e-4}, {"beta_end", 0.02}}},
      {"epsnet", EpsNetConfig{}},
      {"diffusion",
       {{"model", "primary"},
        {"real_family", "shapes"},
        {"batch_size", 64},
        {"learning_rate", 2e-4},
        {"steps", 20000},
        {"log_every", 250},
        {"seed", nullptr},
        {"secondary_seed", nullptr}}},
      {"dataset", dataset},
      {"detector", {{"input_mode", "DIRE"}, {"network", net}, {"train", dtrain}}},
      {"eval",
       {{"split", "test"},
        {"tags", json::array()},
        {"perturbations", {"none", "blur:1", "blur:2", "blur:3", "jpeg:65", "jpeg:30"}},
        {"steps", 20},
        {"use_abs", true}}},
      {"ablate",
       {{"kind", "steps"}, {"steps", {5, 10, 20, 50}}, {"input_modes", {"RGB", "REC", "DIRE", "RGB_AND_DIRE"}}}},
      {"analyze", {{"kind", "fft"}, {"input", "dataset/ddim20/test"}}},
      {"paths",
       {{"diffusion", "diffusion/primary"},
        {"secondary", "diffusion/secondary"},
        {"dataset", "dataset"},
        {"detector", "detector"},
        {"eval", "eval"},
        {"ablate", "ablate"},
        {"analyze", "analysis"}}},
  };
}

namespace {

std::vector<std::string> split_key(const std::string& dotted) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty() || std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); }))
    throw CliError("config", "malformed config key '" + dotted + "'");
  return parts;
}

// Seeds are null until set and then hold unsigned integers.
bool seed_key(const std::string& dotted) {
  return dotted.size() >= 4 && (dotted.ends_with(".seed") || dotted.ends_with("_seed"));
}

void check_type(const std::string& key, const json& old, const json& value) {
  auto fail = [&](const char* want) {
    throw CliError("config", "config key '" + key + "' expects " + want + ", got " + value.dump());
  };
  if (seed_key(key)) {
    if (!value.is_number_unsigned()) fail("a non-negative integer seed");
    return;
  }
  if (old.is_boolean() && !value.is_boolean()) fail("a boolean");
  if (old.is_number_integer() && !value.is_number_integer()) fail("an integer");
  if (old.is_number_float() && !value.is_number()) fail("a number");
  if (old.is_string() && !value.is_string()) fail("a string");
  if (old.is_array() && !value.is_array()) fail("an array");
  if (old.is_object() && !value.is_object()) fail("an object");
}

}  // namespace

void set_key(json& cfg, const std::string& dotted, const json& value) {
  json* node = &cfg;
  for (const std::string& part : split_key(dotted)) {
    if (!node->is_object() || !node->contains(part)) throw CliError("config", "unknown config key '" + dotted + "'");
    node = &(*node)[part];
  }
  check_type(dotted, *node, value);
  *node = value.is_number_integer() && node->is_number_float() ? json(value.get<double>()) : value;
}

void apply_assignment(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw CliError("usage", "--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_key(cfg, key, value);
}

void merge_config(json& cfg, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw CliError("config", "config file must hold a JSON object");
  for (const auto& [k, v] : patch.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    json* node = &cfg;
    for (const std::string& part : split_key(key)) {
      if (!node->is_object() || !node->contains(part)) throw CliError("config", "unknown config key '" + key + "'");
      node = &(*node)[part];
    }
    if (node->is_object() && v.is_object())
      merge_config(cfg, v, key);
    else if (!(v.is_null() && seed_key(key)))
      set_key(cfg, key, v);
  }
}

namespace {

struct Context {
  std::string command;
  fs::path workdir;
  json cfg;
  int jobs = 1;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  fs::path path(const std::string& key) const { return workdir / cfg.at("paths").at(key).get<std::string>(); }
  void log(const std::string& line) const { *err << command << ": " << line << std::endl; }
};

const json& at(const json& cfg, const std::string& dotted) {
  const json* node = &cfg;
  for (const std::string& part : split_key(dotted)) node = &node->at(part);
  return *node;
}

std::uint64_t require_seed(const Context& ctx, const std::string& dotted) {
  const json& v = at(ctx.cfg, dotted);
  if (v.is_null())
    throw CliError("config", "seed '" + dotted + "' is required (set it with --set " + dotted + "=N or in --config)");
  return v.get<std::uint64_t>();
}

fs::path require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw CliError("missing_file", what + " not found: " + p.string());
  return p;
}

void write_run_config(const Context& ctx, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_text_atomic(dir / kRunConfigName, ctx.cfg.dump(2) + "\n");
}

json read_run_config(const fs::path& dir, const std::string& what) {
  const fs::path p = require_file(dir / kRunConfigName, what + " run config");
  const json j = json::parse(io::read_text(p), nullptr, false);
  if (j.is_discarded()) throw CliError("invalid_data", p.string() + ": not valid JSON");
  return j;
}

// Sections of an upstream artifact's config that this run must agree with.
void require_same(const Context& ctx, const json& upstream, const fs::path& where,
                  const std::vector<std::string>& sections) {
  for (const std::string& s : sections) {
    const json& mine = at(ctx.cfg, s);
    const json* theirs = &upstream;
    for (const std::string& part : split_key(s)) {
      if (!theirs->contains(part)) throw CliError("conflict", where.string() + " has no '" + s + "' section");
      theirs = &theirs->at(part);
    }
    if (mine != *theirs) {
      std::string detail;
      if (mine.is_object())
        for (const auto& [k, v] : mine.items())
          if (!theirs->contains(k) || theirs->at(k) != v) {
            detail = "." + k;
            break;
          }
      throw CliError("conflict", "config '" + s + detail + "' differs from " + where.string());
    }
  }
}

NoiseSchedule schedule_of(const json& cfg) {
  const json& s = cfg.at("schedule");
  return linear_schedule(s.at("T").get<int>(), s.at("beta_start").get<double>(), s.at("beta_end").get<double>());
}

DatasetConfig dataset_of(const json& cfg) {
  json d = cfg.at("dataset");
  if (d.at("seed").is_null()) d["seed"] = 0;
  return d.get<DatasetConfig>();
}

DetectorRecipe recipe_of(const json& cfg) {
  json net = cfg.at("detector").at("network");
  net["in_channels"] = 1;
  net["image_size"] = cfg.at("epsnet").at("image_size");
  json train = cfg.at("detector").at("train");
  if (train.at("seed").is_null()) train["seed"] = 0;
  return {net.get<DetectorConfig>(), train.get<DetectorTrainConfig>()};
}

EpsModel load_diffusion(const Context& ctx, const std::string& key) {
  const fs::path p = require_file(ctx.path(key) / "model.dirm", key + " diffusion checkpoint");
  EpsModel m = EpsModel::load(p);
  if (json(m.config()) != ctx.cfg.at("epsnet"))
    throw CliError("conflict", "config 'epsnet' differs from the architecture in " + p.string());
  const NoiseSchedule sched = schedule_of(ctx.cfg);
  if (m.schedule().steps() != sched.steps() || m.schedule().alpha_bar() != sched.alpha_bar())
    throw CliError("conflict", "config 'schedule' differs from the schedule in " + p.string());
  return m;
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------- commands

void cmd_train_diffusion(Context& ctx) {
  const std::string which = at(ctx.cfg, "diffusion.model").get<std::string>();
  if (which != "primary" && which != "secondary")
    throw CliError("config", "diffusion.model must be primary or secondary, got " + which);
  const std::uint64_t seed = require_seed(ctx, which == "primary" ? "diffusion.seed" : "diffusion.secondary_seed");
  const json& d = ctx.cfg.at("diffusion");
  const std::string family = d.at("real_family").get<std::string>();
  if (!is_real_family(family)) throw CliError("config", "unknown real family '" + family + "'");
  const EpsNetConfig net = ctx.cfg.at("epsnet").get<EpsNetConfig>();
  TrainConfig tc;
  tc.batch_size = d.at("batch_size").get<int>();
  tc.learning_rate = d.at("learning_rate").get<double>();
  tc.steps = d.at("steps").get<int>();
  tc.seed = seed;
  const int log_every = std::max(1, d.at("log_every").get<int>());

  const fs::path dir = ctx.path(which == "primary" ? "diffusion" : "secondary");
  write_run_config(ctx, dir);
  EpsModel model = EpsModel::init(net, schedule_of(ctx.cfg), mix_seed(seed, {tag_hash("init")}));
  // Training images are drawn from an unbounded procedural stream.
  const std::uint64_t data_seed = mix_seed(seed, {tag_hash("diffusion-data")});
  const ImageSource source = [&](std::uint64_t i) {
    return gen_real_one(family, mix_seed(data_seed, {i}), net.image_shape());
  };
  std::string csv = "step,loss\n";
  double window = 0.0;
  const TrainResult res = train_diffusion(model, source, std::uint64_t{1} << 48, tc, [&](int step, double loss) {
    csv += std::to_string(step + 1) + "," + csv_number(loss) + "\n";
    window += loss;
    if ((step + 1) % log_every == 0) {
      ctx.log("step " + std::to_string(step + 1) + " loss " + csv_number(window / log_every));
      window = 0.0;
    }
  });
  model.save(dir / "model.dirm", nn::AdamConfig{tc.learning_rate});
  io::write_text_atomic(dir / "loss.csv", csv);
  *ctx.out << (dir / "model.dirm").string() << "\n";
}

void cmd_build_dataset(Context& ctx) {
  require_seed(ctx, "dataset.seed");
  const DatasetConfig cfg = dataset_of(ctx.cfg);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError("config", e.what());
  }
  const EpsModel primary = load_diffusion(ctx, "diffusion");
  std::optional<EpsModel> secondary;
  if (std::any_of(cfg.samplers.begin(), cfg.samplers.end(), [](const auto& s) { return s.model == "secondary"; }))
    secondary = load_diffusion(ctx, "secondary");
  const fs::path root = ctx.path("dataset");
  write_run_config(ctx, root);
  const Models models{&primary, secondary ? &*secondary : nullptr};
  build_dataset(models, cfg, root, ctx.jobs, [&](const std::string& s) { ctx.log(s); });
  *ctx.out << (root / kManifestName).string() << "\n";
}

struct DatasetView {
  DatasetManifest manifest;
  DatasetConfig cfg;
  std::vector<std::string> seen;
};

DatasetView open_dataset(const Context& ctx) {
  const fs::path root = ctx.path("dataset");
  require_file(root / kManifestName, "dataset manifest");
  require_same(ctx, read_run_config(root, "dataset"), root / kRunConfigName, {"schedule", "epsnet", "dataset"});
  DatasetView v{read_manifest(root), dataset_of(ctx.cfg), {}};
  validate_manifest(v.manifest, &v.cfg);
  for (const auto& s : v.cfg.samplers)
    if (s.seen) v.seen.push_back(s.tag);
  if (v.seen.empty()) throw CliError("config", "no sampler is marked seen; nothing to train on");
  return v;
}

void cmd_train_detector(Context& ctx) {
  const std::uint64_t seed = require_seed(ctx, "detector.train.seed");
  const DatasetView ds = open_dataset(ctx);
  const InputMode mode = parse_input_mode(at(ctx.cfg, "detector.input_mode").get<std::string>());
  const auto train = load_split(ds.manifest, Split::Train, ds.seen);
  const auto val = load_split(ds.manifest, Split::Val, ds.seen);
  const fs::path dir = ctx.path("detector");
  write_run_config(ctx, dir);
  DetectorRecipe recipe = recipe_of(ctx.cfg);
  recipe.train.seed = seed;
  ctx.log("training " + to_string(mode) + " detector on " + std::to_string(train.size()) + " triples");
  const DetectorTrainResult info = fit_detector(mode, train, val, recipe, ctx.jobs);
  const Detector& det = info.model;
  const json meta = {{"input_mode", to_string(mode)},
                     {"best_step", info.best_step},
                     {"best_val_acc", info.best_val_acc},
                     {"train_tags", ds.seen}};
  det.save(dir / "detector.dird", meta);
  json metrics = meta;
  metrics["val_acc_trace"] = info.val_acc_trace;
  metrics["loss_trace"] = info.loss_trace;
  io::write_text_atomic(dir / "metrics.json", metrics.dump() + "\n");
  ctx.log("best validation ACC " + csv_number(info.best_val_acc) + " at step " + std::to_string(info.best_step));
  *ctx.out << (dir / "detector.dird").string() << "\n";
}

void write_report(const Context& ctx, const fs::path& dir, const EvalReport& report) {
  io::write_text_atomic(dir / "report.jsonl", report.to_jsonl());
  const std::string grid = report.grid();
  io::write_text_atomic(dir / "grid.txt", grid);
  *ctx.out << grid;
}

std::vector<std::string> eval_tags(const Context& ctx) { return at(ctx.cfg, "eval.tags").get<std::vector<std::string>>(); }

void cmd_eval(Context& ctx) {
  const std::uint64_t seed = require_seed(ctx, "detector.train.seed");
  const DatasetView ds = open_dataset(ctx);
  const fs::path det_dir = ctx.path("detector");
  require_file(det_dir / "detector.dird", "detector checkpoint");
  require_same(ctx, read_run_config(det_dir, "detector"), det_dir / kRunConfigName, {"dataset", "detector"});
  const Detector det = Detector::load(det_dir / "detector.dird");
  const EpsModel recon = load_diffusion(ctx, "diffusion");
  const json& e = ctx.cfg.at("eval");
  const Split split = parse_split(e.at("split").get<std::string>());
  EvalConditions cond;
  cond.perturbations.clear();
  for (const auto& p : e.at("perturbations")) cond.perturbations.push_back(Perturbation::parse(p.get<std::string>()));
  if (cond.perturbations.empty()) throw CliError("config", "eval.perturbations is empty");
  cond.steps = e.at("steps").get<int>();
  cond.use_abs = e.at("use_abs").get<bool>();
  cond.seed = seed;
  const auto triples = load_split(ds.manifest, split, eval_tags(ctx));
  if (triples.empty()) throw CliError("invalid_data", "no " + to_string(split) + " triples for the requested tags");
  const fs::path dir = ctx.path("eval");
  write_run_config(ctx, dir);
  const InputMode mode = parse_input_mode(at(ctx.cfg, "detector.input_mode").get<std::string>());
  ctx.log("scoring " + std::to_string(triples.size()) + " triples under " + std::to_string(cond.perturbations.size()) +
          " perturbation(s)");
  const EvalReport report = evaluate(det, mode, triples, recon, ds.cfg.recon_steps, cond, ctx.jobs);
  write_report(ctx, dir, report);
}

void cmd_ablate(Context& ctx) {
  const std::uint64_t seed = require_seed(ctx, "detector.train.seed");
  const std::string kind = at(ctx.cfg, "ablate.kind").get<std::string>();
  if (kind != "steps" && kind != "abs" && kind != "input-mode")
    throw CliError("config", "ablate.kind must be steps, abs or input-mode, got " + kind);
  const DatasetView ds = open_dataset(ctx);
  const EpsModel recon = load_diffusion(ctx, "diffusion");
  const auto train = load_split(ds.manifest, Split::Train, ds.seen);
  const auto val = load_split(ds.manifest, Split::Val, ds.seen);
  const auto test = load_split(ds.manifest, Split::Test, eval_tags(ctx));
  const fs::path dir = ctx.path("ablate") / kind;
  write_run_config(ctx, dir);
  DetectorRecipe recipe = recipe_of(ctx.cfg);
  recipe.train.seed = seed;
  const AblationData data{&train, &val, &test, &recon, ds.cfg.recon_steps};
  const ProgressFn log = [&](const std::string& s) { ctx.log(s); };
  EvalReport report;
  if (kind == "steps") {
    report = ablate_steps(data, at(ctx.cfg, "ablate.steps").get<std::vector<int>>(), recipe, ctx.jobs, log);
  } else if (kind == "abs") {
    report = ablate_abs(data, recipe, ctx.jobs, log);
  } else {
    std::vector<InputMode> modes;
    for (const auto& m : at(ctx.cfg, "ablate.input_modes")) modes.push_back(parse_input_mode(m.get<std::string>()));
    report = ablate_input_mode(data, modes, recipe, ctx.jobs, log);
  }
  write_report(ctx, dir, report);
}

void cmd_analyze(Context& ctx) {
  const std::string kind = at(ctx.cfg, "analyze.kind").get<std::string>();
  if (kind != "fft" && kind != "noise") throw CliError("config", "analyze.kind must be fft or noise, got " + kind);
  const fs::path input = ctx.workdir / at(ctx.cfg, "analyze.input").get<std::string>();
  if (!fs::is_directory(input)) throw CliError("missing_file", "analysis input directory not found: " + input.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input))
    if (entry.is_regular_file() && entry.path().extension() == ".dtf") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw CliError("missing_file", "no .dtf images in " + input.string());
  const fs::path dir = ctx.path("analyze") / kind;
  fs::remove_all(dir);
  write_run_config(ctx, dir);
  ImageBatch images(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) images[i] = io::read_tensor(files[i]);
  ImageBatch maps(files.size());
#pragma omp parallel for num_threads(ctx.jobs) schedule(static) if (ctx.jobs > 1)
  for (std::size_t i = 0; i < files.size(); ++i)
    maps[i] = kind == "fft" ? fft_spectrum(images[i]) : noise_pattern(images[i]);
  std::optional<ImageTensor> avg;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    const ImageTensor shown = kind == "fft" ? normalize_range(maps[i]) : normalize_symmetric(maps[i]);
    for (int c = 0; c < shown.channels(); ++c) {
      const std::string name = shown.channels() == 1 ? stem : stem + ".c" + std::to_string(c);
      io::write_pgm(dir / (name + ".pgm"), shown, c, -1.0f, 1.0f);
    }
    if (kind == "fft") {
      if (!avg) avg = ImageTensor(maps[i].shape());
      require_same_shape(*avg, maps[i], "analyze");
      for (std::size_t k = 0; k < avg->size(); ++k) (*avg)[k] += maps[i][k] / static_cast<float>(files.size());
    }
  }
  if (avg) {
    io::write_tensor(dir / "mean_spectrum.dtf", *avg);
    io::write_pgm(dir / "mean_spectrum.pgm", normalize_range(*avg), 0, -1.0f, 1.0f);
  }
  ctx.log("wrote " + std::to_string(files.size()) + " maps");
  *ctx.out << dir.string() << "\n";
}

void report_error(std::ostream& err, const std::string& command, const std::string& kind, const std::string& msg) {
  err << json{{"error", kind}, {"command", command}, {"message", msg}}.dump() << std::endl;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DIRE forensics pipeline on procedural images", "dire"};
  app.require_subcommand(1);
  std::string workdir, config_path;
  std::vector<std::string> sets;
  int jobs = 1;
  bool secondary = false;
  std::string ablate_kind, analyze_kind, analyze_input;

  struct Spec {
    const char* name;
    const char* help;
    void (*fn)(Context&);
  };
  const Spec specs[] = {
      {"train-diffusion", "Train the noise predictor", cmd_train_diffusion},
      {"build-dataset", "Generate, reconstruct and store the triplet dataset", cmd_build_dataset},
      {"train-detector", "Train the binary detector on seen samplers", cmd_train_detector},
      {"eval", "Score the detector per sampler and perturbation", cmd_eval},
      {"ablate", "Retrain and score detectors across one ablation axis", cmd_ablate},
      {"analyze", "Export FFT spectra or noise patterns of stored images", cmd_analyze},
  };
  std::vector<CLI::App*> subs;
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--workdir", workdir, "Root for every input and output path")->required();
    sub->add_option("--config", config_path, "JSON file overlaid on the defaults");
    sub->add_option("--set", sets, "Override one config key, key=value (repeatable)")->allow_extra_args(false);
    sub->add_option("--jobs", jobs, "Worker threads for per-image stages")->check(CLI::PositiveNumber);
    subs.push_back(sub);
  }
  subs[0]->add_flag("--secondary", secondary, "Train the second-seed model");
  subs[4]->add_option("kind", ablate_kind, "steps | abs | input-mode")->check(CLI::IsMember({"steps", "abs", "input-mode"}));
  subs[5]->add_option("kind", analyze_kind, "fft | noise")->check(CLI::IsMember({"fft", "noise"}));
  subs[5]->add_option("--input", analyze_input, "Directory of .dtf images, relative to the workdir");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string cmd = "dire";
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) cmd = specs[i].name;
    report_error(err, cmd, "usage", e.what());
    err << (cmd == "dire" ? app.help() : app.get_subcommand(cmd)->help());
    return 2;
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;
  Context ctx;
  ctx.command = specs[which].name;
  ctx.workdir = workdir;
  ctx.jobs = jobs;
  ctx.out = &out;
  ctx.err = &err;
  try {
    ctx.cfg = default_config();
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw CliError("missing_file", "config file not found: " + config_path);
      const json patch = json::parse(io::read_text(config_path), nullptr, false);
      if (patch.is_discarded()) throw CliError("config", config_path + ": not valid JSON");
      merge_config(ctx.cfg, patch);
    }
    if (secondary) set_key(ctx.cfg, "diffusion.model", "secondary");
    if (!ablate_kind.empty()) set_key(ctx.cfg, "ablate.kind", ablate_kind);
    if (!analyze_kind.empty()) set_key(ctx.cfg, "analyze.kind", analyze_kind);
    if (!analyze_input.empty()) set_key(ctx.cfg, "analyze.input", analyze_input);
    for (const std::string& s : sets) apply_assignment(ctx.cfg, s);
    if (!fs::is_directory(ctx.workdir)) throw CliError("missing_file", "workdir not found: " + workdir);
    specs[which].fn(ctx);
  } catch (const CliError& e) {
    report_error(err, ctx.command, e.kind(), e.what());
    return 1;
  } catch (const json::exception& e) {
    report_error(err, ctx.command, "config", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    report_error(err, ctx.command, "invalid_argument", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, ctx.command, "failed", e.what());
    return 1;
  }
  return 0;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace dire::cli
