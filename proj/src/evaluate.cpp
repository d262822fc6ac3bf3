#include "dire/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dire/ddim.hpp"
#include "dire/metrics.hpp"

namespace dire {

void to_json(nlohmann::json& j, const EvalCell& c) {
  j = nlohmann::json{{"experiment", c.experiment}, {"sampler_tag", c.sampler_tag}, {"input_mode", c.input_mode},
                     {"steps", c.steps},           {"use_abs", c.use_abs},         {"perturbation", c.perturbation},
                     {"seed", c.seed},             {"acc", c.acc},                 {"ap", c.ap},
                     {"n_samples", c.n_samples}};
  if (c.negative_fraction) j["negative_fraction"] = *c.negative_fraction;
}

void from_json(const nlohmann::json& j, EvalCell& c) {
  j.at("experiment").get_to(c.experiment);
  j.at("sampler_tag").get_to(c.sampler_tag);
  j.at("input_mode").get_to(c.input_mode);
  j.at("steps").get_to(c.steps);
  j.at("use_abs").get_to(c.use_abs);
  j.at("perturbation").get_to(c.perturbation);
  j.at("seed").get_to(c.seed);
  j.at("acc").get_to(c.acc);
  j.at("ap").get_to(c.ap);
  j.at("n_samples").get_to(c.n_samples);
  if (j.contains("negative_fraction")) c.negative_fraction = j.at("negative_fraction").get<double>();
}

std::string EvalReport::to_jsonl() const {
  std::string out;
  for (const auto& c : cells) out += nlohmann::json(c).dump() + "\n";
  return out;
}

EvalReport EvalReport::from_jsonl(const std::string& text) {
  EvalReport r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) r.cells.push_back(nlohmann::json::parse(line).get<EvalCell>());
  return r;
}

const EvalCell* EvalReport::find(const std::string& tag, const std::string& mode, int steps,
                                 const std::string& perturbation, bool use_abs, const std::string& experiment) const {
  for (const auto& c : cells)
    if (c.sampler_tag == tag && c.input_mode == mode && c.steps == steps && c.perturbation == perturbation &&
        c.use_abs == use_abs && (experiment.empty() || c.experiment == experiment))
      return &c;
  return nullptr;
}

void EvalReport::append(const EvalReport& other) { cells.insert(cells.end(), other.cells.begin(), other.cells.end()); }

std::string EvalReport::grid() const {
  std::vector<std::string> tags;
  std::vector<std::string> rows;
  std::map<std::pair<std::string, std::string>, std::string> text;
  for (const auto& c : cells) {
    if (std::find(tags.begin(), tags.end(), c.sampler_tag) == tags.end()) tags.push_back(c.sampler_tag);
    const std::string row = c.experiment + " " + c.input_mode + " S=" + std::to_string(c.steps) +
                            (c.use_abs ? "" : " signed") + " " + c.perturbation;
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%5.1f/%5.1f", c.acc, c.ap);
    text[{row, c.sampler_tag}] = buf;
  }
  std::size_t row_w = 9;
  for (const auto& r : rows) row_w = std::max(row_w, r.size());
  std::ostringstream os;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  os << pad("condition", row_w);
  for (const auto& t : tags) os << " | " << pad(t, 11);
  os << "\n" << std::string(row_w, '-');
  for (std::size_t i = 0; i < tags.size(); ++i) os << "-+-" << std::string(11, '-');
  os << "\n";
  for (const auto& r : rows) {
    os << pad(r, row_w);
    for (const auto& t : tags) {
      const auto it = text.find({r, t});
      os << " | " << pad(it == text.end() ? "-" : it->second, 11);
    }
    os << "\n";
  }
  os << "cells are ACC/AP in percent\n";
  return os.str();
}

std::vector<DireTriple> recompute_triples(const std::vector<DireTriple>& triples, const EpsModel& recon, int steps,
                                          bool use_abs, const Perturbation& p, int jobs) {
  const StepSequence seq = make_subsequence(recon.schedule().steps(), steps);
  ImageBatch sources(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) sources[i] = apply_perturbation(triples[i].source, p);
  std::vector<DireTriple> out = compute_dire_batch(sources, recon, recon.schedule(), seq, use_abs, jobs);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].id = triples[i].id;
    out[i].label = triples[i].label;
    out[i].sampler_tag = triples[i].sampler_tag;
    out[i].split = triples[i].split;
    out[i].seed = triples[i].seed;
  }
  return out;
}

namespace {

std::vector<std::string> tags_in_order(const std::vector<DireTriple>& ts) {
  std::vector<std::string> tags;
  for (const auto& t : ts)
    if (std::find(tags.begin(), tags.end(), t.sampler_tag) == tags.end()) tags.push_back(t.sampler_tag);
  return tags;
}

// Residual kind switched from the stored reconstruction when that is all that differs.
std::vector<DireTriple> as_kind(const std::vector<DireTriple>& ts, bool use_abs) {
  std::vector<DireTriple> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(t.signed_residual == !use_abs ? t : with_residual(t, use_abs));
  return out;
}

}  // namespace

EvalReport evaluate(const Detector& det, InputMode mode, const std::vector<DireTriple>& test, const EpsModel& recon,
                    int stored_steps, const EvalConditions& cond, int jobs, const std::string& experiment) {
  EvalReport report;
  for (const Perturbation& p : cond.perturbations) {
    const bool stored = p.kind == Perturbation::Kind::None && cond.steps == stored_steps;
    // RGB input needs no reconstruction.
    const bool source_only = mode == InputMode::RGB;
    std::vector<DireTriple> triples;
    if (stored) {
      triples = as_kind(test, cond.use_abs);
    } else if (source_only) {
      triples = test;
      for (auto& t : triples) t.source = apply_perturbation(t.source, p);
    } else {
      triples = recompute_triples(test, recon, cond.steps, cond.use_abs, p, jobs);
    }
    for (const std::string& tag : tags_in_order(triples)) {
      ImageBatch inputs;
      std::vector<int> labels;
      for (const auto& t : triples) {
        if (t.sampler_tag != tag) continue;
        inputs.push_back(make_input(mode, t));
        labels.push_back(static_cast<int>(t.label));
      }
      if (inputs.empty()) continue;
      const std::vector<double> scores = det.predict_batch(inputs, jobs);
      EvalCell c;
      c.experiment = experiment;
      c.sampler_tag = tag;
      c.input_mode = to_string(mode);
      c.steps = cond.steps;
      c.use_abs = cond.use_abs;
      c.perturbation = p.str();
      c.seed = cond.seed;
      c.acc = accuracy(scores, labels);
      c.ap = average_precision(scores, labels);
      c.n_samples = static_cast<int>(inputs.size());
      report.cells.push_back(c);
    }
  }
  return report;
}

DetectorTrainResult fit_detector(InputMode mode, const std::vector<DireTriple>& train,
                                 const std::vector<DireTriple>& val, const DetectorRecipe& recipe, int jobs) {
  if (train.empty()) throw std::invalid_argument("fit_detector: empty training split");
  DetectorConfig cfg = recipe.network;
  cfg.in_channels = input_channels(mode, train.front().source.channels());
  cfg.image_size = train.front().source.height();
  return train_detector(make_labeled(train, mode), make_labeled(val, mode), cfg, recipe.train, jobs);
}

double negative_fraction(const std::vector<DireTriple>& triples) {
  std::size_t neg = 0, total = 0;
  for (const auto& t : triples) {
    for (float v : t.dire.values()) neg += v < 0.0f ? 1 : 0;
    total += t.dire.size();
  }
  return total ? static_cast<double>(neg) / static_cast<double>(total) : 0.0;
}

namespace {

void require(const AblationData& d) {
  if (!d.train || !d.val || !d.test || !d.recon) throw std::invalid_argument("ablation: incomplete data");
}

}  // namespace

EvalReport ablate_steps(const AblationData& data, const std::vector<int>& steps, const DetectorRecipe& recipe,
                        int jobs, const ProgressFn& log) {
  require(data);
  EvalReport report;
  for (int s : steps) {
    if (log) log("ablate steps: S=" + std::to_string(s));
    const bool stored = s == data.stored_steps;
    const Perturbation none;
    const auto train = stored ? *data.train : recompute_triples(*data.train, *data.recon, s, true, none, jobs);
    const auto val = stored ? *data.val : recompute_triples(*data.val, *data.recon, s, true, none, jobs);
    const auto test = stored ? *data.test : recompute_triples(*data.test, *data.recon, s, true, none, jobs);
    const Detector det = fit_detector(InputMode::DIRE, train, val, recipe, jobs).model;
    EvalConditions cond;
    cond.steps = s;
    cond.seed = recipe.train.seed;
    // The recomputed test triples already sit at S, so evaluate reads them as stored.
    report.append(evaluate(det, InputMode::DIRE, test, *data.recon, s, cond, jobs, "steps"));
  }
  return report;
}

EvalReport ablate_abs(const AblationData& data, const DetectorRecipe& recipe, int jobs, const ProgressFn& log) {
  require(data);
  EvalReport report;
  for (bool use_abs : {false, true}) {
    if (log) log(std::string("ablate abs: ") + (use_abs ? "absolute" : "signed"));
    const auto train = as_kind(*data.train, use_abs);
    const auto val = as_kind(*data.val, use_abs);
    const auto test = as_kind(*data.test, use_abs);
    const Detector det = fit_detector(InputMode::DIRE, train, val, recipe, jobs).model;
    EvalConditions cond;
    cond.steps = data.stored_steps;
    cond.use_abs = use_abs;
    cond.seed = recipe.train.seed;
    EvalReport r = evaluate(det, InputMode::DIRE, test, *data.recon, data.stored_steps, cond, jobs, "abs");
    for (auto& c : r.cells) {
      std::vector<DireTriple> cell;
      for (const auto& t : test)
        if (t.sampler_tag == c.sampler_tag) cell.push_back(t);
      c.negative_fraction = negative_fraction(cell);
    }
    report.append(r);
  }
  return report;
}

EvalReport ablate_input_mode(const AblationData& data, const std::vector<InputMode>& modes,
                             const DetectorRecipe& recipe, int jobs, const ProgressFn& log) {
  require(data);
  EvalReport report;
  for (InputMode m : modes) {
    if (log) log("ablate input mode: " + to_string(m));
    const Detector det = fit_detector(m, *data.train, *data.val, recipe, jobs).model;
    EvalConditions cond;
    cond.steps = data.stored_steps;
    cond.seed = recipe.train.seed;
    report.append(evaluate(det, m, *data.test, *data.recon, data.stored_steps, cond, jobs, "input-mode"));
  }
  return report;
}

}  // namespace dire
