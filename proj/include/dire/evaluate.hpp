#pragma once

// ACC/AP reports per test condition and the ablation harnesses.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dire/detector.hpp"
#include "dire/epsnet.hpp"
#include "dire/perturb.hpp"
#include "dire/residual.hpp"

namespace dire {

struct EvalCell {
  std::string experiment;  // "eval", "steps", "abs", "input-mode"
  std::string sampler_tag;
  std::string input_mode;
  int steps = 20;
  bool use_abs = true;
  std::string perturbation = "none";
  std::uint64_t seed = 0;
  double acc = 0.0;  // percent
  double ap = 0.0;   // percent
  int n_samples = 0;
  std::optional<double> negative_fraction;  // filled by the abs ablation
};

void to_json(nlohmann::json& j, const EvalCell& c);
void from_json(const nlohmann::json& j, EvalCell& c);

struct EvalReport {
  std::vector<EvalCell> cells;

  std::string to_jsonl() const;
  static EvalReport from_jsonl(const std::string& text);
  const EvalCell* find(const std::string& tag, const std::string& mode, int steps, const std::string& perturbation,
                       bool use_abs = true, const std::string& experiment = "") const;
  void append(const EvalReport& other);
  /// ACC/AP grid: one row per (mode, steps, abs, perturbation), one column per sampler tag.
  std::string grid() const;
};

/// Copies of `triples` whose source went through `p` and whose reconstruction
/// and residual were recomputed at `steps`.
std::vector<DireTriple> recompute_triples(const std::vector<DireTriple>& triples, const EpsModel& recon, int steps,
                                          bool use_abs, const Perturbation& p, int jobs = 1);

struct EvalConditions {
  std::vector<Perturbation> perturbations{Perturbation{}};
  int steps = 20;
  bool use_abs = true;
  std::uint64_t seed = 0;
};

/// One cell per (sampler tag, perturbation). Tags are visited in order of
/// first appearance. Cells that would reuse the stored reconstruction
/// (no perturbation, same steps and residual kind) read it directly.
EvalReport evaluate(const Detector& det, InputMode mode, const std::vector<DireTriple>& test, const EpsModel& recon,
                    int stored_steps, const EvalConditions& cond, int jobs = 1,
                    const std::string& experiment = "eval");

struct DetectorRecipe {
  DetectorConfig network;
  DetectorTrainConfig train;
};

/// Sets channels and image size from the data, then trains.
DetectorTrainResult fit_detector(InputMode mode, const std::vector<DireTriple>& train,
                                 const std::vector<DireTriple>& val, const DetectorRecipe& recipe, int jobs = 1);

struct AblationData {
  const std::vector<DireTriple>* train = nullptr;
  const std::vector<DireTriple>* val = nullptr;
  const std::vector<DireTriple>* test = nullptr;
  const EpsModel* recon = nullptr;
  int stored_steps = 20;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Rebuilds residuals at each S, retrains the detector, and scores every test tag.
EvalReport ablate_steps(const AblationData& data, const std::vector<int>& steps, const DetectorRecipe& recipe,
                        int jobs = 1, const ProgressFn& log = {});
/// Detectors on signed versus absolute residuals.
EvalReport ablate_abs(const AblationData& data, const DetectorRecipe& recipe, int jobs = 1,
                      const ProgressFn& log = {});
/// Detectors on each input representation.
EvalReport ablate_input_mode(const AblationData& data, const std::vector<InputMode>& modes,
                             const DetectorRecipe& recipe, int jobs = 1, const ProgressFn& log = {});

/// Fraction of residual entries below zero across the triples.
double negative_fraction(const std::vector<DireTriple>& triples);

}  // namespace dire
