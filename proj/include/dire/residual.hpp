#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dire/ddim.hpp"
#include "dire/predictor.hpp"
#include "dire/schedule.hpp"
#include "dire/tensor.hpp"

namespace dire {

enum class Label : int { Real = 0, Generated = 1 };
enum class Split { Train, Val, Test };
enum class InputMode { RGB, REC, DIRE, RGB_AND_DIRE };

std::string to_string(Split s);
std::string to_string(InputMode m);
Split parse_split(const std::string& s);
InputMode parse_input_mode(const std::string& s);

/// Source image, its DDIM reconstruction, and the reconstruction error.
/// `dire` is |source - reconstruction| unless `signed_residual` is set, in
/// which case it holds source - reconstruction.
struct DireTriple {
  std::string id;
  ImageTensor source;
  ImageTensor reconstruction;
  ImageTensor dire;
  Label label = Label::Real;
  std::string sampler_tag;
  Split split = Split::Test;
  std::uint64_t seed = 0;
  bool signed_residual = false;
};

/// Elementwise |a - b| or a - b.
ImageTensor residual(const ImageTensor& source, const ImageTensor& reconstruction, bool use_abs);

using Reconstructor = std::function<ImageTensor(const ImageTensor&)>;

/// reconstruction = clamp(reconstruct(x0), -1, 1); dire = residual(x0, reconstruction).
DireTriple compute_dire(const ImageTensor& x0, const Reconstructor& reconstruct, bool use_abs = true);

/// Same with the DDIM round trip R(I(x0)) as the reconstructor.
DireTriple compute_dire(const ImageTensor& x0, const NoisePredictor& model, const NoiseSchedule& sched,
                        const StepSequence& seq, bool use_abs = true);

/// compute_dire over a batch, fanned out over `jobs` threads; order preserved.
std::vector<DireTriple> compute_dire_batch(const ImageBatch& images, const NoisePredictor& model,
                                           const NoiseSchedule& sched, const StepSequence& seq,
                                           bool use_abs = true, int jobs = 1);

/// Same triple with the residual re-derived as signed or absolute from the
/// stored source and reconstruction.
DireTriple with_residual(const DireTriple& t, bool use_abs);

/// Throws std::runtime_error naming the triple id when shapes disagree, the
/// stored residual differs from its recomputation by more than `tol`, or an
/// absolute residual leaves [0, 2].
void validate_triple(const DireTriple& t, float tol = 1e-6f);

/// Detector input for one of the four input modes; RGB_AND_DIRE concatenates
/// source channels then residual channels.
ImageTensor make_input(InputMode mode, const DireTriple& t);
int input_channels(InputMode mode, int image_channels);

}  // namespace dire
