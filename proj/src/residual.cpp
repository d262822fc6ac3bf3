#include "dire/residual.hpp"

#include <cmath>
#include <stdexcept>

namespace dire {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::RGB: return "RGB";
    case InputMode::REC: return "REC";
    case InputMode::DIRE: return "DIRE";
    case InputMode::RGB_AND_DIRE: return "RGB_AND_DIRE";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

InputMode parse_input_mode(const std::string& s) {
  if (s == "RGB") return InputMode::RGB;
  if (s == "REC") return InputMode::REC;
  if (s == "DIRE") return InputMode::DIRE;
  if (s == "RGB_AND_DIRE") return InputMode::RGB_AND_DIRE;
  throw std::invalid_argument("unknown input mode '" + s + "'");
}

ImageTensor residual(const ImageTensor& source, const ImageTensor& reconstruction, bool use_abs) {
  require_same_shape(source, reconstruction, "residual");
  ImageTensor out(source.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float d = source[i] - reconstruction[i];
    out[i] = use_abs ? std::abs(d) : d;
  }
  return out;
}

DireTriple compute_dire(const ImageTensor& x0, const Reconstructor& reconstruct, bool use_abs) {
  DireTriple t;
  t.source = x0;
  t.reconstruction = clamp(reconstruct(x0), -1.0f, 1.0f);
  require_same_shape(t.source, t.reconstruction, "compute_dire");
  t.dire = residual(t.source, t.reconstruction, use_abs);
  t.signed_residual = !use_abs;
  return t;
}

DireTriple compute_dire(const ImageTensor& x0, const NoisePredictor& model, const NoiseSchedule& sched,
                        const StepSequence& seq, bool use_abs) {
  return compute_dire(
      x0, [&](const ImageTensor& x) { return reconstruct(invert(x, model, sched, seq), model, sched, seq); },
      use_abs);
}

std::vector<DireTriple> compute_dire_batch(const ImageBatch& images, const NoisePredictor& model,
                                           const NoiseSchedule& sched, const StepSequence& seq,
                                           bool use_abs, int jobs) {
  std::vector<DireTriple> out(images.size());
  const int n = static_cast<int>(images.size());
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = compute_dire(images[static_cast<std::size_t>(i)], model, sched, seq, use_abs);
  }
  return out;
}

DireTriple with_residual(const DireTriple& t, bool use_abs) {
  DireTriple out = t;
  out.dire = residual(t.source, t.reconstruction, use_abs);
  out.signed_residual = !use_abs;
  return out;
}

void validate_triple(const DireTriple& t, float tol) {
  auto fail = [&](const std::string& why) {
    throw std::runtime_error("triple " + (t.id.empty() ? std::string("<unnamed>") : t.id) + ": " + why);
  };
  if (t.source.shape() != t.reconstruction.shape() || t.source.shape() != t.dire.shape())
    fail("source/reconstruction/dire shapes differ");
  const ImageTensor expect = residual(t.source, t.reconstruction, !t.signed_residual);
  if (max_abs_diff(expect, t.dire) > tol) fail("stored residual does not match |source - reconstruction|");
  if (!t.signed_residual) {
    for (float v : t.dire.values())
      if (v < 0.0f || v > 2.0f) fail("absolute residual outside [0, 2]");
  }
}

ImageTensor make_input(InputMode mode, const DireTriple& t) {
  switch (mode) {
    case InputMode::RGB: return t.source;
    case InputMode::REC: return t.reconstruction;
    case InputMode::DIRE: return t.dire;
    case InputMode::RGB_AND_DIRE: return concat_channels(t.source, t.dire);
  }
  throw std::invalid_argument("make_input: bad mode");
}

int input_channels(InputMode mode, int image_channels) {
  return mode == InputMode::RGB_AND_DIRE ? 2 * image_channels : image_channels;
}

}  // namespace dire
