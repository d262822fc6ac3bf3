#include "dire/detector.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dire/epsnet.hpp"
#include "dire/io.hpp"
#include "dire/metrics.hpp"

namespace dire {

namespace {

using nn::ActT;
using nn::ConvGeom;

std::string block_name(int b) { return "block" + std::to_string(b); }

ConvGeom block_geom(const DetectorConfig& c, int b) {
  return {b == 0 ? c.in_channels : c.width(b - 1), c.width(b), 3, 2, 1};
}

template <class T>
T sigmoid(T z) {
  return z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

}  // namespace

void DetectorConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("detector: in_channels must be >= 1");
  if (crop < 4 || crop > image_size) throw std::invalid_argument("detector: need 4 <= crop <= image_size");
  if (base_width < 1) throw std::invalid_argument("detector: base_width must be >= 1");
  if (blocks < 1) throw std::invalid_argument("detector: blocks must be >= 1");
}

int DetectorConfig::width(int block) const { return base_width * (1 << std::min(block, 2)); }

void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"image_size", c.image_size},
       {"crop", c.crop},
       {"base_width", c.base_width},
       {"blocks", c.blocks}};
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
  j.at("in_channels").get_to(c.in_channels);
  j.at("image_size").get_to(c.image_size);
  j.at("crop").get_to(c.crop);
  j.at("base_width").get_to(c.base_width);
  j.at("blocks").get_to(c.blocks);
}

void DetectorTrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("detector training: batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("detector training: learning rate must be > 0");
  if (steps < 1) throw std::invalid_argument("detector training: steps must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("detector training: eval_every must be >= 1");
}

void to_json(nlohmann::json& j, const DetectorTrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"steps", c.steps},
       {"eval_every", c.eval_every}, {"flip", c.flip},                   {"seed", c.seed},
       {"standardize", c.standardize}};
}

void from_json(const nlohmann::json& j, DetectorTrainConfig& c) {
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("steps").get_to(c.steps);
  j.at("eval_every").get_to(c.eval_every);
  j.at("flip").get_to(c.flip);
  j.at("seed").get_to(c.seed);
  j.at("standardize").get_to(c.standardize);
}

double bce_loss(std::span<const int> y, std::span<const double> p) {
  if (y.size() != p.size()) throw std::invalid_argument("bce_loss: label and probability counts differ");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    total -= y[i] == 1 ? std::log(q) : std::log1p(-q);
  }
  return total;
}

std::vector<double> bce_grad(std::span<const int> y, std::span<const double> p) {
  if (y.size() != p.size()) throw std::invalid_argument("bce_grad: label and probability counts differ");
  std::vector<double> g(y.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;
    g[i] = (p[i] - y[i]) / (p[i] * (1.0 - p[i]));
  }
  return g;
}

CropDraw draw_crop(int height, int width, int crop, Rng& rng, bool flip) {
  if (height < crop || width < crop) throw std::invalid_argument("augment_train: image smaller than crop");
  CropDraw d;
  d.y = std::uniform_int_distribution<int>(0, height - crop)(rng);
  d.x = std::uniform_int_distribution<int>(0, width - crop)(rng);
  d.flipped = flip && std::bernoulli_distribution(0.5)(rng);
  return d;
}

ImageTensor crop_at(const ImageTensor& img, int y, int x, int crop, bool flipped) {
  if (y < 0 || x < 0 || y + crop > img.height() || x + crop > img.width())
    throw std::invalid_argument("crop: window " + std::to_string(crop) + " at (" + std::to_string(y) + "," +
                                std::to_string(x) + ") exceeds image " + img.shape().str());
  ImageTensor out(img.channels(), crop, crop);
  for (int c = 0; c < img.channels(); ++c)
    for (int i = 0; i < crop; ++i)
      for (int j = 0; j < crop; ++j) out.at(c, i, j) = img.at(c, y + i, flipped ? x + crop - 1 - j : x + j);
  return out;
}

ImageTensor augment_train(const ImageTensor& img, int crop, Rng& rng, bool flip) {
  const CropDraw d = draw_crop(img.height(), img.width(), crop, rng, flip);
  return crop_at(img, d.y, d.x, crop, d.flipped);
}

ImageTensor center_crop(const ImageTensor& img, int crop) {
  if (img.height() < crop || img.width() < crop)
    throw std::invalid_argument("center_crop: image " + img.shape().str() + " smaller than crop " +
                                std::to_string(crop));
  if (img.height() == crop && img.width() == crop) return img;
  return crop_at(img, (img.height() - crop) / 2, (img.width() - crop) / 2, crop, false);
}

template <class T>
DetectorNet<T>::DetectorNet(DetectorConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  for (int b = 0; b < cfg_.blocks; ++b) {
    const ConvGeom g = block_geom(cfg_, b);
    params_.add(block_name(b) + ".weight", {g.cout, g.cin, 3, 3});
    params_.add(block_name(b) + ".bias", {g.cout});
  }
  params_.add("head.weight", {1, cfg_.width(cfg_.blocks - 1)});
  params_.add("head.bias", {1});
}

template <class T>
std::vector<T> DetectorNet<T>::forward(const ActT<T>& x, Trace* trace) const {
  if (x.c != cfg_.in_channels || x.h != cfg_.crop || x.w != cfg_.crop)
    throw std::invalid_argument("detector: input does not match configured channels/crop");
  ActT<T> h = x;
  if (trace) {
    trace->in.clear();
    trace->pre.clear();
  }
  for (int b = 0; b < cfg_.blocks; ++b) {
    const std::string name = block_name(b);
    ActT<T> pre = nn::conv2d_forward<T>(block_geom(cfg_, b), h, params_.get(name + ".weight").v(),
                                        params_.get(name + ".bias").v());
    if (trace) {
      trace->in.push_back(std::move(h));
      trace->pre.push_back(pre);
    }
    nn::silu_inplace<T>(std::span<T>(pre.v));
    h = std::move(pre);
  }
  nn::MatT<T> pooled = nn::global_avg_pool_forward<T>(h);
  const auto& hw = params_.get("head.weight");
  nn::MatT<T> logit = nn::linear_forward<T>(pooled, hw.v(), params_.get("head.bias").v(), 1);
  if (trace) {
    trace->last_h = h.h;
    trace->last_w = h.w;
    trace->pooled = std::move(pooled);
  }
  return {logit.v.begin(), logit.v.end()};
}

template <class T>
void DetectorNet<T>::backward(const Trace& tr, std::span<const T> dlogits) {
  const int n = tr.pooled.rows;
  if (static_cast<int>(dlogits.size()) != n) throw std::invalid_argument("detector backward: batch mismatch");
  nn::MatT<T> dy(n, 1);
  std::copy(dlogits.begin(), dlogits.end(), dy.v.begin());
  auto& hw = params_.get("head.weight");
  auto& hb = params_.get("head.bias");
  nn::MatT<T> dpooled;
  nn::linear_backward<T>(tr.pooled, hw.v(), dy, hw.g(), hb.g(), &dpooled);
  ActT<T> dh = nn::global_avg_pool_backward<T>(dpooled, tr.last_h, tr.last_w);
  for (int b = cfg_.blocks - 1; b >= 0; --b) {
    nn::silu_backward_inplace<T>(std::span<const T>(tr.pre[b].v), std::span<T>(dh.v));
    auto& w = params_.get(block_name(b) + ".weight");
    auto& bias = params_.get(block_name(b) + ".bias");
    ActT<T> dx;
    nn::conv2d_backward<T>(block_geom(cfg_, b), tr.in[b], w.v(), dh, w.g(), bias.g(), b > 0 ? &dx : nullptr);
    dh = std::move(dx);
  }
}

template <class T>
double detector_loss(DetectorNet<T>& net, const ActT<T>& x, std::span<const int> labels, bool accumulate_grad) {
  typename DetectorNet<T>::Trace tr;
  const std::vector<T> logits = net.forward(x, accumulate_grad ? &tr : nullptr);
  if (logits.size() != labels.size()) throw std::invalid_argument("detector_loss: label count mismatch");
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(sigmoid(logits[i]));
  const double loss = bce_loss(labels, p);
  if (accumulate_grad) {
    // d/dz of the clamped BCE: (p - y) where the clamp is inactive.
    std::vector<T> dz(p.size(), T(0));
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] >= kProbClamp && p[i] <= 1.0 - kProbClamp) dz[i] = static_cast<T>(p[i] - labels[i]);
    net.backward(tr, dz);
  }
  return loss;
}

Detector::Detector(DetectorConfig cfg) : net_(cfg) {}

InputNorm fit_input_norm(const ImageBatch& inputs) {
  if (inputs.empty()) throw std::invalid_argument("fit_input_norm: no inputs");
  const int C = inputs.front().channels();
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  double count = 0.0;
  for (const auto& img : inputs) {
    if (img.channels() != C) throw std::invalid_argument("fit_input_norm: mixed channel counts");
    for (int c = 0; c < C; ++c)
      for (float v : img.plane(c)) {
        sum[c] += v;
        sq[c] += double(v) * v;
      }
    count += static_cast<double>(img.height()) * img.width();
  }
  InputNorm n;
  for (int c = 0; c < C; ++c) {
    const double m = sum[c] / count;
    const double var = std::max(sq[c] / count - m * m, 0.0);
    n.shift.push_back(static_cast<float>(m));
    n.scale.push_back(static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-8)));
  }
  return n;
}

void Detector::set_input_norm(InputNorm norm) {
  if (norm.shift.size() != norm.scale.size() ||
      (!norm.shift.empty() && norm.shift.size() != static_cast<std::size_t>(config().in_channels)))
    throw std::invalid_argument("detector: input normalization does not match the channel count");
  norm_ = std::move(norm);
}

ImageTensor Detector::normalize(ImageTensor img) const {
  if (norm_.shift.empty()) return img;
  if (img.channels() != static_cast<int>(norm_.shift.size()))
    throw std::invalid_argument("detector: input " + img.shape().str() + " has wrong channel count");
  const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
  for (int c = 0; c < img.channels(); ++c) {
    float* p = img.values().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - norm_.shift[c]) * norm_.scale[c];
  }
  return img;
}

Detector Detector::init(DetectorConfig cfg, std::uint64_t seed) {
  Detector d(cfg);
  std::uint64_t index = 0;
  for (nn::Param& p : d.net_.params().all()) {
    ++index;
    if (p.shape.size() == 1) continue;
    int fan_in = 1;
    for (std::size_t k = 1; k < p.shape.size(); ++k) fan_in *= p.shape[k];
    const double gain = p.name.rfind("head.", 0) == 0 ? 1.0 : 2.0;
    nn::init_normal(p, std::sqrt(gain / fan_in), mix_seed(seed, {0x64657463ULL, index}));
  }
  return d;
}

void Detector::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nlohmann::json cfg = {{"network", config()},
                        {"input_norm", {{"shift", norm_.shift}, {"scale", norm_.scale}}}};
  if (!extra.is_null()) cfg["meta"] = extra;
  io::write_checkpoint(path, "DIRD", cfg, nullptr, net_.params());
}

Detector Detector::load(const std::filesystem::path& path) {
  io::Checkpoint ck = io::read_checkpoint(path, "DIRD");
  Detector d(ck.config.at("network").get<DetectorConfig>());
  auto& dst = d.net_.params().all();
  const auto& src = ck.params.all();
  if (dst.size() != src.size())
    throw std::runtime_error(path.string() + ": parameter count does not match architecture");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].shape != src[i].shape)
      throw std::runtime_error(path.string() + ": unexpected parameter " + src[i].name);
    dst[i].value = src[i].value;
  }
  const auto& norm = ck.config.at("input_norm");
  d.set_input_norm({norm.at("shift").get<std::vector<float>>(), norm.at("scale").get<std::vector<float>>()});
  return d;
}

double Detector::predict(const ImageTensor& img) const {
  const ImageTensor x = normalize(center_crop(img, config().crop));
  if (x.channels() != config().in_channels)
    throw std::invalid_argument("detector predict: input " + img.shape().str() + " has wrong channel count");
  const std::vector<float> logit = net_.forward(to_act<float>({x}), nullptr);
  return static_cast<double>(sigmoid(logit[0]));
}

std::vector<double> Detector::predict_batch(const ImageBatch& imgs, int jobs) const {
  std::vector<double> out(imgs.size());
  const int n = static_cast<int>(imgs.size());
#pragma omp parallel for schedule(static) num_threads(jobs) if (jobs > 1)
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = predict(imgs[static_cast<std::size_t>(i)]);
  return out;
}

LabeledSet make_labeled(const std::vector<DireTriple>& triples, InputMode mode) {
  LabeledSet s;
  s.inputs.reserve(triples.size());
  s.labels.reserve(triples.size());
  for (const auto& t : triples) {
    s.inputs.push_back(make_input(mode, t));
    s.labels.push_back(static_cast<int>(t.label));
  }
  return s;
}

DetectorTrainResult train_detector(const LabeledSet& train, const LabeledSet& val, const DetectorConfig& cfg,
                                   const DetectorTrainConfig& tcfg, int jobs,
                                   const std::function<void(int, double)>& on_step) {
  cfg.validate();
  tcfg.validate();
  if (train.inputs.size() != train.labels.size() || val.inputs.size() != val.labels.size())
    throw std::invalid_argument("train_detector: input and label counts differ");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int y = train.labels[i];
    if (y != 0 && y != 1) throw std::invalid_argument("train_detector: labels must be 0 or 1");
    by_class[y].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw std::invalid_argument("train_detector: training set must contain both real and generated samples");

  DetectorTrainResult res{Detector::init(cfg, tcfg.seed), {}, {}, -1, -1.0};
  Detector& model = res.model;
  if (tcfg.standardize) model.set_input_norm(fit_input_norm(train.inputs));
  nn::ParamSet best = model.net().params();
  nn::Adam opt(model.net().params(), nn::AdamConfig{tcfg.learning_rate});
  Rng rng(mix_seed(tcfg.seed, {0x6465747472ULL}));

  // Each class cycles through its own reshuffled permutation.
  std::size_t cursor[2] = {0, 0};
  std::vector<std::size_t> perm[2] = {by_class[0], by_class[1]};
  for (auto& p : perm) std::shuffle(p.begin(), p.end(), rng);
  auto next = [&](int y) {
    if (cursor[y] == perm[y].size()) {
      std::shuffle(perm[y].begin(), perm[y].end(), rng);
      cursor[y] = 0;
    }
    return perm[y][cursor[y]++];
  };

  const int half = tcfg.batch_size / 2;
  ImageBatch batch(static_cast<std::size_t>(tcfg.batch_size));
  std::vector<int> labels(static_cast<std::size_t>(tcfg.batch_size));
  for (int step = 0; step < tcfg.steps; ++step) {
    for (int b = 0; b < tcfg.batch_size; ++b) {
      const int y = b < half ? 0 : 1;
      batch[b] = model.normalize(augment_train(train.inputs[next(y)], cfg.crop, rng, tcfg.flip));
      labels[b] = y;
    }
    model.net().params().zero_grad();
    const double loss = detector_loss(model.net(), to_act<float>(batch), labels, true);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_detector: non-finite loss at step " + std::to_string(step));
    opt.step(model.net().params());
    if (!model.net().params().all_finite())
      throw std::runtime_error("train_detector: non-finite parameters after step " + std::to_string(step));
    res.loss_trace.push_back(loss);
    if (on_step) on_step(step, loss);

    const bool last = step + 1 == tcfg.steps;
    if (!val.inputs.empty() && ((step + 1) % tcfg.eval_every == 0 || last)) {
      const double acc = accuracy(model.predict_batch(val.inputs, jobs), val.labels);
      res.val_acc_trace.push_back(acc);
      if (acc > res.best_val_acc) {
        res.best_val_acc = acc;
        res.best_step = step;
        best = model.net().params();
      }
    }
  }
  if (val.inputs.empty()) {
    res.best_step = tcfg.steps - 1;
    res.best_val_acc = 0.0;
  } else {
    model.net().params() = best;
  }
  return res;
}

template class DetectorNet<float>;
template class DetectorNet<double>;
template double detector_loss<float>(DetectorNet<float>&, const ActT<float>&, std::span<const int>, bool);
template double detector_loss<double>(DetectorNet<double>&, const ActT<double>&, std::span<const int>, bool);

}  // namespace dire
