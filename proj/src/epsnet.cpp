#include "dire/epsnet.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "dire/io.hpp"
#include "dire/rng.hpp"

namespace dire {

namespace {

using nn::ActT;
using nn::ConvGeom;
using nn::MatT;

std::string enc(int l, const char* part) { return "enc" + std::to_string(l) + "." + part; }
std::string dec(int l, const char* part) { return "dec" + std::to_string(l) + "." + part; }

ConvGeom enc_a_geom(const EpsNetConfig& c, int l) {
  return l == 0 ? ConvGeom{c.channels, c.width(0), 3, 1, 1}
                : ConvGeom{c.width(l - 1), c.width(l), 3, 2, 1};
}
ConvGeom enc_b_geom(const EpsNetConfig& c, int l) { return {c.width(l), c.width(l), 3, 1, 1}; }
ConvGeom dec_geom(const EpsNetConfig& c, int l) { return {c.width(l + 1), c.width(l), 3, 1, 1}; }
ConvGeom out_geom(const EpsNetConfig& c) { return {c.width(0), c.channels, 3, 1, 1}; }

template <class T>
struct Layers {
  nn::ParamSetT<T>& p;

  ActT<T> conv(const std::string& name, const ConvGeom& g, const ActT<T>& x) const {
    return nn::conv2d_forward<T>(g, x, p.get(name + ".weight").v(), p.get(name + ".bias").v());
  }
  void conv_back(const std::string& name, const ConvGeom& g, const ActT<T>& x, const ActT<T>& dy,
                 ActT<T>* dx) const {
    auto& w = p.get(name + ".weight");
    auto& b = p.get(name + ".bias");
    nn::conv2d_backward<T>(g, x, w.v(), dy, w.g(), b.g(), dx);
  }
  MatT<T> linear(const std::string& name, const MatT<T>& x) const {
    auto& w = p.get(name + ".weight");
    return nn::linear_forward<T>(x, w.v(), p.get(name + ".bias").v(), w.shape[0]);
  }
  void linear_back(const std::string& name, const MatT<T>& x, const MatT<T>& dy, MatT<T>* dx) const {
    auto& w = p.get(name + ".weight");
    auto& b = p.get(name + ".bias");
    nn::linear_backward<T>(x, w.v(), dy, w.g(), b.g(), dx);
  }
};

template <class T>
void silu(nn::AlignedVec<T>& v) {
  nn::silu_inplace<T>(std::span<T>(v));
}

template <class T>
void silu_back(const nn::AlignedVec<T>& pre, nn::AlignedVec<T>& grad) {
  nn::silu_backward_inplace<T>(std::span<const T>(pre), std::span<T>(grad));
}

template <class T>
void accumulate(nn::AlignedVec<T>& dst, const nn::AlignedVec<T>& src) {
  nn::add_inplace<T>(std::span<T>(dst), std::span<const T>(src));
}

}  // namespace

void EpsNetConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("EpsNetConfig: channels must be >= 1");
  if (base_width < 1) throw std::invalid_argument("EpsNetConfig: base_width must be >= 1");
  if (levels < 1) throw std::invalid_argument("EpsNetConfig: levels must be >= 1");
  if (time_dim < 2 || time_dim % 2 != 0)
    throw std::invalid_argument("EpsNetConfig: time_dim must be a positive even number");
  if (image_size < 1 || image_size % (1 << levels) != 0)
    throw std::invalid_argument("EpsNetConfig: image_size must be divisible by 2^levels");
}

void to_json(nlohmann::json& j, const EpsNetConfig& c) {
  j = {{"channels", c.channels},     {"image_size", c.image_size}, {"base_width", c.base_width},
       {"levels", c.levels},         {"time_dim", c.time_dim}};
}

void from_json(const nlohmann::json& j, EpsNetConfig& c) {
  c.channels = j.at("channels").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.levels = j.at("levels").get<int>();
  c.time_dim = j.at("time_dim").get<int>();
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
  if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"steps", c.steps},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.steps = j.at("steps").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

template <class T>
nn::MatT<T> timestep_embedding(std::span<const int> steps, int dim) {
  const int half = dim / 2;
  MatT<T> out(static_cast<int>(steps.size()), dim);
  for (int r = 0; r < out.rows; ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = steps[r] * freq;
      out(r, i) = static_cast<T>(std::sin(arg));
      out(r, half + i) = static_cast<T>(std::cos(arg));
    }
  }
  return out;
}

template <class T>
EpsNet<T>::EpsNet(EpsNetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.time_dim;
  auto conv = [&](const std::string& name, const ConvGeom& g) {
    params_.add(name + ".weight", {g.cout, g.cin, g.kernel, g.kernel});
    params_.add(name + ".bias", {g.cout});
  };
  auto linear = [&](const std::string& name, int out, int in) {
    params_.add(name + ".weight", {out, in});
    params_.add(name + ".bias", {out});
  };
  linear("time.lin1", d, d);
  for (int l = 0; l <= cfg_.levels; ++l) {
    conv(enc(l, "conv_a"), enc_a_geom(cfg_, l));
    linear(enc(l, "film"), 2 * cfg_.width(l), d);
    conv(enc(l, "conv_b"), enc_b_geom(cfg_, l));
  }
  for (int l = cfg_.levels - 1; l >= 0; --l) {
    conv(dec(l, "conv_up"), dec_geom(cfg_, l));
    linear(dec(l, "film"), 2 * cfg_.width(l), d);
  }
  conv("out.conv", out_geom(cfg_));
}

template <class T>
ActT<T> EpsNet<T>::forward(const ActT<T>& x, std::span<const int> steps, Trace* trace) const {
  if (x.c != cfg_.channels || x.h != cfg_.image_size || x.w != cfg_.image_size)
    throw std::invalid_argument("EpsNet: input does not match configured image shape");
  if (static_cast<int>(steps.size()) != x.n)
    throw std::invalid_argument("EpsNet: one step index per batch item required");
  Layers<T> L{const_cast<nn::ParamSetT<T>&>(params_)};
  const int levels = cfg_.levels;

  Trace local;
  Trace& tr = trace != nullptr ? *trace : local;
  tr.steps.assign(steps.begin(), steps.end());
  tr.temb_in = timestep_embedding<T>(steps, cfg_.time_dim);
  tr.temb_pre = L.linear("time.lin1", tr.temb_in);
  tr.temb = tr.temb_pre;
  silu(tr.temb.v);

  tr.enc_mod.assign(levels + 1, {});
  tr.enc_in.assign(levels + 1, {});
  tr.enc_a.assign(levels + 1, {});
  tr.enc_f.assign(levels + 1, {});
  tr.enc_h1.assign(levels + 1, {});
  tr.enc_b.assign(levels + 1, {});
  tr.enc_out.assign(levels + 1, {});
  for (int l = 0; l <= levels; ++l) {
    tr.enc_in[l] = l == 0 ? x : tr.enc_out[l - 1];
    tr.enc_mod[l] = L.linear(enc(l, "film"), tr.temb);
    tr.enc_a[l] = L.conv(enc(l, "conv_a"), enc_a_geom(cfg_, l), tr.enc_in[l]);
    tr.enc_f[l] = nn::film_forward<T>(tr.enc_a[l], tr.enc_mod[l]);
    tr.enc_h1[l] = tr.enc_f[l];
    silu(tr.enc_h1[l].v);
    tr.enc_b[l] = L.conv(enc(l, "conv_b"), enc_b_geom(cfg_, l), tr.enc_h1[l]);
    tr.enc_out[l] = tr.enc_b[l];
    silu(tr.enc_out[l].v);
  }

  tr.dec_mod.assign(levels, {});
  tr.dec_in.assign(levels, {});
  tr.dec_s.assign(levels, {});
  tr.dec_f.assign(levels, {});
  tr.dec_out.assign(levels, {});
  for (int l = levels - 1; l >= 0; --l) {
    tr.dec_in[l] = l == levels - 1 ? tr.enc_out[levels] : tr.dec_out[l + 1];
    tr.dec_mod[l] = L.linear(dec(l, "film"), tr.temb);
    const ActT<T> c = L.conv(dec(l, "conv_up"), dec_geom(cfg_, l), tr.dec_in[l]);
    tr.dec_s[l] = nn::upsample2_forward<T>(c);
    accumulate(tr.dec_s[l].v, tr.enc_out[l].v);
    tr.dec_f[l] = nn::film_forward<T>(tr.dec_s[l], tr.dec_mod[l]);
    tr.dec_out[l] = tr.dec_f[l];
    silu(tr.dec_out[l].v);
  }
  const ActT<T>& top = levels > 0 ? tr.dec_out[0] : tr.enc_out[0];
  return L.conv("out.conv", out_geom(cfg_), top);
}

template <class T>
void EpsNet<T>::backward(const Trace& tr, const ActT<T>& dout) {
  Layers<T> L{params_};
  const int levels = cfg_.levels;
  MatT<T> dtemb(tr.temb.rows, tr.temb.cols);
  auto add_temb_grad = [&](const std::string& name, const MatT<T>& dmod) {
    MatT<T> dx;
    L.linear_back(name, tr.temb, dmod, &dx);
    accumulate(dtemb.v, dx.v);
  };

  std::vector<ActT<T>> d_enc_out(levels + 1);
  for (int l = 0; l <= levels; ++l) d_enc_out[l] = ActT<T>(tr.enc_out[l].c, tr.enc_out[l].n, tr.enc_out[l].h, tr.enc_out[l].w);

  ActT<T> d_top;
  L.conv_back("out.conv", out_geom(cfg_), levels > 0 ? tr.dec_out[0] : tr.enc_out[0], dout, &d_top);

  for (int l = 0; l < levels; ++l) {
    ActT<T> d_f = std::move(d_top);
    silu_back(tr.dec_f[l].v, d_f.v);
    ActT<T> d_s;
    MatT<T> d_mod;
    nn::film_backward<T>(tr.dec_s[l], tr.dec_mod[l], d_f, d_s, d_mod);
    add_temb_grad(dec(l, "film"), d_mod);
    accumulate(d_enc_out[l].v, d_s.v);
    const ActT<T> d_c = nn::upsample2_backward<T>(d_s);
    ActT<T> d_in;
    L.conv_back(dec(l, "conv_up"), dec_geom(cfg_, l), tr.dec_in[l], d_c, &d_in);
    if (l == levels - 1) {
      accumulate(d_enc_out[levels].v, d_in.v);
    } else {
      d_top = std::move(d_in);
    }
  }
  if (levels == 0) d_enc_out[0] = std::move(d_top);

  for (int l = levels; l >= 0; --l) {
    ActT<T> d_b = std::move(d_enc_out[l]);
    silu_back(tr.enc_b[l].v, d_b.v);
    ActT<T> d_h1;
    L.conv_back(enc(l, "conv_b"), enc_b_geom(cfg_, l), tr.enc_h1[l], d_b, &d_h1);
    silu_back(tr.enc_f[l].v, d_h1.v);
    ActT<T> d_a;
    MatT<T> d_mod;
    nn::film_backward<T>(tr.enc_a[l], tr.enc_mod[l], d_h1, d_a, d_mod);
    add_temb_grad(enc(l, "film"), d_mod);
    if (l > 0) {
      ActT<T> d_in;
      L.conv_back(enc(l, "conv_a"), enc_a_geom(cfg_, l), tr.enc_in[l], d_a, &d_in);
      accumulate(d_enc_out[l - 1].v, d_in.v);
    } else {
      L.conv_back(enc(l, "conv_a"), enc_a_geom(cfg_, l), tr.enc_in[l], d_a, nullptr);
    }
  }

  silu_back(tr.temb_pre.v, dtemb.v);
  L.linear_back("time.lin1", tr.temb_in, dtemb, nullptr);
}

template <class T>
nn::ActT<T> to_act(const ImageBatch& images) {
  if (images.empty()) throw std::invalid_argument("to_act: empty batch");
  const Shape s = images.front().shape();
  ActT<T> act(s.channels, static_cast<int>(images.size()), s.height, s.width);
  for (int n = 0; n < act.n; ++n) {
    require_same_shape(images[n], images.front(), "to_act");
    for (int c = 0; c < act.c; ++c) {
      auto src = images[n].plane(c);
      T* dst = act.data(c, n);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
  }
  return act;
}

template <class T>
ImageBatch from_act(const nn::ActT<T>& act) {
  ImageBatch out;
  out.reserve(act.n);
  for (int n = 0; n < act.n; ++n) {
    ImageTensor img(act.c, act.h, act.w);
    for (int c = 0; c < act.c; ++c) {
      const T* src = act.data(c, n);
      for (std::size_t i = 0; i < act.plane(); ++i)
        img[static_cast<std::size_t>(c) * act.plane() + i] = static_cast<float>(src[i]);
    }
    out.push_back(std::move(img));
  }
  return out;
}

template <class T>
double simple_loss_batched(EpsNet<T>& net, const NoiseSchedule& sched, const ImageBatch& x0,
                           std::span<const int> steps, const ImageBatch& eps, bool accumulate_grad) {
  if (x0.size() != eps.size() || x0.size() != steps.size() || x0.empty())
    throw std::invalid_argument("simple_loss: batch sizes disagree");
  ImageBatch noisy;
  noisy.reserve(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) noisy.push_back(q_sample(x0[i], steps[i], eps[i], sched));
  const ActT<T> xt = to_act<T>(noisy);
  const ActT<T> target = to_act<T>(eps);
  typename EpsNet<T>::Trace trace;
  const ActT<T> pred = net.forward(xt, steps, accumulate_grad ? &trace : nullptr);
  const double count = static_cast<double>(pred.size());
  double loss = 0.0;
  ActT<T> dout(pred.c, pred.n, pred.h, pred.w);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
    loss += diff * diff;
    dout.v[i] = static_cast<T>(2.0 * diff / count);
  }
  if (accumulate_grad) net.backward(trace, dout);
  return loss / count;
}

double simple_loss(const NoisePredictor& model, const NoiseSchedule& sched, const ImageBatch& x0,
                   std::span<const int> steps, const ImageBatch& eps) {
  if (x0.size() != eps.size() || x0.size() != steps.size() || x0.empty())
    throw std::invalid_argument("simple_loss: batch sizes disagree");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const ImageTensor xt = q_sample(x0[i], steps[i], eps[i], sched);
    const ImageTensor pred = model.predict(xt, steps[i]);
    require_same_shape(pred, eps[i], "simple_loss");
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double d = double(eps[i][k]) - double(pred[k]);
      total += d * d;
    }
    count += pred.size();
  }
  return total / static_cast<double>(count);
}

EpsModel::EpsModel(EpsNetConfig cfg, NoiseSchedule sched) : net_(cfg), sched_(std::move(sched)) {}

EpsModel EpsModel::init(EpsNetConfig cfg, NoiseSchedule sched, std::uint64_t seed) {
  EpsModel m(cfg, std::move(sched));
  std::uint64_t index = 0;
  for (nn::Param& p : m.net_.params().all()) {
    ++index;
    const bool is_bias = p.shape.size() == 1;
    if (is_bias) continue;
    int fan_in = 1;
    for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= p.shape[d];
    double stddev = std::sqrt(2.0 / fan_in);
    if (p.name.find(".film.") != std::string::npos) stddev = 0.02;
    if (p.name.rfind("time.", 0) == 0) stddev = std::sqrt(1.0 / fan_in);
    if (p.name.rfind("out.", 0) == 0) stddev = std::sqrt(1.0 / fan_in);
    nn::init_normal(p, stddev, mix_seed(seed, {0x65707373ULL, index}));
  }
  return m;
}

void EpsModel::save(const std::filesystem::path& path, const nn::AdamConfig& opt) const {
  nlohmann::json cfg = {{"network", config()},
                        {"optimizer",
                         {{"kind", "adam"},
                          {"lr", opt.lr},
                          {"beta1", opt.beta1},
                          {"beta2", opt.beta2},
                          {"eps", opt.eps}}}};
  io::write_checkpoint(path, "DIRM", cfg, &sched_, net_.params());
}

EpsModel EpsModel::load(const std::filesystem::path& path) {
  io::Checkpoint ck = io::read_checkpoint(path, "DIRM");
  if (!ck.schedule) throw std::runtime_error(path.string() + ": checkpoint has no schedule block");
  EpsModel m(ck.config.at("network").get<EpsNetConfig>(), *ck.schedule);
  auto& dst = m.net_.params().all();
  const auto& src = ck.params.all();
  if (dst.size() != src.size())
    throw std::runtime_error(path.string() + ": parameter count does not match architecture");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].shape != src[i].shape)
      throw std::runtime_error(path.string() + ": unexpected parameter " + src[i].name);
    dst[i].value = src[i].value;
  }
  return m;
}

void EpsModel::check_step(int t) const {
  if (t < 1 || t > sched_.steps())
    throw std::out_of_range("eps_forward: step " + std::to_string(t) + " outside [1," +
                            std::to_string(sched_.steps()) + "]");
}

ImageTensor EpsModel::predict(const ImageTensor& xt, int t) const {
  check_step(t);
  if (xt.shape() != config().image_shape())
    throw std::invalid_argument("eps_forward: input " + xt.shape().str() + " does not match model " +
                                config().image_shape().str());
  const int steps[1] = {t};
  return from_act<float>(net_.forward(to_act<float>({xt}), steps, nullptr)).front();
}

TrainResult train_diffusion(EpsModel& model, const ImageSource& source, std::uint64_t source_size,
                            const TrainConfig& cfg, const std::function<void(int, double)>& on_step) {
  cfg.validate();
  if (source_size == 0) throw std::invalid_argument("train_diffusion: empty image source");
  const Shape shape = model.config().image_shape();
  nn::Adam opt(model.net().params(), nn::AdamConfig{cfg.learning_rate});
  Rng rng(mix_seed(cfg.seed, {0x747261696eULL}));
  std::uniform_int_distribution<std::uint64_t> pick(0, source_size - 1);
  std::uniform_int_distribution<int> step_dist(1, model.schedule().steps());
  TrainResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));
  ImageBatch x0(cfg.batch_size), eps(cfg.batch_size);
  std::vector<int> steps(cfg.batch_size);
  for (int step = 0; step < cfg.steps; ++step) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      x0[b] = source(pick(rng));
      if (x0[b].shape() != shape)
        throw std::invalid_argument("train_diffusion: source image shape " + x0[b].shape().str() +
                                    " does not match model " + shape.str());
      steps[b] = step_dist(rng);
      eps[b] = standard_normal(shape, rng);
    }
    model.net().params().zero_grad();
    const double loss = simple_loss_batched(model.net(), model.schedule(), x0, steps, eps, true);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_diffusion: non-finite loss at step " + std::to_string(step));
    opt.step(model.net().params());
    if (!model.net().params().all_finite())
      throw std::runtime_error("train_diffusion: non-finite parameters after step " + std::to_string(step));
    result.loss_trace.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return result;
}

template nn::MatT<float> timestep_embedding<float>(std::span<const int>, int);
template nn::MatT<double> timestep_embedding<double>(std::span<const int>, int);
template class EpsNet<float>;
template class EpsNet<double>;
template nn::ActT<float> to_act<float>(const ImageBatch&);
template nn::ActT<double> to_act<double>(const ImageBatch&);
template ImageBatch from_act<float>(const nn::ActT<float>&);
template ImageBatch from_act<double>(const nn::ActT<double>&);
template double simple_loss_batched<float>(EpsNet<float>&, const NoiseSchedule&, const ImageBatch&,
                                           std::span<const int>, const ImageBatch&, bool);
template double simple_loss_batched<double>(EpsNet<double>&, const NoiseSchedule&, const ImageBatch&,
                                            std::span<const int>, const ImageBatch&, bool);

}  // namespace dire
