#pragma once

// Learnable parts of the recurrent optimizer: feature and context encoders,
// initial depth/pose heads, the input projectors and the convolutional GRU
// cells with their update heads.
//
// Parameter name tree:
//   feature.conv{1..3}.{weight,bias}            shared by reference and context images
//   context.conv{1..3}.{weight,bias}
//   depth_head.conv{1,2}.{weight,bias}
//   pose_head.conv{1,2}.{weight,bias}
//   {depth,pose}_gru.hinit.{weight,bias}        1x1 conv, tanh -> initial hidden state
//   {depth,pose}_gru.pv.conv{1,2}.{weight,bias} variable projector
//   {depth,pose}_gru.pc.conv{1,2}.{weight,bias} cost projector (input: cost, valid mask)
//   {depth,pose}_gru.cell.{z,r,h}.{weight_h,weight_v,bias}
//   {depth,pose}_gru.delta.conv{1,2}.{weight,bias}

#include <cmath>
#include <random>
#include <string>

#include "dro/conv.hpp"
#include "dro/costmap.hpp"
#include "dro/geometry.hpp"
#include "dro/parameters.hpp"

namespace dro {

inline constexpr int kDownsample = 8;

struct ModelConfig {
  int feat_channels = 64;
  int context_channels = 64;
  int hidden_channels = 64;
  int pv_channels = 32;
  int pc_channels = 32;
  int head_channels = 32;
  DepthBounds depth{0.1, 100.0};
  int stages = 3;             // m
  int updates_per_stage = 4;  // n
  double depth_gain = 0.4;    // logit units per unit depth-head output
  double rot_gain = 0.01;     // radians per unit pose-head output
  double trans_gain = 0.05;   // se(3) translation units per unit pose-head output
  std::uint64_t seed = 1;

  void validate() const {
    if (feat_channels < 1 || context_channels < 1 || hidden_channels < 1 || pv_channels < 1 ||
        pc_channels < 1 || head_channels < 1)
      throw ConfigError("channel counts must be >= 1");
    if (stages < 1 || updates_per_stage < 1) throw ConfigError("stages and updates_per_stage must be >= 1");
    if (!(depth.d_min > 0 && depth.d_max > depth.d_min)) throw ConfigError("invalid depth bounds");
  }
};

enum class Target { depth, pose };

template <typename T>
struct ConvLayer {
  Tensor<T> weight, bias;
  ConvOptions opt;
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, opt); }
};

template <typename T>
struct SeparableLayer {
  Tensor<T> weight_h, weight_v, bias;
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d_separable5x5(x, weight_h, weight_v, bias); }
};

/// Patch encoder: an 8x8 stride-8 convolution followed by two 1x1 layers.
/// Every output pixel sees exactly its own 8x8 patch, so no feature depends on
/// padding at the image border.
template <typename T>
struct Encoder {
  ConvLayer<T> c1, c2, c3;
  Tensor<T> operator()(const Tensor<T>& image) const {
    auto x = relu(c1(add_scalar(image, T(-0.5))));
    x = relu(c2(x));
    return c3(x);
  }
};

template <typename T>
struct TwoLayer {
  ConvLayer<T> c1, c2;
  bool relu_out = false;
  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = c2(relu(c1(x)));
    return relu_out ? relu(y) : y;
  }
};

template <typename T>
struct GruCell {
  SeparableLayer<T> z, r, h;
};

template <typename T>
struct GruBlock {
  ConvLayer<T> hinit;
  TwoLayer<T> pv, pc;
  GruCell<T> cell;
  TwoLayer<T> delta;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const int F = cfg_.feat_channels, Cc = cfg_.context_channels;
    const int Hh = cfg_.head_channels;
    feature_ = make_encoder("feature", F, rng);
    context_ = make_encoder("context", Cc, rng);
    depth_head_ = {conv("depth_head.conv1", F, Hh, 3, 1, rng), conv("depth_head.conv2", Hh, 1, 3, 1, rng, 0.1)};
    pose_head_ = {conv("pose_head.conv1", 2 * F, Hh, 3, 1, rng), conv("pose_head.conv2", Hh, 6, 3, 1, rng, 0.1)};
    depth_gru_ = make_gru("depth_gru", 1, 1, rng);
    pose_gru_ = make_gru("pose_gru", 6, 6, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  void zero_parameters() { params_.fill(T(0)); }

  int input_channels_m() const { return cfg_.pv_channels + cfg_.pc_channels + cfg_.context_channels; }

  /// image 3xHxW in [0,1] -> feat_channels x H/8 x W/8.
  Tensor<T> encode_features(const Tensor<T>& image) const {
    check_image(image);
    return feature_(image);
  }

  struct ContextOut {
    Tensor<T> context;
    Tensor<T> h0;
  };
  /// Context features plus the initial hidden state of the GRU for `target`.
  ContextOut encode_context(const Tensor<T>& image, Target target = Target::depth) const {
    check_image(image);
    auto ctx = context_(image);
    return {ctx, hidden_init(ctx, target)};
  }
  Tensor<T> hidden_init(const Tensor<T>& context, Target target) const {
    return tanh(gru(target).hinit(context));
  }

  /// Initial depth logits (1 x H/8 x W/8); depth = d_min + (d_max - d_min) * sigmoid(logit).
  Tensor<T> depth_head(const Tensor<T>& features) const { return depth_head_(features); }

  Tensor<T> depth_from_logits(const Tensor<T>& logits) const {
    const T lo = static_cast<T>(cfg_.depth.d_min), range = static_cast<T>(cfg_.depth.d_max - cfg_.depth.d_min);
    return add_scalar(mul_scalar(sigmoid(logits), range), lo);
  }

  /// Initial pose as an se(3) vector (omega, rho); input order is (reference, context).
  Tensor<T> pose_head(const Tensor<T>& f_ref, const Tensor<T>& f_ctx) const {
    if (f_ref.shape() != f_ctx.shape()) throw DimensionError("pose_head inputs differ in shape");
    return global_avg_pool(pose_head_(concat<T>({f_ref, f_ctx}, 0))) * pose_gains();
  }

  /// Depth GRU variable: normalized depth sigmoid(logit) in (0,1), 1xHxW.
  Tensor<T> depth_repr(const Tensor<T>& logits) const { return sigmoid(logits); }

  /// Pose GRU variable: xi scaled by 10 and broadcast to 6xHxW.
  Tensor<T> pose_repr(const Tensor<T>& xi, int h, int w) const {
    return expand(reshape(mul_scalar(xi, T(10)), {6, 1, 1}), {6, h, w});
  }

  /// M = concat(P_v(variable), P_c([cost, valid]), context). With use_cost
  /// false the cost branch is replaced by zeros.
  Tensor<T> project_inputs(const Tensor<T>& variable_repr, const CostMap<T>& cost, const Tensor<T>& context,
                           Target target, bool use_cost = true) const {
    const auto& g = gru(target);
    if (variable_repr.rank() != 3 || context.rank() != 3 || cost.values.rank() != 3 ||
        variable_repr.dim(1) != context.dim(1) || variable_repr.dim(2) != context.dim(2) ||
        cost.values.dim(1) != context.dim(1) || cost.values.dim(2) != context.dim(2))
      throw DimensionError("project_inputs: inputs not at a common resolution");
    auto pv = g.pv(variable_repr);
    Tensor<T> pc = use_cost ? g.pc(concat<T>({cost.values, cost.valid}, 0))
                            : Tensor<T>::zeros({cfg_.pc_channels, context.dim(1), context.dim(2)});
    return concat<T>({pv, pc, context}, 0);
  }

  /// z = sigma(Conv5([h,M]; W_z)), r = sigma(Conv5([h,M]; W_r)),
  /// h~ = tanh(Conv5([r*h, M]; W_h)), h' = (1-z)*h + z*h~.
  Tensor<T> gru_step(const Tensor<T>& h, const Tensor<T>& m, Target target) const {
    return gru_step(gru(target).cell, h, m);
  }
  static Tensor<T> gru_step(const GruCell<T>& cell, const Tensor<T>& h, const Tensor<T>& m) {
    if (h.rank() != 3 || m.rank() != 3 || h.dim(1) != m.dim(1) || h.dim(2) != m.dim(2))
      throw DimensionError("gru_step: hidden " + shape_str(h.shape()) + " and input " + shape_str(m.shape()) +
                           " differ in resolution");
    auto hm = concat<T>({h, m}, 0);
    auto z = sigmoid(cell.z(hm));
    auto r = sigmoid(cell.r(hm));
    auto cand = tanh(cell.h(concat<T>({r * h, m}, 0)));
    return add_scalar(-z, T(1)) * h + z * cand;
  }

  /// Depth: logit increment 1xHxW. Pose: se(3) increment [6].
  Tensor<T> delta_head(const Tensor<T>& h, Target target) const {
    const auto& g = gru(target);
    if (target == Target::depth) return mul_scalar(g.delta(h), static_cast<T>(cfg_.depth_gain));
    return global_avg_pool(g.delta(h)) * pose_gains();
  }

  const GruBlock<T>& gru(Target t) const { return t == Target::depth ? depth_gru_ : pose_gru_; }

 private:
  void check_image(const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
      throw DimensionError("expected a 3xHxW image, got " + shape_str(image.shape()));
    if (image.dim(1) % kDownsample || image.dim(2) % kDownsample)
      throw DimensionError("image extents " + shape_str(image.shape()) + " not divisible by 8");
  }

  Tensor<T> pose_gains() const {
    const T r = static_cast<T>(cfg_.rot_gain), t = static_cast<T>(cfg_.trans_gain);
    return Tensor<T>::from({6}, {r, r, r, t, t, t});
  }

  ConvLayer<T> conv(const std::string& name, int in, int out, int k, int stride, std::mt19937_64& rng,
                    double scale = 1.0) {
    const double fan_in = static_cast<double>(in) * k * k;
    const double bound = scale * std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> w(static_cast<std::size_t>(out) * in * k * k);
    for (auto& v : w) v = static_cast<T>(dist(rng));
    ConvLayer<T> layer;
    layer.weight = params_.add(name + ".weight", Tensor<T>::from({out, in, k, k}, std::move(w), true));
    layer.bias = params_.add(name + ".bias", {out});
    layer.opt = ConvOptions::same(k, k, stride);
    return layer;
  }

  SeparableLayer<T> separable(const std::string& name, int in, int out, std::mt19937_64& rng) {
    auto init = [&](int o, int i, int kh, int kw) {
      const double bound = std::sqrt(3.0 / (static_cast<double>(i) * kh * kw));
      std::uniform_real_distribution<double> dist(-bound, bound);
      std::vector<T> w(static_cast<std::size_t>(o) * i * kh * kw);
      for (auto& v : w) v = static_cast<T>(dist(rng));
      return Tensor<T>::from({o, i, kh, kw}, std::move(w), true);
    };
    SeparableLayer<T> s;
    s.weight_h = params_.add(name + ".weight_h", init(out, in, 1, 5));
    s.weight_v = params_.add(name + ".weight_v", init(out, out, 5, 1));
    s.bias = params_.add(name + ".bias", {out});
    return s;
  }

  Encoder<T> make_encoder(const std::string& name, int out, std::mt19937_64& rng) {
    auto patch = conv(name + ".conv1", 3, 64, kDownsample, kDownsample, rng);
    patch.opt = ConvOptions{kDownsample, 0, 0};
    return {patch, conv(name + ".conv2", 64, 64, 1, 1, rng), conv(name + ".conv3", 64, out, 1, 1, rng)};
  }

  GruBlock<T> make_gru(const std::string& name, int var_channels, int delta_channels, std::mt19937_64& rng) {
    const int Hd = cfg_.hidden_channels, Hh = cfg_.head_channels;
    GruBlock<T> g;
    g.hinit = conv(name + ".hinit", cfg_.context_channels, Hd, 1, 1, rng);
    g.pv = {conv(name + ".pv.conv1", var_channels, cfg_.pv_channels, 3, 1, rng),
            conv(name + ".pv.conv2", cfg_.pv_channels, cfg_.pv_channels, 3, 1, rng), true};
    g.pc = {conv(name + ".pc.conv1", 2, cfg_.pc_channels, 3, 1, rng),
            conv(name + ".pc.conv2", cfg_.pc_channels, cfg_.pc_channels, 3, 1, rng), true};
    const int in = Hd + input_channels_m();
    g.cell = {separable(name + ".cell.z", in, Hd, rng), separable(name + ".cell.r", in, Hd, rng),
              separable(name + ".cell.h", in, Hd, rng)};
    g.delta = {conv(name + ".delta.conv1", Hd, Hh, 3, 1, rng),
               conv(name + ".delta.conv2", Hh, delta_channels, 3, 1, rng, 0.1)};
    return g;
  }

  ModelConfig cfg_;
  ParameterSet<T> params_;
  Encoder<T> feature_, context_;
  TwoLayer<T> depth_head_, pose_head_;
  GruBlock<T> depth_gru_, pose_gru_;
};

}  // namespace dro
