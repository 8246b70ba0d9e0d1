#pragma once

#include <bit>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "cdgan/error.hpp"
#include "cdgan/graph.hpp"
#include "cdgan/ops.hpp"
#include "cdgan/tensor.hpp"

namespace cdgan {

enum class Domain { A, B };

// Whether the reverse translation (B -> A) consumes a conditional image.
enum class Mode : std::uint8_t { Symmetric = 0, AsymmetricAToB = 1 };

inline const char* to_string(Mode m) { return m == Mode::Symmetric ? "symmetric" : "asymmetric_A_to_B"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "symmetric") return Mode::Symmetric;
  if (s == "asymmetric_A_to_B") return Mode::AsymmetricAToB;
  throw ConfigError("unknown mode '" + s + "' (valid: symmetric, asymmetric_A_to_B)");
}

// Network sizing. Channel progression is derived from base_width:
//   encoder      b -> 2b -> 4b shared convs, di conv -> di_channels,
//                ds branch flatten -> 16b -> ds_dim
//   decoder      (di_channels + ds_dim) -> 4b -> 2b -> b -> image_channels
//   discriminator b -> 2b -> 4b -> 8b convs, flatten -> 8b -> 1
// Every conv/deconv uses a 4x4 kernel, stride 2, padding 1.
struct ArchConfig {
  int image_size = 64;
  int image_channels = 3;
  int base_width = 64;
  int di_channels = 256;
  int di_spatial = 4;
  int ds_dim = 128;
  double leaky_slope = 0.2;

  // Config with di_spatial derived from image_size.
  static ArchConfig for_image_size(int size) {
    ArchConfig a;
    a.image_size = size;
    a.di_spatial = size / 16;
    return a;
  }

  [[nodiscard]] int ds_hidden() const noexcept { return 16 * base_width; }
  [[nodiscard]] Shape image_shape(int batch = 1) const noexcept {
    return {batch, image_channels, image_size, image_size};
  }
  [[nodiscard]] Shape di_shape(int batch = 1) const noexcept { return {batch, di_channels, di_spatial, di_spatial}; }
  [[nodiscard]] Shape ds_shape(int batch = 1) const noexcept { return {batch, ds_dim, 1, 1}; }

  void validate() const {
    if (image_size < 16 || !std::has_single_bit(static_cast<unsigned>(image_size))) {
      throw ConfigError("image_size must be a power of two >= 16, got " + std::to_string(image_size));
    }
    if (image_channels <= 0 || base_width <= 0 || di_channels <= 0 || ds_dim <= 0) {
      throw ConfigError("architecture counts must be strictly positive");
    }
    if (di_spatial != image_size / 16) {
      throw ConfigError("di_spatial must equal image_size / 16 (" + std::to_string(image_size / 16) + "), got " +
                        std::to_string(di_spatial));
    }
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
      throw ConfigError("leaky_slope must lie in [0, 1)");
    }
  }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

template <typename T>
struct ConvLayer {
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the layer feeds a batch norm
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct Encoder {
  ConvLayer<T> conv1, conv2, conv3, di_conv;
  BatchNormLayer<T> bn2, bn3, di_bn;
  LinearLayer<T> ds_fc1, ds_fc2;
};

template <typename T>
struct Decoder {
  ConvLayer<T> deconv1, deconv2, deconv3, deconv4;
  BatchNormLayer<T> bn2, bn3;
};

template <typename T>
struct Discriminator {
  ConvLayer<T> conv1, conv2, conv3, conv4;
  BatchNormLayer<T> bn2, bn3, bn4;
  LinearLayer<T> fc1, fc2;
};

enum class TensorKind { Parameter, Buffer };

template <typename T>
struct ModelBundle {
  ArchConfig arch;
  Mode mode = Mode::Symmetric;
  Encoder<T> e_A, e_B;
  Decoder<T> g_A, g_B;
  Discriminator<T> d_A, d_B;

  Encoder<T>& encoder(Domain d) { return d == Domain::A ? e_A : e_B; }
  const Encoder<T>& encoder(Domain d) const { return d == Domain::A ? e_A : e_B; }
  Decoder<T>& decoder(Domain d) { return d == Domain::A ? g_A : g_B; }
  const Decoder<T>& decoder(Domain d) const { return d == Domain::A ? g_A : g_B; }
  Discriminator<T>& discriminator(Domain d) { return d == Domain::A ? d_A : d_B; }
  const Discriminator<T>& discriminator(Domain d) const { return d == Domain::A ? d_A : d_B; }
};

inline Group encoder_group(Domain d) { return d == Domain::A ? Group::EncoderA : Group::EncoderB; }
inline Group decoder_group(Domain d) { return d == Domain::A ? Group::DecoderA : Group::DecoderB; }
inline Group discriminator_group(Domain d) { return d == Domain::A ? Group::DiscriminatorA : Group::DiscriminatorB; }

namespace detail {

// Calls f(name, tensor, group, kind) for every tensor of one network in a
// fixed order. Works for const and mutable networks alike.
template <typename Conv, typename F>
void visit_conv(const std::string& prefix, Conv& c, Group g, F& f) {
  f(prefix + ".weight", c.weight, g, TensorKind::Parameter);
  if (!c.bias.empty()) f(prefix + ".bias", c.bias, g, TensorKind::Parameter);
}

template <typename BN, typename F>
void visit_bn(const std::string& prefix, BN& b, Group g, F& f) {
  f(prefix + ".gamma", b.gamma, g, TensorKind::Parameter);
  f(prefix + ".beta", b.beta, g, TensorKind::Parameter);
  f(prefix + ".running_mean", b.running_mean, g, TensorKind::Buffer);
  f(prefix + ".running_var", b.running_var, g, TensorKind::Buffer);
}

template <typename Lin, typename F>
void visit_linear(const std::string& prefix, Lin& l, Group g, F& f) {
  f(prefix + ".weight", l.weight, g, TensorKind::Parameter);
  f(prefix + ".bias", l.bias, g, TensorKind::Parameter);
}

template <typename Enc, typename F>
void visit_encoder(const std::string& p, Enc& e, Group g, F& f) {
  visit_conv(p + ".conv1", e.conv1, g, f);
  visit_conv(p + ".conv2", e.conv2, g, f);
  visit_bn(p + ".bn2", e.bn2, g, f);
  visit_conv(p + ".conv3", e.conv3, g, f);
  visit_bn(p + ".bn3", e.bn3, g, f);
  visit_conv(p + ".di_conv", e.di_conv, g, f);
  visit_bn(p + ".di_bn", e.di_bn, g, f);
  visit_linear(p + ".ds_fc1", e.ds_fc1, g, f);
  visit_linear(p + ".ds_fc2", e.ds_fc2, g, f);
}

template <typename Dec, typename F>
void visit_decoder(const std::string& p, Dec& d, Group g, F& f) {
  visit_conv(p + ".deconv1", d.deconv1, g, f);
  visit_conv(p + ".deconv2", d.deconv2, g, f);
  visit_bn(p + ".bn2", d.bn2, g, f);
  visit_conv(p + ".deconv3", d.deconv3, g, f);
  visit_bn(p + ".bn3", d.bn3, g, f);
  visit_conv(p + ".deconv4", d.deconv4, g, f);
}

template <typename Disc, typename F>
void visit_discriminator(const std::string& p, Disc& d, Group g, F& f) {
  visit_conv(p + ".conv1", d.conv1, g, f);
  visit_conv(p + ".conv2", d.conv2, g, f);
  visit_bn(p + ".bn2", d.bn2, g, f);
  visit_conv(p + ".conv3", d.conv3, g, f);
  visit_bn(p + ".bn3", d.bn3, g, f);
  visit_conv(p + ".conv4", d.conv4, g, f);
  visit_bn(p + ".bn4", d.bn4, g, f);
  visit_linear(p + ".fc1", d.fc1, g, f);
  visit_linear(p + ".fc2", d.fc2, g, f);
}

}  // namespace detail

// Visits every tensor of the bundle in canonical order:
// e_A, e_B, g_A, g_B, d_A, d_B. f(name, Tensor&, Group, TensorKind).
template <typename Bundle, typename F>
void visit_tensors(Bundle& b, F&& f) {
  detail::visit_encoder("e_A", b.e_A, Group::EncoderA, f);
  detail::visit_encoder("e_B", b.e_B, Group::EncoderB, f);
  detail::visit_decoder("g_A", b.g_A, Group::DecoderA, f);
  detail::visit_decoder("g_B", b.g_B, Group::DecoderB, f);
  detail::visit_discriminator("d_A", b.d_A, Group::DiscriminatorA, f);
  detail::visit_discriminator("d_B", b.d_B, Group::DiscriminatorB, f);
}

template <typename T>
std::size_t parameter_count(const ModelBundle<T>& b) {
  std::size_t n = 0;
  visit_tensors(b, [&](const std::string&, const Tensor<T>& t, Group, TensorKind k) {
    if (k == TensorKind::Parameter) n += t.size();
  });
  return n;
}

// Mutable parameter tensors of one group, in canonical order.
template <typename T>
std::vector<Tensor<T>*> group_parameters(ModelBundle<T>& b, Group g) {
  std::vector<Tensor<T>*> out;
  visit_tensors(b, [&](const std::string&, Tensor<T>& t, Group grp, TensorKind k) {
    if (grp == g && k == TensorKind::Parameter) out.push_back(&t);
  });
  return out;
}

namespace detail {

template <typename T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> gaussian(Shape s, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    Tensor<T> t(s);
    for (auto& v : t.storage()) v = static_cast<T>(dist(rng_));
    return t;
  }

  ConvLayer<T> conv(int out_c, int in_c, bool with_bias) {
    return {gaussian({out_c, in_c, 4, 4}, 0.0, 0.02), with_bias ? Tensor<T>(Shape{1, out_c, 1, 1}) : Tensor<T>{}};
  }
  // Transposed conv weights are laid out (in, out, k, k).
  ConvLayer<T> deconv(int in_c, int out_c, bool with_bias) {
    return {gaussian({in_c, out_c, 4, 4}, 0.0, 0.02), with_bias ? Tensor<T>(Shape{1, out_c, 1, 1}) : Tensor<T>{}};
  }
  BatchNormLayer<T> bn(int c) {
    return {gaussian({1, c, 1, 1}, 1.0, 0.02), Tensor<T>(Shape{1, c, 1, 1}), Tensor<T>(Shape{1, c, 1, 1}),
            Tensor<T>(Shape{1, c, 1, 1}, T(1))};
  }
  LinearLayer<T> linear(int out_f, int in_f) {
    return {gaussian({out_f, in_f, 1, 1}, 0.0, 0.02), Tensor<T>(Shape{1, out_f, 1, 1})};
  }

 private:
  std::mt19937_64 rng_;
};

template <typename T>
Encoder<T> make_encoder(const ArchConfig& a, Initializer<T>& init) {
  const int b = a.base_width;
  const int side3 = a.image_size / 8;
  Encoder<T> e;
  e.conv1 = init.conv(b, a.image_channels, true);
  e.conv2 = init.conv(2 * b, b, false);
  e.bn2 = init.bn(2 * b);
  e.conv3 = init.conv(4 * b, 2 * b, false);
  e.bn3 = init.bn(4 * b);
  e.di_conv = init.conv(a.di_channels, 4 * b, false);
  e.di_bn = init.bn(a.di_channels);
  e.ds_fc1 = init.linear(a.ds_hidden(), 4 * b * side3 * side3);
  e.ds_fc2 = init.linear(a.ds_dim, a.ds_hidden());
  return e;
}

template <typename T>
Decoder<T> make_decoder(const ArchConfig& a, Initializer<T>& init) {
  const int b = a.base_width;
  Decoder<T> d;
  d.deconv1 = init.deconv(a.di_channels + a.ds_dim, 4 * b, true);
  d.deconv2 = init.deconv(4 * b, 2 * b, false);
  d.bn2 = init.bn(2 * b);
  d.deconv3 = init.deconv(2 * b, b, false);
  d.bn3 = init.bn(b);
  d.deconv4 = init.deconv(b, a.image_channels, true);
  return d;
}

template <typename T>
Discriminator<T> make_discriminator(const ArchConfig& a, Initializer<T>& init) {
  const int b = a.base_width;
  const int side4 = a.image_size / 16;
  Discriminator<T> d;
  d.conv1 = init.conv(b, a.image_channels, true);
  d.conv2 = init.conv(2 * b, b, false);
  d.bn2 = init.bn(2 * b);
  d.conv3 = init.conv(4 * b, 2 * b, false);
  d.bn3 = init.bn(4 * b);
  d.conv4 = init.conv(8 * b, 4 * b, false);
  d.bn4 = init.bn(8 * b);
  d.fc1 = init.linear(8 * b, 8 * b * side4 * side4);
  d.fc2 = init.linear(1, 8 * b);
  return d;
}

}  // namespace detail

// Deterministic construction: the same (arch, seed) always yields identical
// parameters.
template <typename T>
ModelBundle<T> build_bundle(const ArchConfig& arch, std::uint64_t seed, Mode mode = Mode::Symmetric) {
  arch.validate();
  detail::Initializer<T> init(seed);
  ModelBundle<T> b;
  b.arch = arch;
  b.mode = mode;
  b.e_A = detail::make_encoder(arch, init);
  b.e_B = detail::make_encoder(arch, init);
  b.g_A = detail::make_decoder(arch, init);
  b.g_B = detail::make_decoder(arch, init);
  b.d_A = detail::make_discriminator(arch, init);
  b.d_B = detail::make_discriminator(arch, init);
  return b;
}

// ---------------------------------------------------------------------------
// Graph-level forward passes. Net may be const only for evaluation graphs;
// training graphs update batch-norm running statistics in place.

template <typename T>
struct FeatureVars {
  Var di;
  Var ds;
};

namespace detail {

template <typename T, typename Layer>
Var conv_block(Graph<T>& g, Var x, Layer& layer, Group grp, bool transposed) {
  Var w = g.param(layer.weight, grp);
  std::optional<Var> bias;
  if (!layer.bias.empty()) bias = g.param(layer.bias, grp);
  return transposed ? ops::conv_transpose2d(g, x, w, bias, 2, 1) : ops::conv2d(g, x, w, bias, 2, 1);
}

template <typename T, typename Layer>
Var bn_block(Graph<T>& g, Var x, Layer& bn, Group grp) {
  Var gamma = g.param(bn.gamma, grp);
  Var beta = g.param(bn.beta, grp);
  if constexpr (std::is_const_v<Layer>) {
    if (g.training()) {
      throw InputError("training-mode forward requires a mutable bundle");
    }
    return ops::batch_norm(g, x, gamma, beta, bn.running_mean, bn.running_var);
  } else {
    return ops::batch_norm(g, x, gamma, beta, bn.running_mean, bn.running_var, &bn.running_mean, &bn.running_var);
  }
}

template <typename T, typename Layer>
Var linear_block(Graph<T>& g, Var x, Layer& l, Group grp) {
  return ops::linear(g, x, g.param(l.weight, grp), g.param(l.bias, grp));
}

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got.n < 1 || got.with_batch(1) != want.with_batch(1)) {
    throw InputError(std::string(what) + ": expected per-sample shape " + to_string(want.with_batch(1)) +
                     ", got " + to_string(got));
  }
}

}  // namespace detail

template <typename T, typename Enc>
FeatureVars<T> encoder_forward(Graph<T>& g, Enc& enc, Group grp, const ArchConfig& a, Var x) {
  detail::require_shape(g.value(x).shape(), a.image_shape(), "encode");
  const T slope = static_cast<T>(a.leaky_slope);
  Var h = ops::leaky_relu(g, detail::conv_block(g, x, enc.conv1, grp, false), slope);
  h = ops::leaky_relu(g, detail::bn_block(g, detail::conv_block(g, h, enc.conv2, grp, false), enc.bn2, grp), slope);
  h = ops::leaky_relu(g, detail::bn_block(g, detail::conv_block(g, h, enc.conv3, grp, false), enc.bn3, grp), slope);
  Var di = detail::bn_block(g, detail::conv_block(g, h, enc.di_conv, grp, false), enc.di_bn, grp);
  Var s = ops::leaky_relu(g, detail::linear_block(g, ops::flatten(g, h), enc.ds_fc1, grp), slope);
  Var ds = detail::linear_block(g, s, enc.ds_fc2, grp);
  return {di, ds};
}

template <typename T, typename Dec>
Var decoder_forward(Graph<T>& g, Dec& dec, Group grp, const ArchConfig& a, Var di, Var ds) {
  const Shape dis = g.value(di).shape();
  const Shape dss = g.value(ds).shape();
  detail::require_shape(dis, a.di_shape(), "decode (domain-independent map)");
  detail::require_shape(dss, a.ds_shape(), "decode (domain-specific vector)");
  if (dis.n != dss.n) {
    throw InputError("decode: batch mismatch between feature map and style vector");
  }
  Var h = ops::relu(g, detail::conv_block(g, ops::tile_concat(g, di, ds), dec.deconv1, grp, true));
  h = ops::relu(g, detail::bn_block(g, detail::conv_block(g, h, dec.deconv2, grp, true), dec.bn2, grp));
  h = ops::relu(g, detail::bn_block(g, detail::conv_block(g, h, dec.deconv3, grp, true), dec.bn3, grp));
  return ops::tanh(g, detail::conv_block(g, h, dec.deconv4, grp, true));
}

// Probability that each sample is a real image, shape (N, 1, 1, 1).
template <typename T, typename Disc>
Var discriminator_forward(Graph<T>& g, Disc& d, Group grp, const ArchConfig& a, Var x) {
  detail::require_shape(g.value(x).shape(), a.image_shape(), "discriminate");
  const T slope = static_cast<T>(a.leaky_slope);
  Var h = ops::leaky_relu(g, detail::conv_block(g, x, d.conv1, grp, false), slope);
  h = ops::leaky_relu(g, detail::bn_block(g, detail::conv_block(g, h, d.conv2, grp, false), d.bn2, grp), slope);
  h = ops::leaky_relu(g, detail::bn_block(g, detail::conv_block(g, h, d.conv3, grp, false), d.bn3, grp), slope);
  h = ops::leaky_relu(g, detail::bn_block(g, detail::conv_block(g, h, d.conv4, grp, false), d.bn4, grp), slope);
  h = ops::leaky_relu(g, detail::linear_block(g, ops::flatten(g, h), d.fc1, grp), slope);
  return ops::sigmoid(g, detail::linear_block(g, h, d.fc2, grp));
}

// Bundle-level conveniences that dispatch on domain.
template <typename T, typename Bundle>
FeatureVars<T> encode(Graph<T>& g, Bundle& b, Domain d, Var x) {
  return encoder_forward(g, b.encoder(d), encoder_group(d), b.arch, x);
}

template <typename T, typename Bundle>
Var decode(Graph<T>& g, Bundle& b, Domain d, Var di, Var ds) {
  return decoder_forward(g, b.decoder(d), decoder_group(d), b.arch, di, ds);
}

template <typename T, typename Bundle>
Var discriminate(Graph<T>& g, Bundle& b, Domain d, Var x) {
  return discriminator_forward(g, b.discriminator(d), discriminator_group(d), b.arch, x);
}

// ---------------------------------------------------------------------------
// Evaluation-mode value API.

template <typename T>
struct FeaturePair {
  Tensor<T> di;  // (N, di_channels, di_spatial, di_spatial)
  Tensor<T> ds;  // (N, ds_dim, 1, 1)
};

template <typename T>
FeaturePair<T> encode(const ModelBundle<T>& b, Domain d, const Tensor<T>& x) {
  Graph<T> g(false);
  auto f = encode(g, b, d, g.constant(x));
  return {g.value(f.di), g.value(f.ds)};
}

template <typename T>
Tensor<T> decode(const ModelBundle<T>& b, Domain d, const Tensor<T>& di, const Tensor<T>& ds) {
  Graph<T> g(false);
  return g.value(decode(g, b, d, g.constant(di), g.constant(ds)));
}

template <typename T>
Tensor<T> discriminate(const ModelBundle<T>& b, Domain d, const Tensor<T>& x) {
  Graph<T> g(false);
  return g.value(discriminate(g, b, d, g.constant(x)));
}

}  // namespace cdgan
