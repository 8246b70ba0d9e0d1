#pragma once

#include "cdgan/error.hpp"
#include "cdgan/graph.hpp"
#include "cdgan/networks.hpp"
#include "cdgan/tensor.hpp"

namespace cdgan {

// Which style vectors feed the reconstruction decoders.
enum class ReconstructionStyle {
  Skip,       // original x_A^s / x_B^s (cd-GAN)
  Reencoded,  // re-extracted style of the translations (cd-GAN-rec)
  DualGanC,   // both outputs of the opposite encoder, x_hat_A = g_A(e_B(x_AB))
};

struct TranslationOptions {
  Mode mode = Mode::Symmetric;
  bool conditional = true;  // false: every decoder receives a zero style vector
  ReconstructionStyle reconstruction = ReconstructionStyle::Skip;
};

// All intermediates of one dual pass, as graph variables.
//   feat_hat_AB = e_B(x_AB) = (x_hat_A^i, x_hat_B^s)
//   feat_hat_BA = e_A(x_BA) = (x_hat_B^i, x_hat_A^s)
template <typename T>
struct RecordVars {
  Var x_A, x_B;
  FeatureVars<T> feat_A, feat_B;
  Var x_AB, x_BA;
  FeatureVars<T> feat_hat_AB, feat_hat_BA;
  Var x_hat_A, x_hat_B;
};

namespace detail {

template <typename T>
Var zero_style(Graph<T>& g, const ArchConfig& a, int batch) {
  return g.constant(Tensor<T>(a.ds_shape(batch)));
}

}  // namespace detail

// x_AB = g_B(x_A^i, x_B^s), x_BA = g_A(x_B^i, x_A^s). The reverse decoder gets
// a zero style vector in asymmetric mode; both do when unconditional.
template <typename T, typename Bundle>
RecordVars<T> translate_forward(Graph<T>& g, Bundle& b, Var x_A, Var x_B, const TranslationOptions& opt) {
  const int n = g.value(x_A).shape().n;
  if (g.value(x_B).shape().n != n) {
    throw InputError("translate: batch size mismatch (" + std::to_string(n) + " vs " +
                     std::to_string(g.value(x_B).shape().n) + ")");
  }
  RecordVars<T> r;
  r.x_A = x_A;
  r.x_B = x_B;
  r.feat_A = encode(g, b, Domain::A, x_A);
  r.feat_B = encode(g, b, Domain::B, x_B);
  const Var style_AB = opt.conditional ? r.feat_B.ds : detail::zero_style(g, b.arch, n);
  const Var style_BA =
      (opt.conditional && opt.mode == Mode::Symmetric) ? r.feat_A.ds : detail::zero_style(g, b.arch, n);
  r.x_AB = decode(g, b, Domain::B, r.feat_A.di, style_AB);
  r.x_BA = decode(g, b, Domain::A, r.feat_B.di, style_BA);
  return r;
}

// Re-encodes the translations with the target-domain encoders and decodes the
// reconstructions. Requires r.x_AB, r.x_BA, r.feat_A.ds and r.feat_B.ds.
template <typename T, typename Bundle>
void reconstruct(Graph<T>& g, Bundle& b, RecordVars<T>& r, const TranslationOptions& opt) {
  const int n = g.value(r.x_AB).shape().n;
  if (g.value(r.x_BA).shape().n != n) {
    throw InputError("reconstruct: batch size mismatch");
  }
  r.feat_hat_AB = encode(g, b, Domain::B, r.x_AB);
  r.feat_hat_BA = encode(g, b, Domain::A, r.x_BA);

  Var style_A;
  Var style_B;
  switch (opt.reconstruction) {
    case ReconstructionStyle::Skip:
      style_A = r.feat_A.ds;
      style_B = r.feat_B.ds;
      break;
    case ReconstructionStyle::Reencoded:
      style_A = r.feat_hat_BA.ds;
      style_B = r.feat_hat_AB.ds;
      break;
    case ReconstructionStyle::DualGanC:
      style_A = r.feat_hat_AB.ds;
      style_B = r.feat_hat_BA.ds;
      break;
  }
  if (!opt.conditional) {
    style_A = detail::zero_style(g, b.arch, n);
    style_B = detail::zero_style(g, b.arch, n);
  } else if (opt.mode == Mode::AsymmetricAToB) {
    style_A = detail::zero_style(g, b.arch, n);
  }
  r.x_hat_A = decode(g, b, Domain::A, r.feat_hat_AB.di, style_A);
  r.x_hat_B = decode(g, b, Domain::B, r.feat_hat_BA.di, style_B);
}

// ---------------------------------------------------------------------------
// Evaluation-mode value API.

template <typename T>
struct TranslationRecord {
  Tensor<T> x_A, x_B;
  FeaturePair<T> feat_A, feat_B;
  Tensor<T> x_AB, x_BA;
  FeaturePair<T> feat_hat_AB, feat_hat_BA;
  Tensor<T> x_hat_A, x_hat_B;
};

namespace detail {

template <typename T>
FeaturePair<T> features(const Graph<T>& g, const FeatureVars<T>& f) {
  return {g.value(f.di), g.value(f.ds)};
}

}  // namespace detail

template <typename T>
TranslationOptions options_for(const ModelBundle<T>& b) {
  return TranslationOptions{b.mode, true, ReconstructionStyle::Skip};
}

// Forward half of the dual pass: fills x_A, x_B, feat_A, feat_B, x_AB, x_BA.
template <typename T>
TranslationRecord<T> translate_forward(const ModelBundle<T>& b, const Tensor<T>& x_A, const Tensor<T>& x_B,
                                       const TranslationOptions& opt) {
  Graph<T> g(false);
  auto r = translate_forward(g, b, g.constant(x_A), g.constant(x_B), opt);
  TranslationRecord<T> out;
  out.x_A = x_A;
  out.x_B = x_B;
  out.feat_A = detail::features(g, r.feat_A);
  out.feat_B = detail::features(g, r.feat_B);
  out.x_AB = g.value(r.x_AB);
  out.x_BA = g.value(r.x_BA);
  return out;
}

template <typename T>
TranslationRecord<T> translate_forward(const ModelBundle<T>& b, const Tensor<T>& x_A, const Tensor<T>& x_B) {
  return translate_forward(b, x_A, x_B, options_for(b));
}

// Completes a record produced by translate_forward. Only the record's
// translations and original style vectors are read; the original images are
// never re-encoded.
template <typename T>
void reconstruct(const ModelBundle<T>& b, TranslationRecord<T>& rec, const TranslationOptions& opt) {
  Graph<T> g(false);
  RecordVars<T> r;
  r.x_AB = g.constant(rec.x_AB);
  r.x_BA = g.constant(rec.x_BA);
  r.feat_A.ds = g.constant(rec.feat_A.ds);
  r.feat_B.ds = g.constant(rec.feat_B.ds);
  reconstruct(g, b, r, opt);
  rec.feat_hat_AB = detail::features(g, r.feat_hat_AB);
  rec.feat_hat_BA = detail::features(g, r.feat_hat_BA);
  rec.x_hat_A = g.value(r.x_hat_A);
  rec.x_hat_B = g.value(r.x_hat_B);
}

template <typename T>
TranslationRecord<T> dual_pass(const ModelBundle<T>& b, const Tensor<T>& x_A, const Tensor<T>& x_B,
                               const TranslationOptions& opt) {
  auto rec = translate_forward(b, x_A, x_B, opt);
  reconstruct(b, rec, opt);
  return rec;
}

// x_AB only: g_B(e_A(x_A).di, e_B(x_B).ds).
template <typename T>
Tensor<T> translate(const ModelBundle<T>& b, const Tensor<T>& x_A, const Tensor<T>& x_B) {
  if (x_A.shape().n != x_B.shape().n) {
    throw InputError("translate: batch size mismatch");
  }
  Graph<T> g(false);
  auto fa = encode(g, b, Domain::A, g.constant(x_A));
  auto fb = encode(g, b, Domain::B, g.constant(x_B));
  return g.value(decode(g, b, Domain::B, fa.di, fb.ds));
}

enum class ZeroFeature { DomainIndependent, DomainSpecific };

// zero = DomainIndependent -> g_B(0, x_B^s); zero = DomainSpecific -> g_B(x_A^i, 0).
template <typename T>
Tensor<T> ablate_generate(const ModelBundle<T>& b, const Tensor<T>& x_A, const Tensor<T>& x_B, ZeroFeature zero) {
  const int n = x_A.shape().n;
  if (x_B.shape().n != n) {
    throw InputError("ablate: batch size mismatch");
  }
  Graph<T> g(false);
  Var di;
  Var ds;
  if (zero == ZeroFeature::DomainIndependent) {
    di = g.constant(Tensor<T>(b.arch.di_shape(n)));
    ds = encode(g, b, Domain::B, g.constant(x_B)).ds;
  } else {
    di = encode(g, b, Domain::A, g.constant(x_A)).di;
    ds = g.constant(Tensor<T>(b.arch.ds_shape(n)));
  }
  return g.value(decode(g, b, Domain::B, di, ds));
}

}  // namespace cdgan
