#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cdgan/data.hpp"
#include "cdgan/error.hpp"
#include "cdgan/graph.hpp"
#include "cdgan/losses.hpp"
#include "cdgan/networks.hpp"
#include "cdgan/optim.hpp"
#include "cdgan/tensor.hpp"
#include "cdgan/translation.hpp"

namespace cdgan {

enum class Variant { CdGan, CdGanRec, CdGanNof, CdGanNos, CdGanNoi, GanC, DualGanC, DualGan };

inline constexpr std::array<Variant, 8> kAllVariants{Variant::CdGan,    Variant::CdGanRec, Variant::CdGanNof,
                                                     Variant::CdGanNos, Variant::CdGanNoi, Variant::GanC,
                                                     Variant::DualGanC, Variant::DualGan};

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::CdGan: return "cd-GAN";
    case Variant::CdGanRec: return "cd-GAN-rec";
    case Variant::CdGanNof: return "cd-GAN-nof";
    case Variant::CdGanNos: return "cd-GAN-nos";
    case Variant::CdGanNoi: return "cd-GAN-noi";
    case Variant::GanC: return "GAN-c";
    case Variant::DualGanC: return "DualGAN-c";
    case Variant::DualGan: return "DualGAN";
  }
  return "?";
}

inline std::string variant_names() {
  std::string out;
  for (Variant v : kAllVariants) {
    if (!out.empty()) out += ", ";
    out += to_string(v);
  }
  return out;
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : kAllVariants) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + s + "' (valid: " + variant_names() + ")");
}

// What a variant computes. Inactive dual losses are never built.
struct VariantTraits {
  bool dual_im = true;
  bool dual_di = true;
  bool dual_ds = true;
  bool conditional = true;
  ReconstructionStyle reconstruction = ReconstructionStyle::Skip;

  [[nodiscard]] bool needs_reconstruction() const noexcept { return dual_im || dual_di || dual_ds; }
};

inline VariantTraits traits_of(Variant v) {
  switch (v) {
    case Variant::CdGan: return {};
    case Variant::CdGanRec: return {true, true, true, true, ReconstructionStyle::Reencoded};
    case Variant::CdGanNof: return {true, false, false, true, ReconstructionStyle::Skip};
    case Variant::CdGanNos: return {true, true, false, true, ReconstructionStyle::Skip};
    case Variant::CdGanNoi: return {true, false, true, true, ReconstructionStyle::Skip};
    case Variant::GanC: return {false, false, false, true, ReconstructionStyle::Skip};
    case Variant::DualGanC: return {true, false, false, true, ReconstructionStyle::DualGanC};
    case Variant::DualGan: return {true, false, false, false, ReconstructionStyle::Skip};
  }
  return {};
}

struct TrainConfig {
  Variant variant = Variant::CdGan;
  Mode mode = Mode::Symmetric;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 16;
  std::int64_t total_steps = 0;
  std::uint64_t seed = 0;
  bool saturating_gan = false;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints

  [[nodiscard]] AdamConfig adam() const { return AdamConfig{learning_rate, adam_beta1, adam_beta2, 1e-8}; }

  [[nodiscard]] TranslationOptions translation_options() const {
    const VariantTraits t = traits_of(variant);
    return TranslationOptions{mode, t.conditional, t.reconstruction};
  }

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (variant == Variant::DualGan && mode != Mode::Symmetric) {
      throw ConfigError("DualGAN ignores conditional inputs; mode must be symmetric");
    }
  }
};

// ---------------------------------------------------------------------------
// Minibatch pairing.

// Draws unpaired (A, B) index pairs. Each domain walks its own seeded
// permutation without replacement and reshuffles when an epoch is exhausted,
// so over any window every image appears floor(K/m) or ceil(K/m) times.
class PairSampler {
 public:
  PairSampler() = default;
  PairSampler(std::size_t size_A, std::size_t size_B, std::uint64_t seed) {
    if (size_A == 0 || size_B == 0) {
      throw DataError("cannot sample pairs from an empty dataset");
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5A3Du};
    std::array<std::uint64_t, 2> seeds{};
    std::array<std::uint32_t, 4> words{};
    seq.generate(words.begin(), words.end());
    seeds[0] = (std::uint64_t{words[0]} << 32) | words[1];
    seeds[1] = (std::uint64_t{words[2]} << 32) | words[3];
    streams_[0] = Stream(size_A, seeds[0]);
    streams_[1] = Stream(size_B, seeds[1]);
  }

  struct Draw {
    std::vector<std::size_t> a;
    std::vector<std::size_t> b;
  };

  Draw next(std::size_t k) {
    Draw d;
    d.a.reserve(k);
    d.b.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      d.a.push_back(streams_[0].next());
      d.b.push_back(streams_[1].next());
    }
    return d;
  }

  // Text form of the full sampler state, for checkpoints.
  [[nodiscard]] std::string state() const {
    std::ostringstream os;
    os << "pair-sampler-v1\n";
    for (const auto& s : streams_) s.write(os);
    return os.str();
  }

  static PairSampler from_state(const std::string& text) {
    std::istringstream is(text);
    std::string tag;
    std::getline(is, tag);
    if (tag != "pair-sampler-v1") {
      throw CheckpointError("unrecognized sampler state");
    }
    PairSampler p;
    for (auto& s : p.streams_) s.read(is);
    return p;
  }

  friend bool operator==(const PairSampler& x, const PairSampler& y) { return x.state() == y.state(); }

 private:
  class Stream {
   public:
    Stream() = default;
    Stream(std::size_t n, std::uint64_t seed) : rng_(seed), perm_(n) { reshuffle(); }

    std::size_t next() {
      if (pos_ == perm_.size()) reshuffle();
      return perm_[pos_++];
    }

    void write(std::ostream& os) const {
      os << rng_ << '\n' << pos_ << ' ' << perm_.size();
      for (std::size_t v : perm_) os << ' ' << v;
      os << '\n';
    }

    void read(std::istream& is) {
      std::size_t n = 0;
      if (!(is >> rng_ >> pos_ >> n) || n == 0) throw CheckpointError("corrupt sampler state");
      perm_.assign(n, 0);
      for (auto& v : perm_) {
        if (!(is >> v) || v >= n) throw CheckpointError("corrupt sampler state");
      }
      if (pos_ > n) throw CheckpointError("corrupt sampler state");
    }

   private:
    // Fisher-Yates with explicit draws; std::shuffle's output differs across
    // standard libraries.
    void reshuffle() {
      for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
      for (std::size_t i = perm_.size(); i > 1; --i) {
        std::swap(perm_[i - 1], perm_[detail::index_draw(rng_, i)]);
      }
      pos_ = 0;
    }

    std::mt19937_64 rng_;
    std::vector<std::size_t> perm_;
    std::size_t pos_ = 0;
  };

  std::array<Stream, 2> streams_;
};

struct PairBatch {
  Tensor<float> x_A;
  Tensor<float> x_B;
};

inline PairBatch sample_pairs(const DomainDataset& a, const DomainDataset& b, std::size_t k, PairSampler& sampler) {
  if (a.size() == 0 || b.size() == 0) {
    throw DataError("cannot sample pairs from an empty dataset");
  }
  const auto d = sampler.next(k);
  return {a.batch(d.a), b.batch(d.b)};
}

// ---------------------------------------------------------------------------
// Per-loss gradient normalization.

enum class LossKind { Gan, DualImage, DualDomainIndependent, DualDomainSpecific };
inline constexpr int kLossKinds = 4;

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::Gan: return "gan";
    case LossKind::DualImage: return "dual_im";
    case LossKind::DualDomainIndependent: return "dual_di";
    case LossKind::DualDomainSpecific: return "dual_ds";
  }
  return "?";
}

inline constexpr double kNormThreshold = 1e-12;

// Gradients of one parameter group, one slot per loss. An empty slot is an
// inactive loss.
template <typename T>
struct GroupGrads {
  std::array<std::vector<Tensor<T>>, kLossKinds> by_loss;

  std::vector<Tensor<T>>& operator[](LossKind k) { return by_loss[static_cast<std::size_t>(k)]; }
  const std::vector<Tensor<T>>& operator[](LossKind k) const { return by_loss[static_cast<std::size_t>(k)]; }
};

// Generator-side gradients, indexed by group (e_A, e_B, g_A, g_B).
template <typename T>
using GradSet = std::array<GroupGrads<T>, 4>;

template <typename T>
double global_norm(const std::vector<Tensor<T>>& grads) {
  double acc = 0.0;
  for (const auto& t : grads) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double v = static_cast<double>(t[i]);
      acc += v * v;
    }
  }
  return std::sqrt(acc);
}

template <typename T>
struct NormalizedSum {
  std::vector<Tensor<T>> sum;
  std::array<double, kLossKinds> input_norms{};
  std::array<double, kLossKinds> summand_norms{};
};

// Rescales every loss gradient whose global L2 norm exceeds kNormThreshold to
// unit norm over the whole group, passes the rest through, and sums.
template <typename T>
NormalizedSum<T> normalize_and_sum(const GroupGrads<T>& grads) {
  NormalizedSum<T> out;
  for (int k = 0; k < kLossKinds; ++k) {
    const auto& part = grads.by_loss[static_cast<std::size_t>(k)];
    if (part.empty()) continue;
    const double norm = global_norm(part);
    if (!std::isfinite(norm)) {
      throw TrainingError(std::string("non-finite gradient from loss ") + loss_name(static_cast<LossKind>(k)));
    }
    const double scale = norm > kNormThreshold ? 1.0 / norm : 1.0;
    out.input_norms[static_cast<std::size_t>(k)] = norm;
    out.summand_norms[static_cast<std::size_t>(k)] = norm * scale;
    if (out.sum.empty()) {
      for (const auto& t : part) out.sum.emplace_back(t.shape());
    }
    if (out.sum.size() != part.size()) {
      throw InputError("normalize_and_sum: gradient lists differ in length");
    }
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (part[i].shape() != out.sum[i].shape()) {
        throw InputError("normalize_and_sum: gradient shape mismatch");
      }
      for (std::size_t j = 0; j < part[i].size(); ++j) {
        out.sum[i][j] += static_cast<T>(static_cast<double>(part[i][j]) * scale);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// One training step.

template <typename T>
struct OptimizerState {
  std::array<Adam<T>, kGroupCount> adam;

  OptimizerState() = default;
  explicit OptimizerState(const AdamConfig& cfg) {
    for (auto& a : adam) a = Adam<T>(cfg);
  }
  Adam<T>& operator[](Group g) { return adam[static_cast<std::size_t>(g)]; }
  const Adam<T>& operator[](Group g) const { return adam[static_cast<std::size_t>(g)]; }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

inline constexpr std::array<Group, 4> kGeneratorGroupList{Group::EncoderA, Group::EncoderB, Group::DecoderA,
                                                          Group::DecoderB};
inline constexpr std::array<Group, 2> kDiscriminatorGroupList{Group::DiscriminatorA, Group::DiscriminatorB};

// Everything one step needs before any parameter moves. Splitting the step
// lets tests apply the two sub-steps separately.
template <typename T>
struct StepGradients {
  LossReport report;
  std::array<std::vector<Tensor<T>>, 2> discriminator;  // ascent direction of the GAN objective, d_A then d_B
  GradSet<T> generator;
};

inline std::string describe(const LossReport& r) {
  std::ostringstream os;
  os << "gan=" << r.gan << " dual_im=" << r.dual_im << " dual_di=" << r.dual_di << " dual_ds=" << r.dual_ds;
  return os.str();
}

// Forward dual pass in training mode plus every gradient the step needs.
// Updates batch-norm running statistics; leaves parameters untouched.
template <typename T>
StepGradients<T> compute_step_gradients(ModelBundle<T>& b, const Tensor<T>& x_A, const Tensor<T>& x_B,
                                        const TrainConfig& cfg) {
  const VariantTraits traits = traits_of(cfg.variant);
  const TranslationOptions opt = cfg.translation_options();
  Graph<T> g(true);
  RecordVars<T> r = translate_forward(g, b, g.constant(x_A), g.constant(x_B), opt);
  if (traits.needs_reconstruction()) {
    reconstruct(g, b, r, opt);
  }

  const Var dA_real = discriminate(g, b, Domain::A, r.x_A);
  const Var dA_fake = discriminate(g, b, Domain::A, r.x_BA);
  const Var dB_real = discriminate(g, b, Domain::B, r.x_B);
  const Var dB_fake = discriminate(g, b, Domain::B, r.x_AB);
  const Var gan = gan_objective(g, dA_real, dA_fake, dB_real, dB_fake);
  const Var gen_adv = generator_adversarial(g, dA_fake, dB_fake, cfg.saturating_gan);

  std::array<Var, kLossKinds> gen_losses{gen_adv, Var{}, Var{}, Var{}};
  StepGradients<T> out;
  out.report.gan = static_cast<double>(g.value(gan)[0]);
  if (traits.dual_im) {
    gen_losses[1] = pair_reconstruction(g, r.x_A, r.x_hat_A, r.x_B, r.x_hat_B);
    out.report.dual_im = static_cast<double>(g.value(gen_losses[1])[0]);
  }
  if (traits.dual_di) {
    gen_losses[2] = pair_reconstruction(g, r.feat_A.di, r.feat_hat_AB.di, r.feat_B.di, r.feat_hat_BA.di);
    out.report.dual_di = static_cast<double>(g.value(gen_losses[2])[0]);
  }
  if (traits.dual_ds) {
    gen_losses[3] = style_reconstruction(g, r.feat_A.ds, r.feat_hat_BA.ds, r.feat_B.ds, r.feat_hat_AB.ds, cfg.mode);
    out.report.dual_ds = static_cast<double>(g.value(gen_losses[3])[0]);
  }
  if (!out.report.all_finite() || !std::isfinite(static_cast<double>(g.value(gen_adv)[0]))) {
    throw TrainingError("non-finite loss: " + describe(out.report));
  }

  // Discriminators see the GAN objective only.
  g.backward(gan, kDiscriminatorGroups);
  for (std::size_t i = 0; i < kDiscriminatorGroupList.size(); ++i) {
    for (Tensor<T>* p : group_parameters(b, kDiscriminatorGroupList[i])) {
      out.discriminator[i].push_back(g.param_grad(*p));
    }
  }

  for (int k = 0; k < kLossKinds; ++k) {
    if (!gen_losses[static_cast<std::size_t>(k)].valid()) continue;
    g.backward(gen_losses[static_cast<std::size_t>(k)], kGeneratorGroups);
    for (std::size_t i = 0; i < kGeneratorGroupList.size(); ++i) {
      auto& slot = out.generator[i].by_loss[static_cast<std::size_t>(k)];
      for (Tensor<T>* p : group_parameters(b, kGeneratorGroupList[i])) {
        slot.push_back(g.param_grad(*p));
      }
    }
  }
  return out;
}

// Adam ascent on the GAN objective for d_A and d_B.
template <typename T>
void apply_discriminator_update(ModelBundle<T>& b, OptimizerState<T>& opt, const StepGradients<T>& grads) {
  for (std::size_t i = 0; i < kDiscriminatorGroupList.size(); ++i) {
    const Group grp = kDiscriminatorGroupList[i];
    std::vector<Tensor<T>> descent = grads.discriminator[i];
    for (auto& t : descent) {
      for (std::size_t j = 0; j < t.size(); ++j) t[j] = -t[j];
    }
    auto params = group_parameters(b, grp);
    opt[grp].step(params, descent);
  }
}

// Adam descent on the normalized sum of active loss gradients for each of
// e_A, e_B, g_A, g_B.
template <typename T>
void apply_generator_update(ModelBundle<T>& b, OptimizerState<T>& opt, const StepGradients<T>& grads) {
  std::array<std::vector<Tensor<T>>, 4> sums;
  for (std::size_t i = 0; i < kGeneratorGroupList.size(); ++i) {
    sums[i] = normalize_and_sum(grads.generator[i]).sum;
  }
  for (std::size_t i = 0; i < kGeneratorGroupList.size(); ++i) {
    auto params = group_parameters(b, kGeneratorGroupList[i]);
    opt[kGeneratorGroupList[i]].step(params, sums[i]);
  }
}

template <typename T>
LossReport train_step(ModelBundle<T>& b, OptimizerState<T>& opt, const Tensor<T>& x_A, const Tensor<T>& x_B,
                      const TrainConfig& cfg) {
  const StepGradients<T> grads = compute_step_gradients(b, x_A, x_B, cfg);
  apply_discriminator_update(b, opt, grads);
  apply_generator_update(b, opt, grads);
  return grads.report;
}

// ---------------------------------------------------------------------------
// Training loop.

struct LossRow {
  std::int64_t step = 0;
  LossReport losses;
  double wall_time = 0.0;  // seconds since the run (or resumed run) started
};

// Everything a resumed run needs to continue bit-exactly.
struct TrainingState {
  ModelBundle<float> bundle;
  OptimizerState<float> optimizer;
  PairSampler sampler;
  std::int64_t step = 0;
};

inline TrainingState initial_state(const ArchConfig& arch, const TrainConfig& cfg, std::size_t size_A,
                                   std::size_t size_B) {
  cfg.validate();
  TrainingState s;
  s.bundle = build_bundle<float>(arch, cfg.seed, cfg.mode);
  s.optimizer = OptimizerState<float>(cfg.adam());
  s.sampler = PairSampler(size_A, size_B, cfg.seed);
  return s;
}

struct TrainCallbacks {
  std::function<void(const TrainingState&, const LossRow&)> on_step;
  std::function<void(const TrainingState&)> on_checkpoint;
  // Called with the pre-step state when a step fails; the error is rethrown.
  std::function<void(const TrainingState&, const TrainingError&)> on_failure;
};

// Runs steps state.step + 1 .. cfg.total_steps.
inline std::vector<LossRow> train(TrainingState& state, const DomainDataset& a, const DomainDataset& b,
                                  const TrainConfig& cfg, const TrainCallbacks& cb = {}) {
  cfg.validate();
  if (state.bundle.mode != cfg.mode) {
    throw ConfigError(std::string("bundle mode ") + to_string(state.bundle.mode) + " does not match config mode " +
                      to_string(cfg.mode));
  }
  std::vector<LossRow> history;
  const auto start = std::chrono::steady_clock::now();
  while (state.step < cfg.total_steps) {
    const PairBatch batch = sample_pairs(a, b, static_cast<std::size_t>(cfg.batch_size), state.sampler);
    LossRow row;
    try {
      row.losses = train_step(state.bundle, state.optimizer, batch.x_A, batch.x_B, cfg);
    } catch (const TrainingError& e) {
      const TrainingError located("step " + std::to_string(state.step + 1) + ": " + e.what());
      if (cb.on_failure) cb.on_failure(state, located);
      throw located;
    }
    ++state.step;
    row.step = state.step;
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(row);
    if (cb.on_step) cb.on_step(state, row);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && cb.on_checkpoint) {
      cb.on_checkpoint(state);
    }
  }
  return history;
}

}  // namespace cdgan
