#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdgan/data.hpp"
#include "cdgan/error.hpp"
#include "cdgan/networks.hpp"
#include "cdgan/tensor.hpp"
#include "cdgan/translation.hpp"

namespace cdgan {

// |a & b| / |a | b|, and 1 when both masks are empty.
inline double shape_iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InputError("shape_iou: mask sizes differ (" + std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] & b.bits[i]) != 0 ? 1 : 0;
    uni += (a.bits[i] | b.bits[i]) != 0 ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Mean RGB over the foreground of one sample; nullopt when it has none.
template <typename T>
std::optional<Rgb> foreground_mean(const Tensor<T>& images, int sample, const Rgb& background,
                                   double tol = kDefaultMaskTolerance) {
  const Mask m = mask_of(images, sample, background, tol);
  std::array<double, 3> acc{};
  std::size_t n = 0;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m(x, y)) continue;
      ++n;
      for (int c = 0; c < 3; ++c) acc[static_cast<std::size_t>(c)] += static_cast<double>(images.at(sample, c, y, x));
    }
  }
  if (n == 0) return std::nullopt;
  return Rgb{static_cast<float>(acc[0] / n), static_cast<float>(acc[1] / n), static_cast<float>(acc[2] / n)};
}

struct Adoption {
  bool adopted = false;
  bool empty_foreground = false;  // x_AB had no foreground pixels
};

// Adopted iff the foreground mean of x_AB is strictly closer to that of x_B
// than to that of x_A. Each argument is one sample of a batch.
template <typename T>
Adoption color_adoption(const Tensor<T>& x_AB, int i_AB, const Tensor<T>& x_A, int i_A, const Tensor<T>& x_B,
                        int i_B, const Rgb& background, double tol = kDefaultMaskTolerance) {
  const auto out = foreground_mean(x_AB, i_AB, background, tol);
  if (!out) return {false, true};
  const Rgb src = foreground_mean(x_A, i_A, background, tol).value_or(background);
  const Rgb cond = foreground_mean(x_B, i_B, background, tol).value_or(background);
  return {rgb_distance(*out, cond) < rgb_distance(*out, src), false};
}

template <typename T>
Adoption color_adoption(const Tensor<T>& x_AB, const Tensor<T>& x_A, const Tensor<T>& x_B, const Rgb& background,
                        double tol = kDefaultMaskTolerance) {
  return color_adoption(x_AB, 0, x_A, 0, x_B, 0, background, tol);
}

// Mean pairwise RGB distance between the foreground mean colors of a batch of
// translations. An empty foreground contributes the background color.
template <typename T>
double diversity_of(const Tensor<T>& translations, const Rgb& background, double tol = kDefaultMaskTolerance) {
  const int k = translations.shape().n;
  if (k < 2) {
    throw InputError("diversity needs at least 2 conditionals, got " + std::to_string(k));
  }
  std::vector<Rgb> means;
  means.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) means.push_back(foreground_mean(translations, i, background, tol).value_or(background));
  double acc = 0.0;
  int pairs = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      acc += rgb_distance(means[static_cast<std::size_t>(i)], means[static_cast<std::size_t>(j)]);
      ++pairs;
    }
  }
  return acc / pairs;
}

// Batched translator: (x_A, x_B) with equal batch sizes -> x_AB.
using Translator = std::function<Tensor<float>(const Tensor<float>&, const Tensor<float>&)>;

// Translations of one source image under each conditional.
inline double diversity(const Translator& translate, const Tensor<float>& x_A, const Tensor<float>& conditionals,
                        const Rgb& background, double tol = kDefaultMaskTolerance) {
  const int k = conditionals.shape().n;
  if (k < 2) {
    throw InputError("diversity needs at least 2 conditionals, got " + std::to_string(k));
  }
  if (x_A.shape().n != 1) {
    throw InputError("diversity expects a single source image");
  }
  std::vector<Tensor<float>> sources(static_cast<std::size_t>(k), x_A);
  return diversity_of(translate(stack_batch(sources), conditionals), background, tol);
}

inline double diversity(const ModelBundle<float>& b, const Tensor<float>& x_A, const Tensor<float>& conditionals,
                        const Rgb& background, double tol = kDefaultMaskTolerance) {
  return diversity([&](const Tensor<float>& a, const Tensor<float>& c) { return translate(b, a, c); }, x_A,
                   conditionals, background, tol);
}

// ---------------------------------------------------------------------------

struct ModelTranslators {
  Translator translate;
  Translator zero_di;  // optional: g_B(0, x_B^s)
  Translator zero_ds;  // optional: g_B(x_A^i, 0)
};

inline ModelTranslators translators_for(const ModelBundle<float>& b) {
  return {[&b](const Tensor<float>& a, const Tensor<float>& c) { return translate(b, a, c); },
          [&b](const Tensor<float>& a, const Tensor<float>& c) {
            return ablate_generate(b, a, c, ZeroFeature::DomainIndependent);
          },
          [&b](const Tensor<float>& a, const Tensor<float>& c) {
            return ablate_generate(b, a, c, ZeroFeature::DomainSpecific);
          }};
}

struct EvalConfig {
  int max_cases = 0;               // 0: one case per A image
  int diversity_sources = 16;      // A images used for the diversity score
  int diversity_conditionals = 5;  // conditionals per source
  double tol = kDefaultMaskTolerance;
  int batch = 32;
};

struct CaseRecord {
  int a_index = 0;
  int b_index = 0;
  double shape_iou = 0.0;
  bool adopted = false;
  bool empty_foreground = false;
};

struct EvalReport {
  double shape_iou_mean = 0.0;
  double color_adoption_rate = 0.0;
  double diversity_score = 0.0;
  int n_cases = 0;
  std::optional<double> ablation_iou_zero_ds;  // IoU(mask(g_B(x_A^i, 0)), truth(x_A))
  std::optional<double> ablation_iou_zero_di;  // IoU(mask(g_B(0, x_B^s)), truth(x_A))
  std::vector<CaseRecord> cases;
  std::string config_hash;
  std::string checkpoint_id;

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["shape_iou_mean"] = shape_iou_mean;
    j["color_adoption_rate"] = color_adoption_rate;
    j["diversity_score"] = diversity_score;
    j["n_cases"] = n_cases;
    j["ablation_iou_zero_ds"] = ablation_iou_zero_ds ? nlohmann::ordered_json(*ablation_iou_zero_ds) : nlohmann::ordered_json(nullptr);
    j["ablation_iou_zero_di"] = ablation_iou_zero_di ? nlohmann::ordered_json(*ablation_iou_zero_di) : nlohmann::ordered_json(nullptr);
    j["config_hash"] = config_hash;
    j["checkpoint_id"] = checkpoint_id;
    auto& cs = j["per_case"] = nlohmann::ordered_json::array();
    for (const auto& c : cases) {
      cs.push_back({{"a_index", c.a_index},
                    {"b_index", c.b_index},
                    {"shape_iou", c.shape_iou},
                    {"adopted", c.adopted},
                    {"empty_foreground", c.empty_foreground}});
    }
    return j;
  }

  void write_json(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write report " + path.string());
    out << to_json().dump(2) << '\n';
  }
};

namespace detail {

// Conditional partner for case i: walks B with a stride coprime to its size
// so partners are spread over the set rather than aligned with A's order.
inline int partner_index(int i, int size_B) {
  int stride = 7;
  while (std::gcd(stride, size_B) != 1) ++stride;
  return static_cast<int>((static_cast<long long>(i) * stride + 3) % size_B);
}

// B indices whose color ids cycle through the palette, so k conditionals span
// as many distinct colors as the palette allows.
inline std::vector<std::size_t> cycling_conditionals(const std::vector<TruthRecord>& truth_B, int k, int offset) {
  int n_colors = 0;
  for (const auto& r : truth_B) n_colors = std::max(n_colors, r.color_id + 1);
  std::vector<std::size_t> out;
  std::vector<bool> used(truth_B.size(), false);
  for (int j = 0; j < k; ++j) {
    const int want = j % n_colors;
    const std::size_t n = truth_B.size();
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t idx = (static_cast<std::size_t>(offset) + s) % n;
      if (!used[idx] && truth_B[idx].color_id == want) {
        used[idx] = true;
        out.push_back(idx);
        break;
      }
    }
    if (out.size() != static_cast<std::size_t>(j + 1)) {
      for (std::size_t idx = 0; idx < n && out.size() != static_cast<std::size_t>(j + 1); ++idx) {
        if (!used[idx]) {
          used[idx] = true;
          out.push_back(idx);
        }
      }
    }
  }
  if (out.size() != static_cast<std::size_t>(k)) {
    throw InputError("diversity needs " + std::to_string(k) + " distinct conditional images");
  }
  return out;
}

template <typename F>
std::vector<Tensor<float>> run_batched(const Translator& tr, const DomainDataset& a, const DomainDataset& b,
                                       const std::vector<CaseRecord>& cases, int batch, F&& pick) {
  std::vector<Tensor<float>> out;
  for (std::size_t start = 0; start < cases.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(cases.size(), start + static_cast<std::size_t>(batch));
    std::vector<std::size_t> ia;
    std::vector<std::size_t> ib;
    for (std::size_t i = start; i < end; ++i) {
      ia.push_back(static_cast<std::size_t>(pick(cases[i]).first));
      ib.push_back(static_cast<std::size_t>(pick(cases[i]).second));
    }
    const Tensor<float> y = tr(a.batch(ia), b.batch(ib));
    for (std::size_t i = 0; i < ia.size(); ++i) out.push_back(y.slice_batch(static_cast<int>(i), 1));
  }
  return out;
}

}  // namespace detail

// Aggregates shape preservation, color adoption and diversity over held-out
// synthetic pairs. Case i pairs A image i with a deterministic B partner.
inline EvalReport evaluate(const ModelTranslators& model, const SyntheticData& test, const EvalConfig& cfg = {}) {
  const int size_A = static_cast<int>(test.a.size());
  const int size_B = static_cast<int>(test.b.size());
  if (size_A == 0 || size_B == 0) {
    throw InputError("evaluate: empty test set");
  }
  if (!model.translate) {
    throw InputError("evaluate: no translator");
  }
  const Rgb bg = test.spec.background;
  const int n = cfg.max_cases > 0 ? std::min(cfg.max_cases, size_A) : size_A;
  const int batch = std::max(1, cfg.batch);

  EvalReport rep;
  rep.n_cases = n;
  rep.cases.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rep.cases[static_cast<std::size_t>(i)].a_index = i;
    rep.cases[static_cast<std::size_t>(i)].b_index = detail::partner_index(i, size_B);
  }
  const auto pair_of = [](const CaseRecord& c) { return std::pair{c.a_index, c.b_index}; };

  const auto translations = detail::run_batched(model.translate, test.a, test.b, rep.cases, batch, pair_of);
  double iou_sum = 0.0;
  int adopted = 0;
  for (int i = 0; i < n; ++i) {
    auto& c = rep.cases[static_cast<std::size_t>(i)];
    const Tensor<float>& y = translations[static_cast<std::size_t>(i)];
    c.shape_iou = shape_iou(mask_of(y, 0, bg, cfg.tol), test.truth_A[static_cast<std::size_t>(c.a_index)].mask);
    const Adoption ad = color_adoption(y, 0, test.a.images[static_cast<std::size_t>(c.a_index)], 0,
                                       test.b.images[static_cast<std::size_t>(c.b_index)], 0, bg, cfg.tol);
    c.adopted = ad.adopted;
    c.empty_foreground = ad.empty_foreground;
    iou_sum += c.shape_iou;
    adopted += ad.adopted ? 1 : 0;
  }
  rep.shape_iou_mean = iou_sum / n;
  rep.color_adoption_rate = static_cast<double>(adopted) / n;

  const auto ablation_iou = [&](const Translator& tr) {
    const auto ys = detail::run_batched(tr, test.a, test.b, rep.cases, batch, pair_of);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& c = rep.cases[static_cast<std::size_t>(i)];
      acc += shape_iou(mask_of(ys[static_cast<std::size_t>(i)], 0, bg, cfg.tol),
                       test.truth_A[static_cast<std::size_t>(c.a_index)].mask);
    }
    return acc / n;
  };
  if (model.zero_ds) rep.ablation_iou_zero_ds = ablation_iou(model.zero_ds);
  if (model.zero_di) rep.ablation_iou_zero_di = ablation_iou(model.zero_di);

  const int k = cfg.diversity_conditionals;
  if (k >= 2 && size_B >= k) {
    const int sources = std::max(1, std::min(cfg.diversity_sources, size_A));
    double acc = 0.0;
    for (int s = 0; s < sources; ++s) {
      const auto cond = detail::cycling_conditionals(test.truth_B, k, detail::partner_index(s, size_B));
      acc += diversity(model.translate, test.a.images[static_cast<std::size_t>(s)], test.b.batch(cond), bg, cfg.tol);
    }
    rep.diversity_score = acc / sources;
  }
  return rep;
}

}  // namespace cdgan
