// Acceptance checks. Each invocation runs one criterion and prints exactly one
// line: "PASS criterion N: ..." or "FAIL criterion N: ...". Exit status 0 on
// pass, 1 on fail.
//
//   acceptance --criterion N --work DIR

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdgan/checkpoint.hpp"
#include "cdgan/config.hpp"
#include "cdgan/eval.hpp"
#include "cdgan/losses.hpp"
#include "cdgan/trainer.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace cdgan;
using cdgan::testing::check_gradient_entries;
using cdgan::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. Loss exactness.

void criterion_1(Outcome& o) {
  const std::vector<double> half{0.5, 0.5, 0.5};
  const double gan = gan_loss<double>(half, half, half, half);
  const double gan_err = std::abs(gan - 4.0 * std::log(0.5));
  o.require(gan_err <= 1e-9, "gan_loss(0.5) = 4 ln 0.5 within 1e-9");

  const Shape img{3, 3, 16, 16};
  const auto x_A = random_tensor<double>(img, 1);
  const auto x_B = random_tensor<double>(img, 2);
  const auto di_A = random_tensor<double>(Shape{3, 64, 2, 2}, 3);
  const auto di_B = random_tensor<double>(Shape{3, 64, 2, 2}, 4);
  const auto ds_A = random_tensor<double>(Shape{3, 8, 1, 1}, 5);
  const auto ds_B = random_tensor<double>(Shape{3, 8, 1, 1}, 6);
  const double im0 = dual_image_loss(x_A, x_A, x_B, x_B);
  const double di0 = dual_di_loss(di_A, di_A, di_B, di_B);
  const double ds0 = dual_ds_loss(ds_A, ds_A, ds_B, ds_B, Mode::Symmetric);
  const double ds0a = dual_ds_loss(ds_A, ds_A, ds_B, ds_B, Mode::AsymmetricAToB);
  o.require(im0 == 0.0 && di0 == 0.0 && ds0 == 0.0 && ds0a == 0.0, "dual losses vanish on identity");

  // Asymmetric style loss: perturbing either A-side argument changes nothing.
  const auto ds_hat_B = random_tensor<double>(ds_B.shape(), 7);
  const double base = dual_ds_loss(ds_A, ds_A, ds_B, ds_hat_B, Mode::AsymmetricAToB);
  double max_shift = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto pa = random_tensor<double>(ds_A.shape(), 100 + s, -10, 10);
    const auto pb = random_tensor<double>(ds_A.shape(), 200 + s, -10, 10);
    max_shift = std::max(max_shift, std::abs(dual_ds_loss(pa, pb, ds_B, ds_hat_B, Mode::AsymmetricAToB) - base));
  }
  const double sym_shift =
      std::abs(dual_ds_loss(random_tensor<double>(ds_A.shape(), 9), ds_A, ds_B, ds_hat_B, Mode::Symmetric) -
               dual_ds_loss(ds_A, ds_A, ds_B, ds_hat_B, Mode::Symmetric));
  o.require(max_shift == 0.0, "asymmetric style loss independent of A-side arguments");
  o.require(sym_shift > 0.0, "symmetric style loss depends on A-side arguments");
  o.detail << "gan_err=" << fmt(gan_err) << " identity_losses=" << im0 + di0 + ds0 + ds0a
           << " asym_A_shift=" << max_shift;
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness through full miniature networks.

enum class LossId { Gan, Image, DomainIndependent, DomainSpecific };

Var build_loss(Graph<double>& g, ModelBundle<double>& b, const Tensor<double>& x_A, const Tensor<double>& x_B,
               LossId id) {
  const TranslationOptions opt{b.mode, true, ReconstructionStyle::Skip};
  auto r = translate_forward(g, b, g.constant(x_A), g.constant(x_B), opt);
  reconstruct(g, b, r, opt);
  switch (id) {
    case LossId::Gan:
      return gan_objective(g, discriminate(g, b, Domain::A, r.x_A), discriminate(g, b, Domain::A, r.x_BA),
                           discriminate(g, b, Domain::B, r.x_B), discriminate(g, b, Domain::B, r.x_AB));
    case LossId::Image:
      return pair_reconstruction(g, r.x_A, r.x_hat_A, r.x_B, r.x_hat_B);
    case LossId::DomainIndependent:
      return pair_reconstruction(g, r.feat_A.di, r.feat_hat_AB.di, r.feat_B.di, r.feat_hat_BA.di);
    case LossId::DomainSpecific:
      return style_reconstruction(g, r.feat_A.ds, r.feat_hat_BA.ds, r.feat_B.ds, r.feat_hat_AB.ds, b.mode);
  }
  return {};
}

void criterion_2(Outcome& o) {
  // Smallest legal architecture (16x16; an 8x8 input cannot pass four
  // stride-2 layers to a non-empty feature map), base width 4, double.
  const ArchConfig a = cdgan::testing::tiny_arch();
  auto b = build_bundle<double>(a, 2024);
  const auto x_A = random_tensor<double>(a.image_shape(2), 11);
  const auto x_B = random_tensor<double>(a.image_shape(2), 12);
  const std::vector<std::pair<LossId, const char*>> losses{{LossId::Gan, "gan"},
                                                           {LossId::Image, "dual_im"},
                                                           {LossId::DomainIndependent, "dual_di"},
                                                           {LossId::DomainSpecific, "dual_ds"}};
  std::mt19937_64 rng(99);
  double worst = 0.0;
  int checked = 0;
  for (const auto& [id, name] : losses) {
    const std::vector<Group> groups = id == LossId::Gan
                                          ? std::vector<Group>{Group::EncoderA, Group::EncoderB, Group::DecoderA,
                                                               Group::DecoderB, Group::DiscriminatorA,
                                                               Group::DiscriminatorB}
                                          : std::vector<Group>{Group::EncoderA, Group::EncoderB, Group::DecoderA,
                                                               Group::DecoderB};
    for (Group grp : groups) {
      const auto entries = cdgan::testing::sample_entries(group_parameters(b, grp), 100, rng);
      const auto res = check_gradient_entries(
          [&, id = id](Graph<double>& g) { return build_loss(g, b, x_A, x_B, id); }, entries, kAllGroups);
      checked += res.checked;
      worst = std::max(worst, res.max_rel_error);
      o.require(res.max_rel_error <= 1e-3, std::string(name) + "/" + group_name(grp) + " rel err " +
                                               fmt(res.max_rel_error));
      o.require(res.checked == 100, std::string(name) + "/" + group_name(grp) + " has 100 entries");
    }
  }
  o.detail << "max_rel_err=" << fmt(worst, 3) << " over " << checked << " parameter entries (4 losses)";
}

// ---------------------------------------------------------------------------
// 3. Algorithm fidelity.

std::map<std::string, Tensor<float>> parameters_of(const ModelBundle<float>& b) {
  std::map<std::string, Tensor<float>> out;
  visit_tensors(b, [&](const std::string& n, const Tensor<float>& t, Group, TensorKind k) {
    if (k == TensorKind::Parameter) out.emplace(n, t);
  });
  return out;
}

ArchConfig desk_arch() {
  const fs::path cfg = fs::path(CDGAN_SOURCE_DIR) / "configs" / "desk_synthetic.toml";
  return RunConfig::from_file(cfg).arch();
}

SyntheticSpec desk_spec(int count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.image_size = 32;
  spec.count = count;
  spec.seed = seed;
  return spec;
}

void criterion_3(Outcome& o) {
  const ArchConfig arch = desk_arch();
  const auto data = generate_synthetic(desk_spec(64, 5));
  TrainConfig cfg;
  cfg.total_steps = 20;
  cfg.seed = 3;

  // Summand norms after normalization, on a real step's gradients.
  auto bundle = build_bundle<float>(arch, 3);
  PairSampler sampler(data.a.size(), data.b.size(), 3);
  const auto batch = sample_pairs(data.a, data.b, 16, sampler);
  const auto grads = compute_step_gradients(bundle, batch.x_A, batch.x_B, cfg);
  double spread = 0.0;
  for (const auto& group : grads.generator) {
    const auto ns = normalize_and_sum(group);
    const auto [lo, hi] = std::minmax_element(ns.summand_norms.begin(), ns.summand_norms.end());
    o.require(*lo > 0.0, "all four losses active for cd-GAN");
    spread = std::max(spread, *hi - *lo);
  }
  o.require(spread <= 1e-6, "summand norms equal within 1e-6");

  // Discriminator sub-step scoping.
  OptimizerState<float> opt(cfg.adam());
  const auto before = parameters_of(bundle);
  apply_discriminator_update(bundle, opt, grads);
  int d_changed = 0;
  int other_changed = 0;
  for (const auto& [name, t] : parameters_of(bundle)) {
    if (t == before.at(name)) continue;
    (name.rfind("d_", 0) == 0 ? d_changed : other_changed) += 1;
  }
  o.require(d_changed > 0 && other_changed == 0, "discriminator sub-step touches only d_A/d_B");

  // Every variant, 20 seeded steps.
  int finite_variants = 0;
  for (Variant v : kAllVariants) {
    TrainConfig vc = cfg;
    vc.variant = v;
    auto state = initial_state(arch, vc, data.a.size(), data.b.size());
    bool ok = true;
    try {
      const auto rows = train(state, data.a, data.b, vc);
      ok = rows.size() == 20;
      for (const auto& r : rows) ok = ok && r.losses.all_finite();
    } catch (const Error& e) {
      ok = false;
      o.detail << to_string(v) << ": " << e.what() << " ";
    }
    o.require(ok, std::string(to_string(v)) + " 20-step smoke");
    finite_variants += ok ? 1 : 0;
  }
  o.detail << "summand_norm_spread=" << fmt(spread, 3) << " d_changed=" << d_changed
           << " non_d_changed=" << other_changed << " variants_ok=" << finite_variants << "/8";
}

// ---------------------------------------------------------------------------
// 4. Synthetic end-to-end.

void criterion_4(Outcome& o, const fs::path& work) {
  const fs::path dir = work / "criterion_4";
  fs::create_directories(dir);
  const fs::path cfg_path = fs::path(CDGAN_SOURCE_DIR) / "configs" / "desk_synthetic.toml";
  const RunConfig rc = RunConfig::from_file(cfg_path);
  const ArchConfig arch = rc.arch();
  const TrainConfig tc = rc.train();
  o.require(tc.total_steps <= 20000, "step budget <= 20k");
  o.require(tc.batch_size == 16 && arch.image_size == 32, "batch 16 at 32x32");

  const auto train_data = generate_synthetic(desk_spec(512, 1));
  const auto test_data = generate_synthetic(desk_spec(128, 2));

  // Resume from a checkpoint left by an earlier invocation with the same
  // config; the result is bit-identical to an uninterrupted run.
  const fs::path latest = dir / "latest.ckpt";
  const fs::path stamp = dir / "config.hash";
  TrainingState state;
  bool resumed = false;
  if (fs::exists(latest) && fs::exists(stamp)) {
    std::ifstream in(stamp);
    std::string h;
    in >> h;
    if (h == rc.hash()) {
      state = training_state_from(load_checkpoint(latest));
      resumed = true;
    }
  }
  if (!resumed) {
    state = initial_state(arch, tc, train_data.a.size(), train_data.b.size());
    std::ofstream(stamp) << rc.hash() << '\n';
  }
  const std::int64_t start_step = state.step;
  TrainCallbacks cb;
  cb.on_checkpoint = [&](const TrainingState& s) { save_training_state(latest, s); };
  const auto t0 = std::chrono::steady_clock::now();
  train(state, train_data.a, train_data.b, tc, cb);
  save_training_state(latest, state);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

  const EvalReport rep = evaluate(translators_for(state.bundle), test_data);
  rep.write_json(dir / "eval_report.json");
  const double zero_ds = rep.ablation_iou_zero_ds.value_or(0.0);
  const double zero_di = rep.ablation_iou_zero_di.value_or(1.0);
  o.require(rep.shape_iou_mean >= 0.6, "shape_iou_mean >= 0.6");
  o.require(rep.color_adoption_rate >= 0.8, "color_adoption_rate >= 0.8");
  o.require(rep.diversity_score >= 0.3, "diversity_score >= 0.3");
  o.require(zero_ds > zero_di, "IoU(ds=0) > IoU(di=0)");
  o.detail << "steps=" << state.step << (resumed ? " (resumed at " + std::to_string(start_step) + ")" : "")
           << " shape_iou=" << fmt(rep.shape_iou_mean) << " adoption=" << fmt(rep.color_adoption_rate)
           << " diversity=" << fmt(rep.diversity_score) << " iou_ds0=" << fmt(zero_ds) << " iou_di0=" << fmt(zero_di)
           << " train_minutes=" << fmt(minutes, 3);
}

// ---------------------------------------------------------------------------
// 5. Metric sanity oracles.

void criterion_5(Outcome& o) {
  const auto test = generate_synthetic(desk_spec(128, 2));
  const Rgb bg = test.spec.background;
  const auto oracle = evaluate(ModelTranslators{cdgan::testing::recolor_oracle(bg), {}, {}}, test);
  const auto identity = evaluate(ModelTranslators{cdgan::testing::identity_translator(), {}, {}}, test);
  o.require(oracle.shape_iou_mean >= 0.98, "oracle shape_iou_mean >= 0.98");
  o.require(oracle.color_adoption_rate == 1.0, "oracle color_adoption_rate = 1");
  o.require(identity.color_adoption_rate == 0.0, "identity color_adoption_rate = 0");
  o.detail << "oracle shape_iou=" << fmt(oracle.shape_iou_mean) << " adoption=" << fmt(oracle.color_adoption_rate)
           << "; identity adoption=" << fmt(identity.color_adoption_rate);
}

// ---------------------------------------------------------------------------
// 6. Reproducibility through the CLI.

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDGAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b, int& files) {
  files = 0;
  bool same = true;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    same = same && fs::exists(other) && slurp(e.path()) == slurp(other);
  }
  int other_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other_files += e.is_regular_file() ? 1 : 0;
  return same && other_files == files;
}

std::vector<std::vector<double>> loss_rows(const fs::path& csv) {
  std::vector<std::vector<double>> rows;
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    row.pop_back();  // wall_time
    rows.push_back(row);
  }
  return rows;
}

void criterion_6(Outcome& o, const fs::path& work) {
  const fs::path dir = work / "criterion_6";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const char* run : {"r1", "r2"}) {
    const fs::path d = dir / run;
    o.require(run_cli("synth-data --out " + (d / "data").string() + " --count 32 --size 32 --seed 4") == 0,
              "synth-data exits 0");
    o.require(run_cli("train --config " + (fs::path(CDGAN_SOURCE_DIR) / "configs" / "desk_synthetic.toml").string() +
                      " --data " + (d / "data").string() + " --out " + (d / "train").string() +
                      " --total-steps 10") == 0,
              "train exits 0");
    const fs::path a = dir / "r1" / "data" / "domainA";
    const fs::path b = dir / "r1" / "data" / "domainB";
    o.require(run_cli("translate --checkpoint " + (dir / "r1" / "train" / "final.ckpt").string() + " --inputs " +
                      (a / "000000.png").string() + "," + (a / "000001.png").string() + " --conditionals " +
                      (b / "000002.png").string() + "," + (b / "000003.png").string() + " --out " +
                      (d / "translate").string()) == 0,
              "translate exits 0");
  }
  int data_files = 0;
  int grid_files = 0;
  const bool data_same = same_tree(dir / "r1" / "data", dir / "r2" / "data", data_files);
  const bool grid_same = same_tree(dir / "r1" / "translate", dir / "r2" / "translate", grid_files);
  o.require(data_same && data_files > 0, "synth-data byte-identical");
  o.require(grid_same && grid_files == 1, "translate byte-identical");

  const auto l1 = loss_rows(dir / "r1" / "train" / "loss.csv");
  const auto l2 = loss_rows(dir / "r2" / "train" / "loss.csv");
  double worst = 0.0;
  const bool ten = l1.size() >= 10 && l2.size() >= 10;
  o.require(ten, "10 loss rows per run");
  for (std::size_t i = 0; ten && i < 10; ++i) {
    for (std::size_t j = 0; j < l1[i].size(); ++j) worst = std::max(worst, std::abs(l1[i][j] - l2[i][j]));
  }
  o.require(worst <= 1e-5, "loss CSV rows within 1e-5");
  o.detail << "data_files=" << data_files << (data_same ? " identical" : " differ") << " translate_grid"
           << (grid_same ? " identical" : " differs") << " loss_max_abs_diff=" << worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cd-GAN acceptance checks"};
  int criterion = 0;
  std::string work = "acceptance_work";
  app.add_option("--criterion", criterion, "Criterion number (1-6)")->required()->check(CLI::Range(1, 6));
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  static const char* kTitles[] = {"",
                                  "loss exactness",
                                  "gradient correctness",
                                  "training-step fidelity",
                                  "synthetic end-to-end",
                                  "metric sanity oracles",
                                  "reproducibility"};
  Outcome o;
  try {
    fs::create_directories(work);
    switch (criterion) {
      case 1: criterion_1(o); break;
      case 2: criterion_2(o); break;
      case 3: criterion_3(o); break;
      case 4: criterion_4(o, work); break;
      case 5: criterion_5(o); break;
      case 6: criterion_6(o, work); break;
      default: break;
    }
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << "[error: " << e.what() << "]";
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << criterion << " (" << kTitles[criterion]
            << "): " << o.detail.str() << std::endl;
  return o.pass ? 0 : 1;
}
