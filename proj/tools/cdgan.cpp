// cdgan: dataset generation, training, translation grids, ablation grids and
// evaluation for conditional image-to-image translation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdgan/checkpoint.hpp"
#include "cdgan/config.hpp"
#include "cdgan/data.hpp"
#include "cdgan/eval.hpp"
#include "cdgan/grid.hpp"
#include "cdgan/trainer.hpp"
#include "cdgan/translation.hpp"

namespace fs = std::filesystem;
using namespace cdgan;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// --out wins; otherwise CDGAN_OUT; otherwise ./cdgan_out.
fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CDGAN_OUT"); env != nullptr && *env != '\0') return env;
  return "cdgan_out";
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory " + p.string() + ": " + ec.message());
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Loads an image at exactly the model resolution.
Tensor<float> load_model_image(const fs::path& p, const ArchConfig& arch) {
  const Image8 img = read_image(p);
  if (img.width != arch.image_size || img.height != arch.image_size) {
    throw InputError("image " + p.string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     " but the checkpoint expects " + std::to_string(arch.image_size) + "x" +
                     std::to_string(arch.image_size));
  }
  return image_to_tensor(img, arch.image_size);
}

struct PairedInputs {
  std::vector<Tensor<float>> a;
  std::vector<Tensor<float>> b;
};

// Rows are formed pairwise, or by broadcasting a single source or single
// conditional across the other list.
PairedInputs pair_inputs(const std::vector<std::string>& inputs, const std::vector<std::string>& conds,
                         const ArchConfig& arch) {
  if (inputs.empty() || conds.empty()) throw ConfigError("need at least one input and one conditional image");
  const std::size_t rows = std::max(inputs.size(), conds.size());
  if (inputs.size() != conds.size() && inputs.size() != 1 && conds.size() != 1) {
    throw ConfigError("inputs and conditionals must have equal counts, or one side must be a single image");
  }
  std::vector<Tensor<float>> a_imgs;
  std::vector<Tensor<float>> b_imgs;
  for (const auto& p : inputs) a_imgs.push_back(load_model_image(p, arch));
  for (const auto& p : conds) b_imgs.push_back(load_model_image(p, arch));
  PairedInputs out;
  for (std::size_t r = 0; r < rows; ++r) {
    out.a.push_back(a_imgs[a_imgs.size() == 1 ? 0 : r]);
    out.b.push_back(b_imgs[b_imgs.size() == 1 ? 0 : r]);
  }
  return out;
}

RunConfig load_run_config(const std::string& file, const std::vector<std::string>& overrides) {
  RunConfig cfg = file.empty() ? RunConfig{} : RunConfig::from_file(file);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string shapes = "circle,square";
  int count = 512;
  std::uint64_t seed = 0;
  int size = 32;
};

int cmd_synth(const SynthArgs& args) {
  SyntheticSpec spec;
  spec.shapes.clear();
  for (const auto& s : split(args.shapes, ',')) spec.shapes.push_back(parse_shape(s));
  spec.count = args.count;
  spec.seed = args.seed;
  spec.image_size = args.size;
  const fs::path root = output_root(args.out);
  write_synthetic(generate_synthetic(spec), root);
  std::cout << "wrote " << spec.count << " + " << spec.count << " images with ground truth to " << root.string()
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string out;
  std::string variant;
  std::string mode;
  long long total_steps = -1;
  long long seed = -1;
  int batch_size = -1;
  std::string resume;
};

void rewrite_history(const fs::path& csv, std::int64_t keep_through) {
  std::vector<std::string> kept;
  if (std::ifstream in(csv); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line.rfind("step,", 0) == 0) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= keep_through) kept.push_back(line);
    }
  }
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  out << "step,gan,dual_im,dual_di,dual_ds,wall_time\n";
  for (const auto& l : kept) out << l << '\n';
}

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = load_run_config(args.config, args.overrides);
  if (!args.data.empty()) cfg.set("data.root", args.data, "--data");
  if (!args.variant.empty()) cfg.set("train.variant", args.variant, "--variant");
  if (!args.mode.empty()) cfg.set("train.mode", args.mode, "--mode");
  if (args.total_steps >= 0) cfg.set("train.total_steps", std::to_string(args.total_steps), "--total-steps");
  if (args.seed >= 0) cfg.set("train.seed", std::to_string(args.seed), "--seed");
  if (args.batch_size >= 0) cfg.set("train.batch_size", std::to_string(args.batch_size), "--batch-size");
  const ArchConfig arch = cfg.arch();
  const TrainConfig tc = cfg.train();

  const fs::path out = output_root(args.out);
  ensure_dir(out);
  write_text(out / "config.toml", cfg.to_toml());

  const fs::path root = cfg.get("data.root");
  const DomainDataset a = load_folder_dataset(root, Domain::A, arch.image_size);
  const DomainDataset b = load_folder_dataset(root, Domain::B, arch.image_size);

  TrainingState state;
  const fs::path csv = out / "loss.csv";
  if (!args.resume.empty()) {
    state = training_state_from(load_checkpoint(args.resume));
    if (!(state.bundle.arch == arch)) throw ConfigError("checkpoint architecture does not match the config");
    if (state.bundle.mode != tc.mode) throw ConfigError("checkpoint mode does not match the config");
    rewrite_history(csv, state.step);
    std::cout << "resumed from " << args.resume << " at step " << state.step << "\n";
  } else {
    state = initial_state(arch, tc, a.size(), b.size());
    rewrite_history(csv, 0);
  }

  std::ofstream history(csv, std::ios::binary | std::ios::app);
  history << std::setprecision(9);
  TrainCallbacks cb;
  cb.on_step = [&](const TrainingState&, const LossRow& row) {
    history << row.step << ',' << row.losses.gan << ',' << row.losses.dual_im << ',' << row.losses.dual_di << ','
            << row.losses.dual_ds << ',' << row.wall_time << '\n';
    history.flush();
    if (row.step % 100 == 0 || row.step == tc.total_steps) {
      std::cout << "step " << row.step << " " << describe(row.losses) << "\n";
    }
  };
  cb.on_checkpoint = [&](const TrainingState& s) {
    save_training_state(out / ("step_" + std::to_string(s.step) + ".ckpt"), s);
    save_training_state(out / "latest.ckpt", s);
  };
  cb.on_failure = [&](const TrainingState& s, const TrainingError& e) {
    const fs::path diag = out / "diagnostic";
    ensure_dir(diag);
    save_training_state(diag / "state.ckpt", s);
    write_text(diag / "error.txt", std::string(e.what()) + "\n");
  };
  train(state, a, b, tc, cb);
  save_training_state(out / "final.ckpt", state);
  std::cout << "trained " << to_string(tc.variant) << " (" << to_string(tc.mode) << ") to step " << state.step
            << "; artifacts in " << out.string() << "\n";
  return 0;
}

struct GridArgs {
  std::string checkpoint;
  std::string inputs;
  std::string conditionals;
  std::string output;
  std::string out;
};

int cmd_grid(const GridArgs& args, bool ablate) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const ModelBundle<float>& b = ck.bundle;
  const PairedInputs in = pair_inputs(split(args.inputs, ','), split(args.conditionals, ','), b.arch);
  const Tensor<float> x_A = stack_batch(in.a);
  const Tensor<float> x_B = stack_batch(in.b);
  const Tensor<float> x_AB = translate(b, x_A, x_B);
  Tensor<float> zero_di;
  Tensor<float> zero_ds;
  if (ablate) {
    zero_di = ablate_generate(b, x_A, x_B, ZeroFeature::DomainIndependent);
    zero_ds = ablate_generate(b, x_A, x_B, ZeroFeature::DomainSpecific);
  }
  std::vector<std::vector<Tensor<float>>> rows;
  for (int r = 0; r < x_A.shape().n; ++r) {
    std::vector<Tensor<float>> row{x_A.slice_batch(r, 1), x_B.slice_batch(r, 1), x_AB.slice_batch(r, 1)};
    if (ablate) {
      row.push_back(zero_di.slice_batch(r, 1));
      row.push_back(zero_ds.slice_batch(r, 1));
    }
    rows.push_back(std::move(row));
  }
  fs::path path = args.output;
  if (path.empty()) {
    const fs::path out = output_root(args.out);
    ensure_dir(out);
    path = out / (ablate ? "ablate.png" : "translate.png");
  }
  write_png(path, make_grid(rows));
  std::cout << "wrote " << rows.size() << "-row grid to " << path.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string report;
  std::string out;
  bool json = false;
  int max_cases = 0;
};

int cmd_eval(const EvalArgs& args) {
  if (!has_synthetic_truth(args.data)) {
    throw DataError("no ground truth under " + args.data +
                    ": eval requires a synthetic dataset written by synth-data (truth.jsonl and synthetic.json)");
  }
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  const SyntheticData test = load_synthetic(args.data);
  if (test.spec.image_size != ck.bundle.arch.image_size) {
    throw InputError("dataset image size " + std::to_string(test.spec.image_size) +
                     " does not match the checkpoint's " + std::to_string(ck.bundle.arch.image_size));
  }
  EvalConfig ec;
  ec.max_cases = args.max_cases;
  EvalReport rep = evaluate(translators_for(ck.bundle), test, ec);
  rep.checkpoint_id = hex64(ck.checksum);
  std::ostringstream cfg_text;
  cfg_text << "max_cases=" << ec.max_cases << ";diversity_sources=" << ec.diversity_sources
           << ";diversity_conditionals=" << ec.diversity_conditionals << ";tol=" << ec.tol;
  const std::string s = cfg_text.str();
  rep.config_hash = hex64(fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));

  fs::path path = args.report;
  if (path.empty()) {
    const fs::path out = output_root(args.out);
    ensure_dir(out);
    path = out / "eval_report.json";
  }
  rep.write_json(path);
  if (args.json) {
    std::cout << rep.to_json().dump(2) << "\n";
  } else {
    std::cout << std::setprecision(6) << "shape_iou_mean " << rep.shape_iou_mean << "\n"
              << "color_adoption_rate " << rep.color_adoption_rate << "\n"
              << "diversity_score " << rep.diversity_score << "\n"
              << "ablation_iou_zero_ds " << rep.ablation_iou_zero_ds.value_or(0.0) << "\n"
              << "ablation_iou_zero_di " << rep.ablation_iou_zero_di.value_or(0.0) << "\n"
              << "n_cases " << rep.n_cases << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional image-to-image translation: data, training, translation, ablation, evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Generate the synthetic two-domain shape dataset");
  s->add_option("--out", synth.out, "Output dataset directory");
  s->add_option("--shapes", synth.shapes, "Comma-separated subset of circle,square,triangle,cross");
  s->add_option("--count", synth.count, "Images per domain")->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--size", synth.size, "Image side in pixels")->check(CLI::Range(8, 4096));

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "Config file (flat [section] key = value)");
  t->add_option("--set", tr.overrides, "Override, e.g. train.batch_size=8 (repeatable)");
  t->add_option("--data", tr.data, "Dataset root containing domainA/ and domainB/");
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--variant", tr.variant, "Training variant: " + variant_names());
  t->add_option("--mode", tr.mode, "symmetric or asymmetric_A_to_B");
  t->add_option("--total-steps", tr.total_steps, "Number of training steps")->check(CLI::NonNegativeNumber);
  t->add_option("--seed", tr.seed, "Seed for initialization and pairing")->check(CLI::NonNegativeNumber);
  t->add_option("--batch-size", tr.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  t->add_option("--resume", tr.resume, "Checkpoint to resume from");

  GridArgs tl;
  auto* tcmd = app.add_subcommand("translate", "Write a grid of [x_A | x_B | x_AB] rows");
  GridArgs ab;
  auto* acmd = app.add_subcommand("ablate", "Write a grid of [x_A | x_B | x_AB | di=0 | ds=0] rows");
  for (auto [cmd, args] : {std::pair{tcmd, &tl}, std::pair{acmd, &ab}}) {
    cmd->add_option("--checkpoint", args->checkpoint, "Model checkpoint")->required();
    cmd->add_option("--inputs", args->inputs, "Comma-separated domain-A images")->required();
    cmd->add_option("--conditionals", args->conditionals, "Comma-separated domain-B conditional images")
        ->required();
    cmd->add_option("--output", args->output, "Grid PNG path");
    cmd->add_option("--out", args->out, "Output directory when --output is not given");
  }

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a synthetic dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  e->add_option("--data", ev.data, "Synthetic dataset root (with truth.jsonl)")->required();
  e->add_option("--report", ev.report, "Report JSON path");
  e->add_option("--out", ev.out, "Output directory when --report is not given");
  e->add_flag("--json", ev.json, "Print the report as JSON");
  e->add_option("--max-cases", ev.max_cases, "Limit the number of cases (0 = all)")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(tr);
    if (tcmd->parsed()) return cmd_grid(tl, false);
    if (acmd->parsed()) return cmd_grid(ab, true);
    if (e->parsed()) return cmd_eval(ev);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
