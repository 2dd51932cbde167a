// Copyright 2026 The MDMP Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// mdmp: train, sample, evaluate and plot motion-prediction diffusion models.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

#include "mdmp/checkpoint.hpp"
#include "mdmp/data.hpp"
#include "mdmp/errors.hpp"
#include "mdmp/evaluation.hpp"
#include "mdmp/kinematics.hpp"
#include "mdmp/parallel.hpp"
#include "mdmp/rng.hpp"
#include "mdmp/textcond.hpp"
#include "mdmp/uncertainty.hpp"
#include "mdmp/workflow.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace mdmp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

template <typename T>
void override_with(const std::optional<T>& flag, T& into) {
  if (flag) into = *flag;
}

bool parse_on_off(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw InvalidArgument("expected on or off, got '" + v + "'");
}

void require_file(const std::string& path, const std::string& what) {
  MDMP_CHECK_ARG(!path.empty(), what + " path is not set");
  MDMP_CHECK_ARG(fs::exists(path), what + " not found: " + path);
}

std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  MDMP_CHECK_ARG(static_cast<bool>(in), "cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    if (!have_header) {
      while (std::getline(ss, cell, ',')) header->push_back(cell);
      have_header = true;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path + ": bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void print_mpjpe_table(const MpjpeReport& r) {
  std::cout << "horizon";
  for (double s : r.bucket_seconds) std::cout << '\t' << s << 's';
  std::cout << "\nMPJPE(mm)";
  for (double v : r.bucket_mm) std::cout << '\t' << std::fixed << std::setprecision(1) << v;
  std::cout << std::defaultfloat << '\n';
}

// --- gen-toy --------------------------------------------------------------------

struct GenToyArgs {
  std::string out;
  int train = 512;
  int test = 64;
  int frames = 120;
  double fps = 20.0;
  int prefix = 50;
  std::uint64_t seed = 0;
};

int run_gen_toy(const GenToyArgs& a) {
  ToyGenConfig cfg;
  cfg.frames = a.frames;
  cfg.fps = a.fps;
  cfg.prefix_len = a.prefix;
  cfg.seed = a.seed;
  cfg.num_sequences = a.train;
  cfg.id_prefix = "toy_train";
  write_manifest((fs::path(a.out) / "train").string(), generate_toy_dataset(cfg));
  cfg.num_sequences = a.test;
  cfg.seed = derive_seed(a.seed, {1});
  cfg.id_prefix = "toy_test";
  write_manifest((fs::path(a.out) / "test").string(), generate_toy_dataset(cfg));
  cfg.tree.save((fs::path(a.out) / "skeleton.json").string());
  std::cout << "wrote " << a.train << " train and " << a.test << " test sequences to " << a.out << '\n';
  return kExitOk;
}

// --- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::string> dataset, checkpoint, loss_csv, encoder, variance_learning;
  std::optional<int> steps, batch_size, T, prefix_len, threads;
  std::optional<double> learning_rate, lambda_vlb, text_mask_prob;
  std::optional<std::uint64_t> seed;
  bool no_text = false;
  bool no_motion = false;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig::from_json_text("{}") : RunConfig::from_file(a.config);
  override_with(a.dataset, cfg.dataset);
  override_with(a.checkpoint, cfg.checkpoint);
  override_with(a.loss_csv, cfg.loss_csv);
  override_with(a.steps, cfg.train.steps);
  override_with(a.batch_size, cfg.train.batch_size);
  override_with(a.T, cfg.train.T);
  override_with(a.prefix_len, cfg.train.prefix_len);
  override_with(a.threads, cfg.train.threads);
  override_with(a.learning_rate, cfg.train.learning_rate);
  override_with(a.lambda_vlb, cfg.train.lambda_vlb);
  override_with(a.text_mask_prob, cfg.train.text_mask_prob);
  override_with(a.seed, cfg.train.seed);
  if (a.encoder) cfg.model.encoder = encoder_from_string(*a.encoder);
  if (a.variance_learning) cfg.model.learn_variance = parse_on_off(*a.variance_learning);
  if (a.no_text) cfg.no_text = true;
  if (a.no_motion) cfg.no_motion = true;
  cfg.validate();
  require_file(cfg.dataset, "dataset manifest");
  MDMP_CHECK_ARG(!cfg.checkpoint.empty(), "checkpoint path is not set");
  if (cfg.loss_csv.empty()) cfg.loss_csv = (fs::path(cfg.checkpoint).parent_path() / "loss.csv").string();

  const auto records = read_manifest(cfg.dataset);
  const int every = std::max(1, cfg.train.steps / 20);
  TrainResult result;
  const Checkpoint ck = train_model(cfg, records, &result, [&](int step, const LossTerms& l) {
    if (step % every == 0 || step + 1 == cfg.train.steps) {
      std::cerr << "step " << step << "  L_simple " << l.simple << "  L_VLB " << l.vlb << "  L_hybrid " << l.hybrid
                << '\n';
    }
  });
  if (!fs::path(cfg.checkpoint).parent_path().empty()) fs::create_directories(fs::path(cfg.checkpoint).parent_path());
  save_checkpoint(cfg.checkpoint, ck);
  write_loss_csv(cfg.loss_csv, result.history);
  if (!result.history.empty()) {
    const auto& l = result.history.back();
    std::cout << "final L_simple " << l.simple << " L_VLB " << l.vlb << " L_hybrid " << l.hybrid << '\n';
  }
  std::cout << "checkpoint " << cfg.checkpoint << "\nloss history " << cfg.loss_csv << '\n';
  return kExitOk;
}

// --- sample ---------------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint, prefix, manifest, out = "samples", skeleton, prompt, prompt_id, text_encoder;
  int chains = 8;
  std::optional<double> guidance;
  std::optional<int> steps;
  std::uint64_t seed = 0;
  int threads = 1;
  int fluct_window = 20;
  std::vector<int> presence_joints;
  double presence_scale = 1.0;
  std::string index = "mode";
  bool no_text = false;
};

void write_prediction(const fs::path& dir, const Prediction& p, const Checkpoint& ck, const SampleArgs& a,
                      const JointTree* tree) {
  fs::create_directories(dir);
  for (size_t c = 0; c < p.samples.size(); ++c) {
    write_container((dir / sample_file_name(static_cast<int>(c))).string(), p.samples[c]);
  }
  write_container((dir / "prediction.mdmp").string(), p.point);
  if (p.mode) write_grid_csv((dir / "mode_divergence.csv").string(), *p.mode);
  write_grid_csv((dir / "denoising_fluctuations.csv").string(), p.fluct);
  if (p.variance) write_grid_csv((dir / "predicted_variance.csv").string(), *p.variance);

  const UncertaintyKind kind = uncertainty_from_string(a.index);
  const UncertaintyGrid* grid = &p.fluct;
  if (kind == UncertaintyKind::kModeDivergence && p.mode) grid = &*p.mode;
  if (kind == UncertaintyKind::kPredictedVariance && p.variance) grid = &*p.variance;
  if (ck.layout == Layout::kRaw || (ck.layout == Layout::kHumanMl263 && tree == nullptr)) {
    std::cerr << "warning: no joint positions for layout " << to_string(ck.layout)
              << " without --skeleton; presence zones skipped\n";
    return;
  }
  const MotionTensor pos = to_positions(p.point, tree);
  const auto joints = a.presence_joints.empty() ? default_presence_joints(ck.layout, ck.model.features) : a.presence_joints;
  write_presence_csv((dir / "presence.csv").string(), presence_zones(pos.data, *grid, joints, a.presence_scale));
}

int run_sample(const SampleArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  MDMP_CHECK_ARG(a.prefix.empty() != a.manifest.empty(), "give exactly one of --prefix or --manifest");
  MDMP_CHECK_ARG(a.chains >= 1, "--chains must be at least 1");
  if (!a.prefix.empty()) require_file(a.prefix, "prefix container");
  if (!a.manifest.empty()) require_file(a.manifest, "manifest");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Denoiser model(ck.model, ck.params);
  std::optional<JointTree> tree;
  if (!a.skeleton.empty()) {
    require_file(a.skeleton, "skeleton");
    tree = JointTree::load(a.skeleton);
  }
  const auto encoder = make_text_encoder(a.text_encoder.empty() ? ck.text_encoder : a.text_encoder);
  uncertainty_from_string(a.index);
  if (a.chains < 2) std::cerr << "warning: mode divergence needs at least 2 chains; not written\n";

  PredictOptions opt;
  opt.chains = a.chains;
  opt.guidance_scale = a.guidance.value_or(ck.train.guidance_scale);
  opt.threads = a.threads;
  opt.fluct_window = a.fluct_window;
  opt.mask_text = a.no_text;
  opt.T = a.steps.value_or(0);
  MDMP_CHECK_ARG(opt.T == 0 || (opt.T >= 2 && opt.T <= 10000), "--steps must be in [2, 10000]");

  auto check_layout = [&](const MotionTensor& m, const std::string& what) {
    MDMP_CHECK_ARG(m.layout == ck.layout && m.features() == ck.model.features,
                   what + " has layout " + to_string(m.layout) + " with " + std::to_string(m.features()) +
                       " features; the checkpoint expects " + to_string(ck.layout) + " with " +
                       std::to_string(ck.model.features));
  };
  const std::string chosen = a.prompt_id.empty() ? a.prompt : a.prompt_id;

  if (!a.prefix.empty()) {
    const MotionTensor observed = read_container(a.prefix);
    check_layout(observed, "prefix " + a.prefix);
    opt.seed = a.seed;
    const Prediction p = predict(ck, model, encoder->encode(chosen), observed.data, opt);
    write_prediction(a.out, p, ck, a, tree ? &*tree : nullptr);
    std::cout << "wrote " << p.samples.size() << " samples to " << a.out << '\n';
    return kExitOk;
  }
  const auto records = read_manifest(a.manifest);
  for (const auto& r : records) {
    check_layout(r.motion, "record " + r.id);
    opt.seed = derive_seed(a.seed, {fnv1a64(r.id)});
    const std::string text = chosen.empty() ? r.prompts.front() : chosen;
    const Prediction p = predict(ck, model, encoder->encode(text), r.motion.data, opt);
    write_prediction(fs::path(a.out) / r.id, p, ck, a, tree ? &*tree : nullptr);
  }
  std::cout << "wrote predictions for " << records.size() << " records to " << a.out << '\n';
  return kExitOk;
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string pred, gt, out = "eval", skeleton, index = "mode";
  bool sparsification = false;
  int first_frame = 50;
  int fractions = 20;
};

int run_eval(const EvalArgs& a) {
  require_file(a.gt, "ground-truth manifest");
  require_file(a.pred, "prediction directory");
  const UncertaintyKind kind = uncertainty_from_string(a.index);
  std::optional<JointTree> tree;
  if (!a.skeleton.empty()) {
    require_file(a.skeleton, "skeleton");
    tree = JointTree::load(a.skeleton);
  }
  const auto truth = read_manifest(a.gt);
  std::vector<std::string> missing;
  for (const auto& r : truth) {
    const fs::path dir = fs::path(a.pred) / r.id;
    if (!fs::exists(dir / "prediction.mdmp")) missing.push_back(r.id);
    else if (a.sparsification && !fs::exists(dir / (to_string(kind) + ".csv"))) missing.push_back(r.id + " (" + to_string(kind) + ".csv)");
  }
  if (!missing.empty()) {
    std::cerr << "error: predictions missing for " << missing.size() << " ids:";
    for (const auto& id : missing) std::cerr << ' ' << id;
    std::cerr << '\n';
    return kExitUsage;
  }
  std::vector<UncertaintyGrid> grids;
  grids.reserve(truth.size());
  std::vector<EvalItem> items;
  for (const auto& r : truth) {
    const fs::path dir = fs::path(a.pred) / r.id;
    EvalItem it;
    it.prediction = read_container((dir / "prediction.mdmp").string());
    it.truth = r.motion;
    if (a.sparsification) {
      grids.push_back(read_grid_csv((dir / (to_string(kind) + ".csv")).string(), kind));
      it.uncertainty = &grids.back();
    }
    items.push_back(std::move(it));
  }
  const EvalResult res = evaluate(items, a.first_frame, a.sparsification, tree ? &*tree : nullptr, a.fractions);
  fs::create_directories(a.out);
  write_mpjpe_csv((fs::path(a.out) / "mpjpe.csv").string(), res.mpjpe);
  write_line_plot_svg((fs::path(a.out) / "mpjpe.svg").string(), "MPJPE by horizon", "horizon (s)",
                      res.mpjpe.bucket_seconds, {{"MPJPE (mm)", res.mpjpe.bucket_mm}});
  print_mpjpe_table(res.mpjpe);
  if (res.sparsification) {
    const auto& s = *res.sparsification;
    write_sparsification_csv((fs::path(a.out) / "sparsification.csv").string(), s);
    write_line_plot_svg((fs::path(a.out) / "sparsification.svg").string(), "Sparsification: " + to_string(kind),
                        "fraction removed", s.fractions,
                        {{"uncertainty", s.curve}, {"oracle", s.oracle}, {"random", s.random_baseline}});
    std::cout << "sparsification error " << s.sparsification_error << " (random " << s.random_sparsification_error
              << ")\n";
  }
  return kExitOk;
}

// --- plot -----------------------------------------------------------------------

struct PlotArgs {
  std::string loss, sparsification, grid, out;
};

int run_plot(const PlotArgs& a) {
  const int given = !a.loss.empty() + !a.sparsification.empty() + !a.grid.empty();
  MDMP_CHECK_ARG(given == 1, "give exactly one of --loss, --sparsification or --grid");
  MDMP_CHECK_ARG(!a.out.empty(), "--out is required");
  std::vector<std::string> header;
  if (!a.loss.empty()) {
    require_file(a.loss, "loss CSV");
    const auto rows = read_numeric_csv(a.loss, &header);
    std::vector<double> x, simple, vlb;
    for (const auto& r : rows) {
      MDMP_CHECK_ARG(r.size() >= 3, a.loss + ": expected step,L_simple,L_VLB,L_hybrid rows");
      x.push_back(r[0]);
      simple.push_back(r[1]);
      vlb.push_back(r[2]);
    }
    write_line_plot_svg(a.out, "Training loss", "step", x, {{"L_simple", simple}});
  } else if (!a.sparsification.empty()) {
    require_file(a.sparsification, "sparsification CSV");
    const auto rows = read_numeric_csv(a.sparsification, &header);
    std::vector<double> f, c, o, r;
    for (const auto& row : rows) {
      MDMP_CHECK_ARG(row.size() >= 4, a.sparsification + ": expected fraction,curve,oracle,random rows");
      f.push_back(row[0]);
      c.push_back(row[1]);
      o.push_back(row[2]);
      r.push_back(row[3]);
    }
    write_line_plot_svg(a.out, "Sparsification", "fraction removed", f,
                        {{"uncertainty", c}, {"oracle", o}, {"random", r}});
  } else {
    require_file(a.grid, "uncertainty grid");
    const UncertaintyGrid g = read_grid_csv(a.grid, UncertaintyKind::kModeDivergence);
    std::vector<double> x, mean;
    for (Eigen::Index i = 0; i < g.values.rows(); ++i) {
      x.push_back(static_cast<double>(i));
      mean.push_back(g.values.row(i).mean());
    }
    write_line_plot_svg(a.out, "Mean uncertainty per frame", "frame", x, {{"mean over joints", mean}});
  }
  std::cout << "wrote " << a.out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion prediction with conditional diffusion (train, sample, eval, gen-toy, plot)"};
  app.require_subcommand(1);
  int threads_default = 1;
  try {
    threads_default = default_thread_count(1);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  GenToyArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-toy", "Generate the synthetic toy motion dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--train", gen.train, "Training sequences");
  gen_cmd->add_option("--test", gen.test, "Test sequences");
  gen_cmd->add_option("--frames", gen.frames, "Frames per sequence");
  gen_cmd->add_option("--fps", gen.fps, "Frame rate");
  gen_cmd->add_option("--prefix", gen.prefix, "Observed prefix length");
  gen_cmd->add_option("--seed", gen.seed, "Seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser");
  train_cmd->add_option("--config", tr.config, "JSON run config");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset manifest");
  train_cmd->add_option("--checkpoint", tr.checkpoint, "Output checkpoint");
  train_cmd->add_option("--loss-csv", tr.loss_csv, "Output loss history");
  train_cmd->add_option("--steps", tr.steps, "Optimizer steps");
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
  train_cmd->add_option("--T,--diffusion-steps", tr.T, "Diffusion steps");
  train_cmd->add_option("--prefix-len", tr.prefix_len, "Observed prefix frames");
  train_cmd->add_option("--threads", tr.threads, "Worker threads");
  train_cmd->add_option("--lr", tr.learning_rate, "Learning rate");
  train_cmd->add_option("--lambda", tr.lambda_vlb, "VLB weight");
  train_cmd->add_option("--text-mask-prob", tr.text_mask_prob, "Text masking probability");
  train_cmd->add_option("--seed", tr.seed, "Seed");
  train_cmd->add_option("--encoder", tr.encoder, "Motion encoder: gcn or linear");
  train_cmd->add_option("--variance-learning", tr.variance_learning, "on or off");
  train_cmd->add_flag("--no-text", tr.no_text, "Ablation: never condition on text");
  train_cmd->add_flag("--no-motion", tr.no_motion, "Ablation: no observed prefix (n = 0)");

  SampleArgs sa;
  sa.threads = threads_default;
  auto* sample_cmd = app.add_subcommand("sample", "Sample continuations and uncertainty grids");
  sample_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint")->required();
  sample_cmd->add_option("--prefix", sa.prefix, "Container holding the observed frames");
  sample_cmd->add_option("--manifest", sa.manifest, "Sample every record of a manifest");
  sample_cmd->add_option("--prompt", sa.prompt, "Prompt text");
  sample_cmd->add_option("--prompt-id", sa.prompt_id, "Prompt id (precomputed embeddings)");
  sample_cmd->add_option("--text-encoder", sa.text_encoder, "stub or precomputed:<path>");
  sample_cmd->add_option("--chains", sa.chains, "Independent chains S");
  sample_cmd->add_option("--guidance", sa.guidance, "Guidance scale");
  sample_cmd->add_option("--steps", sa.steps, "Diffusion steps T");
  sample_cmd->add_option("--seed", sa.seed, "Seed");
  sample_cmd->add_option("--threads", sa.threads, "Worker threads");
  sample_cmd->add_option("--fluct-window", sa.fluct_window, "Steps used for denoising fluctuations");
  sample_cmd->add_option("--presence-joints", sa.presence_joints, "Joints for presence zones");
  sample_cmd->add_option("--presence-scale", sa.presence_scale, "Radius scale k");
  sample_cmd->add_option("--index", sa.index, "Index for presence zones: mode, fluct or var");
  sample_cmd->add_option("--skeleton", sa.skeleton, "Joint tree JSON (pose-feature layouts)");
  sample_cmd->add_option("--out", sa.out, "Output directory");
  sample_cmd->add_flag("--no-text", sa.no_text, "Mask the text condition");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "MPJPE and sparsification reports");
  eval_cmd->add_option("--pred", ev.pred, "Prediction directory (one subdirectory per id)")->required();
  eval_cmd->add_option("--gt", ev.gt, "Ground-truth manifest")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory");
  eval_cmd->add_option("--index", ev.index, "Uncertainty index: mode, fluct or var");
  eval_cmd->add_option("--first-frame", ev.first_frame, "First predicted frame");
  eval_cmd->add_option("--fractions", ev.fractions, "Sparsification fractions M");
  eval_cmd->add_option("--skeleton", ev.skeleton, "Joint tree JSON (pose-feature layouts)");
  eval_cmd->add_flag("--sparsification", ev.sparsification, "Also compute sparsification curves");

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "Render a CSV report as SVG");
  plot_cmd->add_option("--loss", pl.loss, "Loss history CSV");
  plot_cmd->add_option("--sparsification", pl.sparsification, "Sparsification CSV");
  plot_cmd->add_option("--grid", pl.grid, "Uncertainty grid CSV");
  plot_cmd->add_option("--out", pl.out, "Output SVG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_toy(gen);
    if (*train_cmd) return run_train(tr);
    if (*sample_cmd) return run_sample(sa);
    if (*eval_cmd) return run_eval(ev);
    if (*plot_cmd) return run_plot(pl);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
