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

#include "mdmp/workflow.hpp"

#include "mdmp/errors.hpp"
#include "mdmp/kinematics.hpp"
#include "mdmp/parallel.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace mdmp {

using Eigen::Index;
using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& into, std::set<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.insert(key);
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!seen.count(k)) throw InvalidArgument("unknown config key '" + where + k + "'");
  }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  MDMP_CHECK_ARG(j.is_object(), "config must be a JSON object");
  RunConfig c;
  c.train.threads = default_thread_count(1);
  std::set<std::string> seen;
  take(j, "lambda_vlb", c.train.lambda_vlb, seen);
  take(j, "guidance_scale", c.train.guidance_scale, seen);
  take(j, "text_mask_prob", c.train.text_mask_prob, seen);
  take(j, "batch_size", c.train.batch_size, seen);
  take(j, "learning_rate", c.train.learning_rate, seen);
  take(j, "steps", c.train.steps, seen);
  take(j, "T", c.train.T, seen);
  take(j, "prefix_len", c.train.prefix_len, seen);
  take(j, "seed", c.train.seed, seen);
  take(j, "grad_clip_norm", c.train.grad_clip_norm, seen);
  take(j, "threads", c.train.threads, seen);
  take(j, "dataset", c.dataset, seen);
  take(j, "checkpoint", c.checkpoint, seen);
  take(j, "output_dir", c.output_dir, seen);
  take(j, "loss_csv", c.loss_csv, seen);
  take(j, "text_encoder", c.text_encoder, seen);
  take(j, "chains", c.chains, seen);
  take(j, "presence_joints", c.presence_joints, seen);
  take(j, "presence_scale", c.presence_scale, seen);
  take(j, "fluct_window", c.fluct_window, seen);
  take(j, "no_text", c.no_text, seen);
  take(j, "no_motion", c.no_motion, seen);
  take(j, "min_duration_s", c.min_duration_s, seen);
  take(j, "sample_seed", c.sample_seed, seen);
  std::string s;
  if (j.contains("layout")) {
    take(j, "layout", s, seen);
    c.layout = layout_from_string(s);
  }
  if (j.contains("index")) {
    take(j, "index", s, seen);
    c.index = uncertainty_from_string(s);
  }
  if (j.contains("variance_learning")) take(j, "variance_learning", c.model.learn_variance, seen);
  if (j.contains("model")) {
    seen.insert("model");
    const json& m = j["model"];
    MDMP_CHECK_ARG(m.is_object(), "config key 'model' must be an object");
    std::set<std::string> mseen;
    take(m, "latent_dim", c.model.latent_dim, mseen);
    take(m, "layers", c.model.layers, mseen);
    take(m, "heads", c.model.heads, mseen);
    take(m, "ff_dim", c.model.ff_dim, mseen);
    take(m, "dropout", c.model.dropout, mseen);
    take(m, "gcn_hidden", c.model.gcn_hidden, mseen);
    take(m, "gcn_layers", c.model.gcn_layers, mseen);
    if (m.contains("encoder")) {
      take(m, "encoder", s, mseen);
      c.model.encoder = encoder_from_string(s);
    }
    reject_unknown(m, mseen, "model.");
  }
  reject_unknown(j, seen, "");
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  MDMP_CHECK_ARG(static_cast<bool>(in), "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
  json j = {{"lambda_vlb", train.lambda_vlb},
            {"guidance_scale", train.guidance_scale},
            {"text_mask_prob", train.text_mask_prob},
            {"batch_size", train.batch_size},
            {"learning_rate", train.learning_rate},
            {"steps", train.steps},
            {"T", train.T},
            {"prefix_len", train.prefix_len},
            {"seed", train.seed},
            {"grad_clip_norm", train.grad_clip_norm},
            {"threads", train.threads},
            {"dataset", dataset},
            {"checkpoint", checkpoint},
            {"output_dir", output_dir},
            {"loss_csv", loss_csv},
            {"layout", to_string(layout)},
            {"text_encoder", text_encoder},
            {"variance_learning", model.learn_variance},
            {"chains", chains},
            {"index", to_string(index)},
            {"presence_joints", presence_joints},
            {"presence_scale", presence_scale},
            {"fluct_window", fluct_window},
            {"no_text", no_text},
            {"no_motion", no_motion},
            {"min_duration_s", min_duration_s},
            {"sample_seed", sample_seed},
            {"model",
             {{"latent_dim", model.latent_dim},
              {"layers", model.layers},
              {"heads", model.heads},
              {"ff_dim", model.ff_dim},
              {"dropout", model.dropout},
              {"encoder", to_string(model.encoder)},
              {"gcn_hidden", model.gcn_hidden},
              {"gcn_layers", model.gcn_layers}}}};
  return j.dump(2);
}

void RunConfig::validate() const {
  train.validate();
  MDMP_CHECK_ARG(train.T >= 2 && train.T <= 10000, "T must be in [2, 10000]");
  MDMP_CHECK_ARG(chains >= 1, "chains must be at least 1");
  MDMP_CHECK_ARG(presence_scale >= 0.0, "presence_scale must be nonnegative");
  MDMP_CHECK_ARG(fluct_window >= 1, "fluct_window must be positive");
  MDMP_CHECK_ARG(min_duration_s >= 0.0, "min_duration_s must be nonnegative");
}

JointMap joint_map_for(Layout layout, Index width) {
  switch (layout) {
    case Layout::kPositions3d: return JointMap::from_features(positions_joint_map(static_cast<int>(width / 3)));
    case Layout::kHumanMl263: return JointMap::from_features(PoseLayout{22}.joint_map());
    case Layout::kRaw: break;
  }
  std::vector<int> id(static_cast<size_t>(width));
  for (size_t i = 0; i < id.size(); ++i) id[i] = static_cast<int>(i);
  return JointMap::from_features(std::move(id));
}

std::vector<int> default_presence_joints(Layout layout, Index width) {
  if (layout == Layout::kHumanMl263) return {15, 20, 21, 10, 11};
  if (layout == Layout::kPositions3d && width == 15) return {2, 4};
  return {0};
}

Checkpoint train_model(const RunConfig& cfg, const std::vector<DatasetRecord>& all_records, TrainResult* result,
                       const TrainProgress& progress) {
  cfg.validate();
  const auto records = filter_min_duration(all_records, cfg.min_duration_s);
  MDMP_CHECK_ARG(!records.empty(), "no training records left after filtering");
  const Index N = records.front().motion.frames();
  const Index D = records.front().motion.features();
  std::vector<Matrix> raw;
  for (const auto& r : records) {
    MDMP_CHECK_ARG(r.motion.layout == cfg.layout, "record '" + r.id + "' has layout " + to_string(r.motion.layout) +
                                                      ", config expects " + to_string(cfg.layout));
    MDMP_CHECK_ARG(r.motion.frames() == N && r.motion.features() == D,
                   "record '" + r.id + "' differs in shape from the first record");
    raw.push_back(r.motion.data);
  }

  Checkpoint ck;
  ck.model = cfg.model;
  ck.model.features = static_cast<int>(D);
  ck.train = cfg.train;
  ck.train.prefix_len = cfg.prefix_len();
  if (cfg.no_text) ck.train.text_mask_prob = 1.0;
  ck.frames = static_cast<int>(N);
  ck.fps = records.front().motion.fps;
  ck.layout = cfg.layout;
  ck.text_encoder = cfg.text_encoder;
  ck.normalizer = Normalizer::fit(raw);

  const auto encoder = make_text_encoder(cfg.text_encoder);
  std::vector<DiffusionExample> examples;
  examples.reserve(records.size());
  for (const auto& r : records) {
    DiffusionExample ex;
    ex.motion = ck.normalizer.normalize(r.motion.data);
    for (const auto& p : r.prompts) ex.texts.push_back(encoder->encode(p).vector);
    examples.push_back(std::move(ex));
  }

  Denoiser model(ck.model, ck.train.seed);
  const NoiseSchedule sched = build_cosine_schedule(ck.train.T);
  TrainResult res = train(model, examples, ck.train, sched, progress);
  ck.params = model.params();
  if (result != nullptr) *result = std::move(res);
  return ck;
}

Prediction predict(const Checkpoint& ckpt, const Denoiser& model, const TextEmbedding& text, const Matrix& observed,
                   const PredictOptions& options, std::atomic<long>* forward_calls) {
  const int n = ckpt.train.prefix_len;
  const Index D = ckpt.model.features;
  MDMP_CHECK_ARG(observed.cols() == D, "observed motion has " + std::to_string(observed.cols()) +
                                           " features, the model expects " + std::to_string(D));
  MDMP_CHECK_ARG(observed.rows() >= n, "observed motion has " + std::to_string(observed.rows()) +
                                           " frames, the model needs a prefix of " + std::to_string(n));
  MDMP_CHECK_ARG(options.chains >= 1, "need at least one chain");
  const int T = options.T > 0 ? options.T : ckpt.train.T;
  const NoiseSchedule sched = build_cosine_schedule(T);

  Conditioning cond;
  const Matrix prefix = observed.topRows(n);
  cond.prefix = ckpt.normalizer.normalize(prefix);
  cond.text = text.vector;
  cond.text_masked = options.mask_text || ckpt.train.text_mask_prob >= 1.0;

  SampleOptions so;
  so.guidance_scale = options.guidance_scale;
  so.seed = options.seed;
  so.chains = options.chains;
  so.threads = options.threads;
  const auto traces = sample(model, cond, ckpt.frames, sched, so, forward_calls);

  const JointMap map = joint_map_for(ckpt.layout, D);
  Prediction p;
  std::vector<Matrix> data_samples;
  Matrix mean = Matrix::Zero(ckpt.frames, D);
  for (const auto& tr : traces) {
    Matrix x = ckpt.normalizer.denormalize(tr.sample);
    x.topRows(n) = prefix;
    mean += x / static_cast<double>(traces.size());
    data_samples.push_back(x);
    p.samples.emplace_back(round_to_float(x), ckpt.fps, ckpt.layout);
    p.samples.back().data.topRows(n) = prefix;
  }
  mean.topRows(n) = prefix;
  p.point = MotionTensor(mean, ckpt.fps, ckpt.layout);
  if (traces.size() >= 2) p.mode = mode_divergence(data_samples, map);

  // Fluctuations and variance use the first chain, mapped to data units.
  const auto& first = traces.front();
  std::vector<Matrix> snaps;
  snaps.reserve(first.x0_snapshots.size());
  for (const auto& s : first.x0_snapshots) snaps.push_back(ckpt.normalizer.denormalize(s));
  p.fluct = denoising_fluctuations(snaps, map, std::min<int>(options.fluct_window, static_cast<int>(snaps.size())));
  if (first.final_variance.size() > 0) {
    const Matrix var = (first.final_variance.array().rowwise() * ckpt.normalizer.std.array().square()).matrix();
    p.variance = predicted_variance(var, map);
  }
  return p;
}

MotionTensor to_positions(const MotionTensor& seq, const JointTree* tree) {
  if (seq.layout == Layout::kPositions3d) return seq;
  if (seq.layout == Layout::kHumanMl263) {
    MDMP_CHECK_ARG(tree != nullptr, "humanml-263 sequences need a joint tree for forward kinematics");
    return features_to_positions(seq, *tree);
  }
  throw InvalidArgument("raw-layout sequences have no joint positions");
}

std::string sample_file_name(int chain) { return "sample_" + std::to_string(chain) + ".mdmp"; }

EvalResult evaluate(const std::vector<EvalItem>& items, int first_frame, bool with_sparsification,
                    const JointTree* tree, int sparsification_steps) {
  MDMP_CHECK_ARG(!items.empty(), "evaluate: no items");
  EvalResult res;
  std::vector<MpjpeReport> reports;
  std::vector<double> errors, unc;
  for (const auto& it : items) {
    const MotionTensor pred = to_positions(it.prediction, tree);
    const MotionTensor gt = to_positions(it.truth, tree);
    MDMP_CHECK_ARG(pred.frames() == gt.frames() && pred.features() == gt.features(),
                   "evaluate: prediction and ground truth differ in shape");
    reports.push_back(mpjpe(pred, gt, first_frame));
    if (with_sparsification) {
      MDMP_CHECK_ARG(it.uncertainty != nullptr, "evaluate: sparsification needs uncertainty grids");
      const Matrix err = joint_errors(pred.data, gt.data);
      const Matrix& u = it.uncertainty->values;
      MDMP_CHECK_ARG(u.rows() == err.rows() && u.cols() == err.cols(),
                     "evaluate: uncertainty grid is " + std::to_string(u.rows()) + "x" + std::to_string(u.cols()) +
                         ", errors are " + std::to_string(err.rows()) + "x" + std::to_string(err.cols()));
      for (Index i = first_frame; i < err.rows(); ++i) {
        for (Index j = 0; j < err.cols(); ++j) {
          errors.push_back(err(i, j));
          unc.push_back(u(i, j));
        }
      }
    }
  }
  res.mpjpe = merge_reports(reports);
  if (with_sparsification) res.sparsification = sparsification(errors, unc, sparsification_steps);
  return res;
}

}  // namespace mdmp
