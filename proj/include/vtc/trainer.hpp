#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "vtc/dataset.hpp"
#include "vtc/errors.hpp"
#include "vtc/eval.hpp"
#include "vtc/model.hpp"
#include "vtc/optim.hpp"
#include "vtc/rng.hpp"
#include "vtc/tensor.hpp"

namespace vtc {

// One training row: a corrupted sentence and its single ground-truth edit.
struct TrainSample {
  std::vector<int> ids;
  int true_pos = -1;
  int true_word = -1;  // vocabulary index of the original word
  std::string video_id;
};

// Training rows carry exactly one corruption and must be fully covered by the
// model's vocabulary and candidate list.
inline std::vector<TrainSample> make_train_samples(const std::vector<VtcSample>& corpus,
                                                   const VtcModel& model) {
  std::vector<TrainSample> out;
  out.reserve(corpus.size());
  for (const VtcSample& s : corpus) {
    if (s.k() != 1)
      throw contract_error("training corpus must carry exactly one corruption per sentence");
    TrainSample t;
    bool unk = false;
    t.ids = model.tokens_to_ids(s.tokens, &unk);
    if (unk)
      throw contract_error("corpus is not compatible with the model vocabulary: '" +
                           s.tokens[0] + "...' contains unknown tokens");
    t.true_pos = s.corruptions[0].pos;
    t.true_word = model.vocab().find(s.corruptions[0].original);
    if (t.true_word < 0)
      throw contract_error("corpus is not compatible with the model vocabulary: answer '" +
                           s.corruptions[0].original + "' unknown");
    if (model.beta_index_of(t.true_word) < 0)
      throw contract_error("answer word '" + s.corruptions[0].original +
                           "' is outside the model's candidate list");
    t.video_id = s.video_id;
    out.push_back(std::move(t));
  }
  return out;
}

struct TrainOptions {
  int epochs = 50;
  int batch = 8;  // gradient accumulation group
  float lr = 1e-3f;
  OptimizerKind optimizer = OptimizerKind::adam;
  float clip = -1.0f;  // <0 resolves to 5.0 when the recurrent path is on, else 0
  int patience = 10;   // epochs without a validation improvement before stopping
  unsigned long long seed = 1;

  void validate() const {
    if (epochs < 1) throw config_error("trainer: epochs must be >= 1");
    if (batch < 1) throw config_error("trainer: batch must be >= 1");
    if (lr <= 0.0f) throw config_error("trainer: lr must be positive");
    if (patience < 1) throw config_error("trainer: patience must be >= 1");
  }
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double loss_detection = 0.0;
  double loss_correction = 0.0;
  double val_detection = 0.0;
  double val_correction = 0.0;
  bool best = false;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_detection = -1.0;
  double best_val_correction = 0.0;
};

namespace detail {

inline Tensor feature_tensor(const FeatureStore& store, const std::string& video_id) {
  std::span<const float> v = store.get(video_id);
  return Tensor::of({int(v.size())}, std::vector<float>(v.begin(), v.end()));
}

}  // namespace detail

// Detection and correction accuracy of top-1 predictions over samples.
inline std::pair<double, double> evaluate_samples(const VtcModel& model,
                                                  const std::vector<TrainSample>& samples,
                                                  const FeatureStore* features) {
  if (samples.empty()) throw contract_error("evaluate_samples: no samples");
  long long det = 0, cor = 0;
  for (const TrainSample& s : samples) {
    Tensor omega;
    const Tensor* om = nullptr;
    if (model.config().uses_video()) {
      omega = detail::feature_tensor(*features, s.video_id);
      om = &omega;
    }
    const std::vector<Prediction> preds = model.infer(s.ids, om, 1);
    if (preds[0].position == s.true_pos) {
      ++det;
      if (preds[0].word_id == s.true_word) ++cor;
    }
  }
  return {double(det) / double(samples.size()), double(cor) / double(samples.size())};
}

// Joint training with gradient accumulation, validation-based early stopping,
// and restoration of the best epoch's weights.
inline TrainResult train_model(VtcModel& model, const std::vector<TrainSample>& train,
                               const std::vector<TrainSample>& val,
                               const FeatureStore* features, const TrainOptions& opts,
                               std::ostream* log_out = nullptr) {
  opts.validate();
  if (train.empty()) throw contract_error("trainer: empty training set");
  if (val.empty()) throw contract_error("trainer: empty validation set");
  if (model.config().uses_video() && features == nullptr)
    throw contract_error("trainer: visual model needs features");

  std::vector<Tensor> params = model.parameters();
  OptimizerOptions oo;
  oo.kind = opts.optimizer;
  oo.lr = opts.lr;
  oo.clip_norm = opts.clip >= 0.0f
                     ? opts.clip
                     : (model.config().encoder == EncoderKind::conv_only ? 0.0f : 5.0f);
  oo.zero_grad_after_step = true;
  Optimizer optim(oo, params);

  Rng rng(opts.seed);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::vector<std::vector<float>> best_params;
  int since_best = 0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    double sum_l = 0.0, sum_ld = 0.0, sum_lf = 0.0;

    for (std::size_t start = 0; start < order.size(); start += std::size_t(opts.batch)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(opts.batch));
      const float inv = 1.0f / float(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const TrainSample& s = train[std::size_t(order[i])];
        Tensor omega;
        const Tensor* om = nullptr;
        if (model.config().uses_video()) {
          omega = detail::feature_tensor(*features, s.video_id);
          om = &omega;
        }
        ModelForward f = model.forward(s.ids, om);
        LossParts parts = model.training_loss(f, s.true_pos, s.true_word, om);
        sum_l += double(parts.total.item());
        sum_ld += double(parts.detection.item());
        sum_lf += double(parts.correction.item());
        backward(scale(parts.total, inv));
      }
      optim.step();
    }

    EpochLog row;
    row.epoch = epoch;
    row.loss = sum_l / double(train.size());
    row.loss_detection = sum_ld / double(train.size());
    row.loss_correction = sum_lf / double(train.size());
    const auto [vd, vc] = evaluate_samples(model, val, features);
    row.val_detection = vd;
    row.val_correction = vc;

    if (vd > result.best_val_detection) {
      result.best_val_detection = vd;
      result.best_val_correction = vc;
      result.best_epoch = epoch;
      row.best = true;
      since_best = 0;
      best_params.clear();
      for (Tensor& p : params) best_params.push_back(p.values());
    } else {
      ++since_best;
    }
    result.log.push_back(row);

    if (log_out) {
      char buf[192];
      std::snprintf(buf, sizeof(buf),
                    "epoch %3d  loss %.4f  (detection %.4f, correction %.4f)  "
                    "val detection %.4f  val correction %.4f%s\n",
                    epoch, row.loss, row.loss_detection, row.loss_correction,
                    row.val_detection, row.val_correction, row.best ? "  *" : "");
      (*log_out) << buf;
    }

    if (since_best >= opts.patience) break;
  }

  if (!best_params.empty())
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::copy(best_params[i].begin(), best_params[i].end(), params[i].data());
      params[i].zero_grad();
    }
  return result;
}

// Model predictions over an evaluation corpus, shaped for multi_k_report.
// Every sample is scored with its own corruption count as k.
inline std::vector<EvalSample> run_inference(const VtcModel& model,
                                             const std::vector<VtcSample>& corpus,
                                             const FeatureStore* features) {
  if (corpus.empty()) throw contract_error("run_inference: empty corpus");
  std::vector<EvalSample> out;
  out.reserve(corpus.size());
  for (const VtcSample& s : corpus) {
    bool unk = false;
    EvalSample e;
    const std::vector<int> ids = model.tokens_to_ids(s.tokens, &unk);
    if (unk)
      throw contract_error("corpus is not compatible with the model vocabulary: '" +
                           s.tokens[0] + "...' contains unknown tokens");
    Tensor omega;
    const Tensor* om = nullptr;
    if (model.config().uses_video()) {
      if (features == nullptr) throw contract_error("run_inference: visual model needs features");
      omega = detail::feature_tensor(*features, s.video_id);
      om = &omega;
    }
    e.n = int(ids.size());
    e.beta_size = int(model.beta().size());
    for (const Corruption& c : s.corruptions) {
      e.true_positions.push_back(c.pos);
      const int w = model.vocab().find(c.original);
      if (w < 0)
        throw contract_error("corpus is not compatible with the model vocabulary: answer '" +
                             c.original + "' unknown");
      e.true_words.push_back(w);
      e.true_beta.push_back(model.beta_index_of(w));
    }
    for (const Prediction& p : model.infer(ids, om, s.k())) {
      e.detected.push_back(p.position);
      e.predicted_words.push_back(p.word_id);
    }
    e.pair_scores = model.pair_scores(ids, om);
    out.push_back(std::move(e));
  }
  return out;
}

enum class StubKind { random_guess, oracle };

// Harness self-test outcomes that bypass the model: uniform random guesses
// give the chance floor, the oracle stub injects ground truth.
inline std::vector<EvalSample> run_inference_stub(const VtcModel& model,
                                                  const std::vector<VtcSample>& corpus,
                                                  StubKind kind, Rng& rng) {
  if (corpus.empty()) throw contract_error("run_inference_stub: empty corpus");
  const int beta_size = int(model.beta().size());
  std::vector<EvalSample> out;
  out.reserve(corpus.size());
  for (const VtcSample& s : corpus) {
    EvalSample e;
    e.n = int(s.tokens.size());
    e.beta_size = beta_size;
    for (const Corruption& c : s.corruptions) {
      e.true_positions.push_back(c.pos);
      const int w = model.vocab().find(c.original);
      if (w < 0)
        throw contract_error("corpus is not compatible with the model vocabulary: answer '" +
                             c.original + "' unknown");
      e.true_words.push_back(w);
      e.true_beta.push_back(model.beta_index_of(w));
    }
    e.pair_scores.assign(std::size_t(e.n) * std::size_t(beta_size), 0.0);

    if (kind == StubKind::oracle) {
      for (std::size_t i = 0; i < e.true_positions.size(); ++i) {
        e.detected.push_back(e.true_positions[i]);
        e.predicted_words.push_back(e.true_words[i]);
        if (e.true_beta[i] >= 0)
          e.pair_scores[std::size_t(e.true_positions[i]) * std::size_t(beta_size) +
                        std::size_t(e.true_beta[i])] = 1.0;
      }
    } else {
      std::vector<int> positions(static_cast<std::size_t>(e.n), 0);
      std::iota(positions.begin(), positions.end(), 0);
      rng.shuffle(positions);
      for (std::size_t i = 0; i < e.true_positions.size(); ++i) {
        e.detected.push_back(positions[i]);
        e.predicted_words.push_back(
            model.beta()[rng.below(std::uint64_t(beta_size))]);
      }
      for (double& v : e.pair_scores) v = rng.uniform();
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace vtc
