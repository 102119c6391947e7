#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vtc/corrector.hpp"
#include "vtc/dataset.hpp"
#include "vtc/detector.hpp"
#include "vtc/errors.hpp"
#include "vtc/ops.hpp"
#include "vtc/rng.hpp"
#include "vtc/tensor.hpp"
#include "vtc/text_encoder.hpp"
#include "vtc/vocab.hpp"

namespace vtc {

// Reserved vocabulary slots. Neither may appear in the candidate list.
inline constexpr int kPadIndex = 0;
inline constexpr int kUnkIndex = 1;
inline constexpr const char* kPadWord = "<pad>";
inline constexpr const char* kUnkWord = "<unk>";

enum class EncoderKind { conv_only, lstm_only, both };

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "conv") return EncoderKind::conv_only;
  if (s == "lstm") return EncoderKind::lstm_only;
  if (s == "both") return EncoderKind::both;
  throw config_error("unknown encoder kind '" + s + "' (expected conv, lstm, or both)");
}

inline const char* encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::conv_only: return "conv";
    case EncoderKind::lstm_only: return "lstm";
    default: return "both";
  }
}

struct ModelConfig {
  int d_x = 64;
  int h = 64;
  int d_q = 128;
  int m = 5;
  int depth = 3;
  int n_max = 40;
  int d_v = 0;
  VisualMode visual = VisualMode::off;
  EncoderKind encoder = EncoderKind::both;

  bool uses_video() const { return visual != VisualMode::off; }

  void validate() const {
    if (d_q < 1) throw config_error("model: d_q must be >= 1");
    if (uses_video() && d_v < 1) throw config_error("model: visual mode needs d_v >= 1");
    EncoderConfig ec;
    ec.vocab_size = 2;  // placeholder; vocabulary size is validated at build time
    ec.d_x = d_x;
    ec.h = h;
    ec.m = m;
    ec.depth = depth;
    ec.n_max = n_max;
    ec.validate();
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"d_x", d_x},     {"h", h},
                          {"d_q", d_q},     {"m", m},
                          {"depth", depth}, {"n_max", n_max},
                          {"d_v", d_v},     {"visual", visual_mode_name(visual)},
                          {"encoder", encoder_kind_name(encoder)}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
      if (j.contains("d_x")) cfg.d_x = j.at("d_x").get<int>();
      if (j.contains("h")) cfg.h = j.at("h").get<int>();
      if (j.contains("d_q")) cfg.d_q = j.at("d_q").get<int>();
      if (j.contains("m")) cfg.m = j.at("m").get<int>();
      if (j.contains("depth")) cfg.depth = j.at("depth").get<int>();
      if (j.contains("n_max")) cfg.n_max = j.at("n_max").get<int>();
      if (j.contains("d_v")) cfg.d_v = j.at("d_v").get<int>();
      if (j.contains("visual")) cfg.visual = parse_visual_mode(j.at("visual").get<std::string>());
      if (j.contains("encoder"))
        cfg.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw config_error(std::string("model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
  }
};

// Vocabulary with the reserved pad/unk entries in front, then every token and
// every answer word of the training corpus in first-appearance order.
inline Vocabulary build_model_vocab(const std::vector<VtcSample>& train) {
  Vocabulary v;
  v.add_or_get(kPadWord);
  v.add_or_get(kUnkWord);
  for (const VtcSample& s : train) {
    for (const std::string& tok : s.tokens) v.add_or_get(tok);
    for (const Corruption& c : s.corruptions) v.add_or_get(c.original);
  }
  return v;
}

// Candidate list: every word that appears as a ground-truth answer in the
// training corpus, as ascending word indices.
inline std::vector<int> build_beta(const std::vector<VtcSample>& train, const Vocabulary& v) {
  std::vector<int> beta;
  for (const VtcSample& s : train)
    for (const Corruption& c : s.corruptions) {
      const int id = v.find(c.original);
      if (id < 0) throw contract_error("candidate list: answer word '" + c.original +
                                       "' missing from the vocabulary");
      beta.push_back(id);
    }
  std::sort(beta.begin(), beta.end());
  beta.erase(std::unique(beta.begin(), beta.end()), beta.end());
  if (beta.size() < 2) throw contract_error("candidate list needs at least 2 distinct words");
  if (beta.front() == kPadIndex || beta.front() == kUnkIndex)
    throw contract_error("candidate list must not contain reserved words");
  return beta;
}

namespace detail {

inline void write_f32_array(std::ostream& out, const std::vector<float>& v) {
  write_u32(out, uint32_t(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(float)));
}

inline std::vector<float> read_f32_array(std::istream& in, const std::string& what) {
  const uint32_t n = read_u32(in, what);
  if (n > (1u << 28)) throw io_error("checkpoint: implausible tensor size");
  std::vector<float> v(static_cast<std::size_t>(n), 0.0f);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
  if (!in) throw io_error("checkpoint: truncated tensor payload");
  return v;
}

}  // namespace detail

struct ModelForward {
  EncodedSentence enc;
  Tensor d;       // detection scores, pad positions masked
  Tensor t_star;  // softmax over d
};

struct LossParts {
  Tensor total;
  Tensor detection;
  Tensor correction;
};

struct Prediction {
  int position = -1;
  int word_id = -1;    // vocabulary index
  int beta_index = -1; // index into the candidate list
  double score = 0.0;  // log joint probability of (position, word)
};

// Full pipeline: encoder, detector, and corrector behind one seed, one
// canonical parameter order, and one checkpoint file.
class VtcModel {
 public:
  VtcModel(const ModelConfig& cfg, Vocabulary vocab, std::vector<int> beta, Rng& rng)
      : cfg_(cfg),
        vocab_(std::move(vocab)),
        beta_(std::move(beta)),
        encoder_(make_encoder_config(cfg_, vocab_), rng),
        detector_(make_detector_config(cfg_), rng),
        corrector_(make_corrector_config(cfg_, int(beta_.size())), rng) {
    if (!std::is_sorted(beta_.begin(), beta_.end()) ||
        std::adjacent_find(beta_.begin(), beta_.end()) != beta_.end())
      throw contract_error("model: candidate list must be strictly increasing");
    for (std::size_t i = 0; i < beta_.size(); ++i) {
      const int id = beta_[i];
      if (id == kPadIndex || id == kUnkIndex)
        throw contract_error("model: candidate list contains a reserved word");
      if (id < 0 || id >= vocab_.size())
        throw contract_error("model: candidate word index out of vocabulary range");
      beta_index_[id] = int(i);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<int>& beta() const { return beta_; }
  TextEncoder& encoder() { return encoder_; }
  Detector& detector() { return detector_; }
  Corrector& corrector() { return corrector_; }

  // Candidate-list position of a vocabulary index, -1 when absent.
  int beta_index_of(int word_id) const {
    auto it = beta_index_.find(word_id);
    return it == beta_index_.end() ? -1 : it->second;
  }

  // Out-of-vocabulary tokens map to the unk slot; *any_unk reports whether
  // that happened. Token strings never map to pad.
  std::vector<int> tokens_to_ids(const std::vector<std::string>& tokens,
                                 bool* any_unk = nullptr) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    bool unk = false;
    for (const std::string& t : tokens) {
      int id = vocab_.find(t);
      if (id < 0 || id == kPadIndex) {
        id = kUnkIndex;
        unk = true;
      }
      ids.push_back(id);
    }
    if (any_unk) *any_unk = unk;
    return ids;
  }

  ModelForward forward(const std::vector<int>& ids, const Tensor* omega = nullptr) const {
    if (cfg_.uses_video() && omega == nullptr)
      throw contract_error("model: visual config needs a video feature");
    if (!cfg_.uses_video() && omega != nullptr)
      throw contract_error("model: text-only config given a video feature");
    ModelForward f;
    f.enc = encoder_.encode(ids, cfg_.encoder != EncoderKind::lstm_only,
                            cfg_.encoder != EncoderKind::conv_only);
    f.d = detector_.scores(f.enc.x, f.enc.x_hat, omega);
    f.d = mask_pad(f.d, ids);
    f.t_star = softmax(f.d);
    return f;
  }

  // Joint training loss for a single corruption: detection cross entropy at
  // the true position plus word cross entropy against the true answer.
  LossParts training_loss(const ModelForward& f, int true_pos, int true_word_id,
                          const Tensor* omega = nullptr) const {
    const int n = f.d.dim(0);
    if (true_pos < 0 || true_pos >= n)
      throw contract_error("model: true position out of range");
    const int bt = beta_index_of(true_word_id);
    if (bt < 0) throw contract_error("model: true word is not in the candidate list");

    std::vector<float> hot(static_cast<std::size_t>(n), 0.0f);
    hot[static_cast<std::size_t>(true_pos)] = 1.0f;

    LossParts out;
    out.detection = detection_loss(f.d, hot);
    Tensor q = corrector_.encode_candidates(f.enc.x_hat);
    Tensor u_q = corrector_.attend(f.t_star, q);
    Tensor u_v = cfg_.uses_video() ? corrector_.encode_video(*omega) : corrector_.zero_video();
    out.correction = corrector_.word_loss(corrector_.word_logits(u_q, u_v), bt);
    out.total = add(out.correction, out.detection);
    return out;
  }

  // Top-k positions, each with its own replacement under hard attention.
  std::vector<Prediction> infer(const std::vector<int>& ids, const Tensor* omega,
                                int k) const {
    NoGradGuard guard;
    ModelForward f = forward(ids, omega);
    const std::vector<int> positions = detect_k(f.d, k);

    Tensor q = corrector_.encode_candidates(f.enc.x_hat);
    Tensor u_v = cfg_.uses_video() ? corrector_.encode_video(*omega) : corrector_.zero_video();

    const int n = f.d.dim(0);
    std::vector<double> log_t(static_cast<std::size_t>(n), 0.0);
    {
      double mx = -1e300;
      for (int t = 0; t < n; ++t) mx = std::max(mx, double(f.d.at(t)));
      double lse = 0.0;
      for (int t = 0; t < n; ++t) lse += std::exp(double(f.d.at(t)) - mx);
      lse = mx + std::log(lse);
      for (int t = 0; t < n; ++t) log_t[static_cast<std::size_t>(t)] = double(f.d.at(t)) - lse;
    }

    std::vector<Prediction> out;
    out.reserve(positions.size());
    for (int pos : positions) {
      Tensor logits = corrector_.word_logits(row(q, pos), u_v);
      const int b = argmax_index(logits);
      double mx = -1e300;
      for (int w = 0; w < logits.dim(0); ++w) mx = std::max(mx, double(logits.at(w)));
      double lse = 0.0;
      for (int w = 0; w < logits.dim(0); ++w) lse += std::exp(double(logits.at(w)) - mx);
      lse = mx + std::log(lse);
      Prediction p;
      p.position = pos;
      p.beta_index = b;
      p.word_id = beta_[static_cast<std::size_t>(b)];
      p.score = log_t[static_cast<std::size_t>(pos)] + (double(logits.at(b)) - lse);
      out.push_back(p);
    }
    return out;
  }

  // Joint log probability of every (position, candidate) pair, row-major.
  std::vector<double> pair_scores(const std::vector<int>& ids,
                                  const Tensor* omega = nullptr) const {
    NoGradGuard guard;
    ModelForward f = forward(ids, omega);
    return corrector_.score_all_pairs(f.d, f.enc.x_hat,
                                      cfg_.uses_video() ? omega : nullptr);
  }

  template <class F>
  void visit_params(F&& f) {
    encoder_.visit_params(f);
    detector_.visit_params(f);
    corrector_.visit_params(f);
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    visit_params([&](const std::string&, Tensor& p) { out.push_back(p); });
    return out;
  }

  // Layout: "VTCK" magic, u32 version, u32 record count, records of
  // (name, u32 rank, u32 dims, f32 payload), then config JSON, vocabulary
  // words, and the candidate list. Canonical parameter order makes saves of
  // equal models byte-identical.
  void save(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open checkpoint for writing: " + path);
    out.write("VTCK", 4);
    detail::write_u32(out, 1u);

    uint32_t count = 0;
    visit_params([&](const std::string&, Tensor&) { ++count; });
    detail::write_u32(out, count);
    visit_params([&](const std::string& name, Tensor& p) {
      detail::write_string(out, name);
      detail::write_u32(out, uint32_t(p.rank()));
      for (int i = 0; i < p.rank(); ++i) detail::write_u32(out, uint32_t(p.dim(i)));
      detail::write_f32_array(out, p.values());
    });

    detail::write_string(out, cfg_.to_json().dump());
    detail::write_u32(out, uint32_t(vocab_.size()));
    for (int i = 0; i < vocab_.size(); ++i) detail::write_string(out, vocab_.word(i));
    detail::write_u32(out, uint32_t(beta_.size()));
    for (int id : beta_) detail::write_u32(out, uint32_t(id));
    if (!out) throw io_error("failed writing checkpoint: " + path);
  }

  static VtcModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "VTCK")
      throw io_error("not a checkpoint file: " + path);
    const uint32_t version = detail::read_u32(in, "checkpoint");
    if (version != 1u)
      throw io_error("unsupported checkpoint version " + std::to_string(version));

    const uint32_t count = detail::read_u32(in, "checkpoint");
    if (count > 4096) throw io_error("checkpoint: implausible record count");
    std::map<std::string, std::pair<Shape, std::vector<float>>> records;
    for (uint32_t i = 0; i < count; ++i) {
      const std::string name = detail::read_string(in, "checkpoint");
      const uint32_t rank = detail::read_u32(in, "checkpoint");
      if (rank > 8) throw io_error("checkpoint: implausible tensor rank");
      Shape shape;
      for (uint32_t r = 0; r < rank; ++r) shape.push_back(int(detail::read_u32(in, "checkpoint")));
      std::vector<float> data = detail::read_f32_array(in, "checkpoint");
      if (!records.emplace(name, std::make_pair(shape, std::move(data))).second)
        throw io_error("checkpoint: duplicate record '" + name + "'");
    }

    ModelConfig cfg;
    try {
      cfg = ModelConfig::from_json(nlohmann::json::parse(detail::read_string(in, "checkpoint")));
    } catch (const nlohmann::json::exception& e) {
      throw io_error(std::string("checkpoint: bad config block: ") + e.what());
    }
    const uint32_t vocab_count = detail::read_u32(in, "checkpoint");
    Vocabulary vocab;
    for (uint32_t i = 0; i < vocab_count; ++i) vocab.add_or_get(detail::read_string(in, "checkpoint"));
    if (vocab.size() < 2 || vocab.word(kPadIndex) != kPadWord ||
        vocab.word(kUnkIndex) != kUnkWord)
      throw io_error("checkpoint: vocabulary lacks the reserved entries");
    const uint32_t beta_count = detail::read_u32(in, "checkpoint");
    std::vector<int> beta;
    for (uint32_t i = 0; i < beta_count; ++i) beta.push_back(int(detail::read_u32(in, "checkpoint")));

    Rng scratch(0);
    VtcModel model(cfg, std::move(vocab), std::move(beta), scratch);
    std::size_t used = 0;
    model.visit_params([&](const std::string& name, Tensor& p) {
      auto it = records.find(name);
      if (it == records.end())
        throw io_error("checkpoint: missing record '" + name + "'");
      if (it->second.first != p.shape())
        throw io_error("checkpoint: shape mismatch for '" + name + "'");
      std::copy(it->second.second.begin(), it->second.second.end(), p.data());
      ++used;
    });
    if (used != records.size())
      throw io_error("checkpoint: file carries records the model does not own");
    return model;
  }

 private:
  static EncoderConfig make_encoder_config(const ModelConfig& cfg, const Vocabulary& vocab) {
    cfg.validate();
    EncoderConfig ec;
    ec.vocab_size = vocab.size();
    ec.d_x = cfg.d_x;
    ec.h = cfg.h;
    ec.m = cfg.m;
    ec.depth = cfg.depth;
    ec.n_max = cfg.n_max;
    return ec;
  }

  static DetectorConfig make_detector_config(const ModelConfig& cfg) {
    DetectorConfig dc;
    dc.d_x = cfg.d_x;
    dc.d_v = cfg.d_v;
    dc.mode = cfg.visual;
    return dc;
  }

  static CorrectorConfig make_corrector_config(const ModelConfig& cfg, int beta_size) {
    CorrectorConfig cc;
    cc.d_x = cfg.d_x;
    cc.d_q = cfg.d_q;
    cc.d_v = cfg.d_v;
    cc.beta_size = beta_size;
    cc.visual = cfg.uses_video();
    return cc;
  }

  // Pad positions must never win detection: a large negative bias removes
  // them from the softmax without touching the graph for real positions.
  static Tensor mask_pad(const Tensor& d, const std::vector<int>& ids) {
    bool any = false;
    std::vector<float> mask(ids.size(), 0.0f);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == kPadIndex) {
        mask[i] = -1e9f;
        any = true;
      }
    if (!any) return d;
    return add(d, Tensor::of({int(ids.size())}, mask));
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  std::vector<int> beta_;
  std::unordered_map<int, int> beta_index_;
  TextEncoder encoder_;
  Detector detector_;
  Corrector corrector_;
};

}  // namespace vtc
