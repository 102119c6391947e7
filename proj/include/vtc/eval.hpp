#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vtc/errors.hpp"

namespace vtc {

// Fraction of samples whose predicted position equals the true one.
inline double detection_accuracy(const std::vector<int>& predicted,
                                 const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    throw contract_error("detection_accuracy: prediction/truth length mismatch");
  if (predicted.empty()) throw contract_error("detection_accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i]) ++hit;
  return double(hit) / double(truth.size());
}

// Fraction of samples where both position and replacement word match.
inline double correction_accuracy(const std::vector<std::pair<int, int>>& predicted,
                                  const std::vector<std::pair<int, int>>& truth) {
  if (predicted.size() != truth.size())
    throw contract_error("correction_accuracy: prediction/truth length mismatch");
  if (predicted.empty()) throw contract_error("correction_accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i]) ++hit;
  return double(hit) / double(truth.size());
}

// Average precision over a row-major score table. Pairs are ranked by
// descending score; equal scores keep row-major order. AP is the mean over
// relevant pairs of (relevant found at or above its rank) / rank.
inline double average_precision(const std::vector<double>& scores, int rows, int cols,
                                const std::vector<std::pair<int, int>>& relevant) {
  if (rows < 1 || cols < 1 || scores.size() != std::size_t(rows) * std::size_t(cols))
    throw contract_error("average_precision: score table shape mismatch");
  if (relevant.empty()) throw contract_error("average_precision: no relevant pair");

  std::vector<char> is_relevant(scores.size(), 0);
  for (const auto& [r, c] : relevant) {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw contract_error("average_precision: relevant pair out of range");
    char& flag = is_relevant[std::size_t(r) * std::size_t(cols) + std::size_t(c)];
    if (flag) throw contract_error("average_precision: duplicate relevant pair");
    flag = 1;
  }

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[std::size_t(a)] > scores[std::size_t(b)]; });

  double ap = 0.0;
  int found = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    if (is_relevant[std::size_t(order[rank])]) {
      ++found;
      ap += double(found) / double(rank + 1);
    }
  return ap / double(relevant.size());
}

// One evaluated sentence: ground truth, ranked top-k detections with their
// predicted words, and the full pair-score table for ranking metrics.
struct EvalSample {
  int n = 0;          // sentence length
  int beta_size = 0;  // candidate-list width of the score table
  std::vector<int> true_positions;  // ascending, one per corruption
  std::vector<int> true_words;      // aligned word ids
  std::vector<int> true_beta;       // aligned candidate indices, -1 when absent
  std::vector<int> detected;        // top-k positions, best first
  std::vector<int> predicted_words; // aligned with detected
  std::vector<double> pair_scores;  // row-major n x beta_size
};

namespace detail {

inline void validate_eval_sample(const EvalSample& s, std::size_t idx) {
  const std::string where = "eval sample " + std::to_string(idx);
  if (s.n < 1) throw contract_error(where + ": empty sentence");
  const std::size_t k = s.true_positions.size();
  if (k == 0) throw contract_error(where + ": no corruption");
  if (s.true_words.size() != k || s.true_beta.size() != k)
    throw contract_error(where + ": truth vectors disagree on k");
  if (s.detected.size() != k)
    throw contract_error(where + ": detections disagree with the sample's k");
  if (s.predicted_words.size() != k)
    throw contract_error(where + ": predictions disagree with the sample's k");
  int prev = -1;
  for (int p : s.true_positions) {
    if (p <= prev || p >= s.n) throw contract_error(where + ": bad true position");
    prev = p;
  }
  for (int p : s.detected)
    if (p < 0 || p >= s.n) throw contract_error(where + ": detected position out of range");
  if (s.beta_size < 1 ||
      s.pair_scores.size() != std::size_t(s.n) * std::size_t(s.beta_size))
    throw contract_error(where + ": pair score table shape mismatch");
  for (int b : s.true_beta)
    if (b < -1 || b >= s.beta_size)
      throw contract_error(where + ": candidate index out of range");
}

}  // namespace detail

struct MetricRow {
  double detection_accuracy = 0.0;
  double correction_accuracy = 0.0;
  double map = 0.0;
};

struct KBucket {
  int k = 0;  // 0 stands for the "all" row
  int sentences = 0;
  int words = 0;
  MetricRow wb;
  MetricRow sb;
};

struct EvalReport {
  double detection_accuracy = 0.0;   // word-based, over every corruption
  double correction_accuracy = 0.0;  // word-based, over every corruption
  double map = 0.0;                  // word-based mean AP
  int sentences = 0;
  int words = 0;
  std::vector<KBucket> per_k;  // one row per observed k, then the "all" row

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const KBucket& b : per_k) {
      rows.push_back(nlohmann::json{
          {"k", b.k == 0 ? "all" : std::to_string(b.k)},
          {"sentences", b.sentences},
          {"words", b.words},
          {"wb",
           {{"detection_accuracy", b.wb.detection_accuracy},
            {"correction_accuracy", b.wb.correction_accuracy},
            {"map", b.wb.map}}},
          {"sb",
           {{"detection_accuracy", b.sb.detection_accuracy},
            {"correction_accuracy", b.sb.correction_accuracy},
            {"map", b.sb.map}}}});
    }
    return nlohmann::json{{"detection_accuracy", detection_accuracy},
                          {"correction_accuracy", correction_accuracy},
                          {"map", map},
                          {"sentences", sentences},
                          {"words", words},
                          {"per_k", rows}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
      r.detection_accuracy = j.at("detection_accuracy").get<double>();
      r.correction_accuracy = j.at("correction_accuracy").get<double>();
      r.map = j.at("map").get<double>();
      r.sentences = j.at("sentences").get<int>();
      r.words = j.at("words").get<int>();
      for (const auto& row : j.at("per_k")) {
        KBucket b;
        const std::string k = row.at("k").get<std::string>();
        b.k = k == "all" ? 0 : std::stoi(k);
        b.sentences = row.at("sentences").get<int>();
        b.words = row.at("words").get<int>();
        b.wb.detection_accuracy = row.at("wb").at("detection_accuracy").get<double>();
        b.wb.correction_accuracy = row.at("wb").at("correction_accuracy").get<double>();
        b.wb.map = row.at("wb").at("map").get<double>();
        b.sb.detection_accuracy = row.at("sb").at("detection_accuracy").get<double>();
        b.sb.correction_accuracy = row.at("sb").at("correction_accuracy").get<double>();
        b.sb.map = row.at("sb").at("map").get<double>();
        r.per_k.push_back(b);
      }
    } catch (const nlohmann::json::exception& e) {
      throw io_error(std::string("report: ") + e.what());
    }
    return r;
  }

  // Plain table with one-decimal percentages.
  std::string to_text() const {
    auto pct = [](double f) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%5.1f", f * 100.0);
      return std::string(buf);
    };
    std::string out;
    out += "samples: " + std::to_string(sentences) + " sentences, " + std::to_string(words) +
           " corrupted words\n";
    out += "detection accuracy:  " + pct(detection_accuracy) + " %\n";
    out += "correction accuracy: " + pct(correction_accuracy) + " %\n";
    out += "map:                 " + pct(map) + " %\n";
    out += "\n   k  sentences      WB-det  WB-cor  WB-map      SB-det  SB-cor  SB-map\n";
    for (const KBucket& b : per_k) {
      char head[64];
      std::snprintf(head, sizeof(head), "%4s  %9d    ",
                    b.k == 0 ? "all" : std::to_string(b.k).c_str(), b.sentences);
      out += head;
      out += pct(b.wb.detection_accuracy) + "   " + pct(b.wb.correction_accuracy) + "   " +
             pct(b.wb.map) + "     " + pct(b.sb.detection_accuracy) + "   " +
             pct(b.sb.correction_accuracy) + "   " + pct(b.sb.map) + "\n";
    }
    return out;
  }
};

// Word-based and sentence-based accuracy and mean AP, per corruption count.
// A word scores as detected when its position appears in the sample's top-k
// list, and as corrected when that position also carries the right word.
// A true answer outside the candidate list can never be corrected or
// retrieved: it counts 0 toward correction accuracy and AP.
inline EvalReport multi_k_report(const std::vector<EvalSample>& samples) {
  if (samples.empty()) throw contract_error("multi_k_report: no samples");
  for (std::size_t i = 0; i < samples.size(); ++i) detail::validate_eval_sample(samples[i], i);

  struct Acc {
    long long sentences = 0, words = 0;
    long long det_words = 0, cor_words = 0;
    long long det_sents = 0, cor_sents = 0;
    double word_ap_sum = 0.0;
    double sent_ap_sum = 0.0;
  };
  std::map<int, Acc> buckets;

  for (const EvalSample& s : samples) {
    const int k = int(s.true_positions.size());
    Acc& a = buckets[k];
    ++a.sentences;
    a.words += k;

    int det = 0, cor = 0;
    std::vector<std::pair<int, int>> sentence_relevant;
    for (std::size_t i = 0; i < s.true_positions.size(); ++i) {
      const int pos = s.true_positions[i];
      const auto it = std::find(s.detected.begin(), s.detected.end(), pos);
      const bool detected = it != s.detected.end();
      const bool corrected =
          detected && s.predicted_words[std::size_t(it - s.detected.begin())] ==
                          s.true_words[i];
      det += detected ? 1 : 0;
      cor += corrected ? 1 : 0;

      if (s.true_beta[i] >= 0) {
        a.word_ap_sum += average_precision(s.pair_scores, s.n, s.beta_size,
                                           {{pos, s.true_beta[i]}});
        sentence_relevant.emplace_back(pos, s.true_beta[i]);
      }
    }
    a.det_words += det;
    a.cor_words += cor;
    a.det_sents += det == k ? 1 : 0;
    a.cor_sents += cor == k ? 1 : 0;
    if (!sentence_relevant.empty())
      a.sent_ap_sum += average_precision(s.pair_scores, s.n, s.beta_size, sentence_relevant);
  }

  Acc all;
  for (const auto& [k, a] : buckets) {
    all.sentences += a.sentences;
    all.words += a.words;
    all.det_words += a.det_words;
    all.cor_words += a.cor_words;
    all.det_sents += a.det_sents;
    all.cor_sents += a.cor_sents;
    all.word_ap_sum += a.word_ap_sum;
    all.sent_ap_sum += a.sent_ap_sum;
  }

  auto fill = [](int k, const Acc& a) {
    KBucket b;
    b.k = k;
    b.sentences = int(a.sentences);
    b.words = int(a.words);
    b.wb.detection_accuracy = double(a.det_words) / double(a.words);
    b.wb.correction_accuracy = double(a.cor_words) / double(a.words);
    b.wb.map = a.word_ap_sum / double(a.words);
    b.sb.detection_accuracy = double(a.det_sents) / double(a.sentences);
    b.sb.correction_accuracy = double(a.cor_sents) / double(a.sentences);
    b.sb.map = a.sent_ap_sum / double(a.sentences);
    return b;
  };

  EvalReport r;
  for (const auto& [k, a] : buckets) r.per_k.push_back(fill(k, a));
  r.per_k.push_back(fill(0, all));
  r.sentences = int(all.sentences);
  r.words = int(all.words);
  r.detection_accuracy = double(all.det_words) / double(all.words);
  r.correction_accuracy = double(all.cor_words) / double(all.words);
  r.map = all.word_ap_sum / double(all.words);
  return r;
}

}  // namespace vtc
