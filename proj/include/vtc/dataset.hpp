#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vtc/errors.hpp"
#include "vtc/rng.hpp"
#include "vtc/vocab.hpp"

namespace vtc {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and assume a little-endian host");

// ---- corpus types ------------------------------------------------------------

// A clean source sentence with the positions eligible for corruption.
struct AnnotatedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::vector<int> blanks;  // positions whose token is an annotated answer
  std::string video_id;
  std::string sentence_id;
};

struct Corruption {
  int pos = -1;
  std::string original;
  std::string replacement;
};

// One task instance: a corrupted sentence, its ground truth, and the id of
// the paired video feature.
struct VtcSample {
  std::vector<std::string> tokens;  // corrupted token sequence
  std::vector<std::string> tags;
  std::vector<Corruption> corruptions;  // sorted by position
  std::string video_id;

  int k() const { return int(corruptions.size()); }
};

inline void validate_sample(const VtcSample& s, const std::string& where) {
  if (s.tokens.empty()) throw contract_error(where + ": empty token list");
  if (!s.tags.empty() && s.tags.size() != s.tokens.size())
    throw contract_error(where + ": tags/tokens length mismatch");
  if (s.corruptions.empty()) throw contract_error(where + ": sample carries no corruption");
  int prev = -1;
  for (const Corruption& c : s.corruptions) {
    if (c.pos < 0 || c.pos >= int(s.tokens.size()))
      throw contract_error(where + ": corruption position " + std::to_string(c.pos) +
                           " out of range");
    if (c.pos <= prev) throw contract_error(where + ": corruption positions not increasing");
    prev = c.pos;
    if (c.replacement == c.original)
      throw contract_error(where + ": replacement equals original at position " +
                           std::to_string(c.pos));
    if (s.tokens[std::size_t(c.pos)] != c.replacement)
      throw contract_error(where + ": token at position " + std::to_string(c.pos) +
                           " does not match recorded replacement");
  }
}

// ---- corpus JSONL IO ---------------------------------------------------------

inline nlohmann::json sample_to_json(const VtcSample& s) {
  nlohmann::json j;
  j["tokens"] = s.tokens;
  j["tags"] = s.tags;
  nlohmann::json cs = nlohmann::json::array();
  for (const Corruption& c : s.corruptions) {
    nlohmann::json cj;
    cj["pos"] = c.pos;
    cj["original"] = c.original;
    cj["replacement"] = c.replacement;
    cs.push_back(cj);
  }
  j["corruptions"] = cs;
  j["video_id"] = s.video_id;
  return j;
}

inline VtcSample sample_from_json(const nlohmann::json& j, const std::string& where) {
  VtcSample s;
  try {
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    s.tags = j.value("tags", std::vector<std::string>{});
    s.video_id = j.value("video_id", std::string{});
    for (const auto& cj : j.at("corruptions")) {
      Corruption c;
      c.pos = cj.at("pos").get<int>();
      c.original = cj.at("original").get<std::string>();
      c.replacement = cj.at("replacement").get<std::string>();
      s.corruptions.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error(where + ": malformed corpus record: " + e.what());
  }
  validate_sample(s, where);
  return s;
}

inline void write_corpus(const std::string& path, const std::vector<VtcSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open corpus for writing: " + path);
  for (const VtcSample& s : samples) out << sample_to_json(s).dump() << '\n';
  if (!out) throw io_error("write failed: " + path);
}

inline std::vector<VtcSample> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open corpus: " + path);
  std::vector<VtcSample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw io_error(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    samples.push_back(sample_from_json(j, path + ":" + std::to_string(lineno)));
  }
  return samples;
}

// ---- feature store -------------------------------------------------------------
//
// Binary layout (little-endian):
//   magic "VTCF" | u32 d_v | u32 record_count |
//   repeated: u32 id_len | id bytes | d_v * f32

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw io_error("truncated file while reading " + what);
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_string(std::istream& in, const std::string& what) {
  const std::uint32_t n = read_u32(in, what);
  if (n > (1u << 20)) throw io_error("implausible string length in " + what);
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  if (!in) throw io_error("truncated file while reading " + what);
  return s;
}

}  // namespace detail

class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(int dim) : dim_(dim) {
    if (dim <= 0) throw config_error("feature store dimension must be positive");
  }

  int dim() const { return dim_; }
  std::size_t count() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  void add(const std::string& id, std::span<const float> v) {
    if (int(v.size()) != dim_)
      throw dimension_error("feature for " + id + " has dimension " +
                            std::to_string(v.size()) + ", store expects " +
                            std::to_string(dim_));
    if (index_.count(id)) throw contract_error("duplicate feature id: " + id);
    index_.emplace(id, int(ids_.size()));
    ids_.push_back(id);
    data_.insert(data_.end(), v.begin(), v.end());
  }

  bool has(const std::string& id) const { return index_.count(id) != 0; }

  std::span<const float> get(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw index_error("unknown video id: " + id);
    return row(it->second);
  }

  std::span<const float> row(int i) const {
    return {data_.data() + std::size_t(i) * std::size_t(dim_), std::size_t(dim_)};
  }

  int row_index(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open feature store for writing: " + path);
    out.write("VTCF", 4);
    detail::write_u32(out, std::uint32_t(dim_));
    detail::write_u32(out, std::uint32_t(ids_.size()));
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      detail::write_string(out, ids_[i]);
      out.write(reinterpret_cast<const char*>(data_.data() + i * std::size_t(dim_)),
                std::streamsize(std::size_t(dim_) * 4));
    }
    if (!out) throw io_error("write failed: " + path);
  }

  static FeatureStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open feature store: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "VTCF")
      throw io_error(path + " is not a feature store (bad magic)");
    FeatureStore fs;
    fs.dim_ = int(detail::read_u32(in, path));
    if (fs.dim_ <= 0) throw io_error(path + ": invalid feature dimension");
    const std::uint32_t n = detail::read_u32(in, path);
    fs.ids_.reserve(n);
    fs.data_.reserve(std::size_t(n) * std::size_t(fs.dim_));
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string id = detail::read_string(in, path);
      std::vector<float> v(std::size_t(fs.dim_), 0.0f);
      in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 4));
      if (!in) throw io_error("truncated feature store: " + path);
      fs.add(id, v);
    }
    return fs;
  }

 private:
  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, int> index_;
};

// ---- vocabulary construction ---------------------------------------------------

// Vocabulary and POS membership from clean sentences. Counts are unigram
// occurrence counts over these sentences; S_r collects every word seen at
// least once under tag r.
inline std::pair<Vocabulary, PosSets> build_vocab_and_pos(
    const std::vector<AnnotatedSentence>& corpus) {
  if (corpus.empty()) throw contract_error("build_vocab_and_pos: empty corpus");
  Vocabulary vocab;
  PosSets pos;
  std::vector<std::set<int>> tag_members;
  for (const AnnotatedSentence& s : corpus) {
    if (s.tokens.size() != s.tags.size())
      throw contract_error("sentence " + s.sentence_id + ": tags/tokens length mismatch");
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const int w = vocab.add_or_get(s.tokens[i]);
      vocab.add_count(w);
      const int t = pos.add_tag(s.tags[i]);
      if (std::size_t(t) >= tag_members.size()) tag_members.emplace_back();
      tag_members[std::size_t(t)].insert(w);
    }
  }
  for (std::size_t t = 0; t < tag_members.size(); ++t) {
    pos.members[t].assign(tag_members[t].begin(), tag_members[t].end());
    pos.member_counts[t].reserve(pos.members[t].size());
    for (int w : pos.members[t]) pos.member_counts[t].push_back(vocab.count(w));
  }
  return {std::move(vocab), std::move(pos)};
}

// ---- corruption strategies ------------------------------------------------------

enum class CorruptionStrategy { random_placement, pos_natural };

inline CorruptionStrategy parse_strategy(const std::string& s) {
  if (s == "random") return CorruptionStrategy::random_placement;
  if (s == "pos-natural") return CorruptionStrategy::pos_natural;
  throw config_error("unknown corruption strategy: " + s +
                     " (expected 'random' or 'pos-natural')");
}

// Uniform draw over the vocabulary; re-draws while the result equals
// `exclude` (pass -1 to disable exclusion).
inline int sample_random_placement(Rng& rng, const Vocabulary& vocab, int exclude = -1) {
  if (vocab.size() < 2) throw contract_error("random placement needs |V| >= 2");
  int w = rng.below_int(vocab.size());
  while (w == exclude) w = rng.below_int(vocab.size());
  return w;
}

// Count-proportional draw from S_tag \ {exclude}. Returns -1 when the pool
// is empty so the caller can skip and log.
inline int sample_pos_natural(Rng& rng, const PosSets& pos, int tag, int exclude) {
  if (tag < 0 || std::size_t(tag) >= pos.members.size())
    throw contract_error("sample_pos_natural: unknown tag id " + std::to_string(tag));
  const std::vector<int>& members = pos.members[std::size_t(tag)];
  const std::vector<long long>& counts = pos.member_counts[std::size_t(tag)];
  std::vector<double> weights(members.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i] == exclude) continue;
    weights[i] = double(counts[i]);
    total += weights[i];
  }
  if (total <= 0.0) return -1;
  return members[rng.weighted(weights)];
}

struct CorruptionStats {
  int emitted = 0;
  int skipped_empty_pool = 0;  // S_r \ {original} was empty
  int skipped_few_blanks = 0;  // sentence had fewer blanks than requested k
};

// Corrupts one annotated sentence.
//   k == 1: training mode, one single-corruption sample per blank;
//   k == 0: corrupt every blank in one sample;
//   k >= 2: corrupt a random k-subset of blanks in one sample (skipped when
//           the sentence has fewer than k blanks).
inline std::vector<VtcSample> corrupt(const AnnotatedSentence& s, CorruptionStrategy strategy,
                                      int k, const Vocabulary& vocab, const PosSets& pos,
                                      Rng& rng, CorruptionStats* stats = nullptr) {
  if (k < 0) throw config_error("corrupt: k must be >= 0");
  if (s.blanks.empty()) throw contract_error("corrupt: sentence has no blanks");
  for (int b : s.blanks)
    if (b < 0 || std::size_t(b) >= s.tokens.size())
      throw contract_error("corrupt: blank position out of range in " + s.sentence_id);

  auto draw = [&](int position) -> int {
    const int original = vocab.find(s.tokens[std::size_t(position)]);
    if (original < 0)
      throw contract_error("corrupt: token '" + s.tokens[std::size_t(position)] +
                           "' missing from vocabulary");
    if (strategy == CorruptionStrategy::random_placement)
      return sample_random_placement(rng, vocab, original);
    const int tag = pos.tag_id(s.tags[std::size_t(position)]);
    if (tag < 0)
      throw contract_error("corrupt: tag '" + s.tags[std::size_t(position)] +
                           "' missing from POS sets");
    return sample_pos_natural(rng, pos, tag, original);
  };

  std::vector<VtcSample> samples_out;
  auto make_sample = [&](const std::vector<int>& positions) -> bool {
    VtcSample out;
    out.tokens = s.tokens;
    out.tags = s.tags;
    out.video_id = s.video_id;
    for (int p : positions) {
      const int w = draw(p);
      if (w < 0) {
        if (stats) ++stats->skipped_empty_pool;
        return false;
      }
      Corruption c;
      c.pos = p;
      c.original = s.tokens[std::size_t(p)];
      c.replacement = vocab.word(w);
      out.tokens[std::size_t(p)] = c.replacement;
      out.corruptions.push_back(std::move(c));
    }
    std::sort(out.corruptions.begin(), out.corruptions.end(),
              [](const Corruption& a, const Corruption& b) { return a.pos < b.pos; });
    samples_out.push_back(std::move(out));
    return true;
  };

  if (k == 1) {
    for (int b : s.blanks)
      if (make_sample({b}) && stats) ++stats->emitted;
  } else if (k == 0) {
    std::vector<int> all = s.blanks;
    std::sort(all.begin(), all.end());
    if (make_sample(all) && stats) ++stats->emitted;
  } else {
    if (int(s.blanks.size()) < k) {
      if (stats) ++stats->skipped_few_blanks;
    } else {
      std::vector<int> chosen = s.blanks;
      rng.shuffle(chosen);
      chosen.resize(std::size_t(k));
      std::sort(chosen.begin(), chosen.end());
      if (make_sample(chosen) && stats) ++stats->emitted;
    }
  }
  return samples_out;
}

// ---- deterministic splits --------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

enum class Split { train, val, test };

// 80/10/10 by hash of the sentence id; stable across runs and platforms.
inline Split split_of(const std::string& sentence_id) {
  const std::uint64_t bucket = fnv1a64(sentence_id) % 10;
  if (bucket < 8) return Split::train;
  return bucket == 8 ? Split::val : Split::test;
}

}  // namespace vtc
