#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vtc/errors.hpp"

namespace vtc {

// Word <-> index bijection plus unigram counts. Indices are assigned in
// first-appearance order, which makes vocabularies reproducible from the
// corpus alone.
class Vocabulary {
 public:
  int add_or_get(const std::string& w) {
    auto it = index_.find(w);
    if (it != index_.end()) return it->second;
    const int id = int(words_.size());
    index_.emplace(w, id);
    words_.push_back(w);
    counts_.push_back(0);
    return id;
  }

  int find(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? -1 : it->second;
  }

  int at(const std::string& w) const {
    const int id = find(w);
    if (id < 0) throw index_error("word not in vocabulary: " + w);
    return id;
  }

  const std::string& word(int id) const {
    if (id < 0 || id >= size())
      throw index_error("vocabulary index " + std::to_string(id) + " out of range " +
                        std::to_string(size()));
    return words_[std::size_t(id)];
  }

  int size() const { return int(words_.size()); }
  bool contains(const std::string& w) const { return index_.count(w) != 0; }

  long long count(int id) const { return counts_[std::size_t(id)]; }
  void add_count(int id, long long n = 1) { counts_[std::size_t(id)] += n; }

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<long long>& counts() const { return counts_; }

 private:
  std::vector<std::string> words_;
  std::vector<long long> counts_;
  std::unordered_map<std::string, int> index_;
};

// For each POS tag r, the set S_r of words that take tag r at least once in
// the corpus, with their whole-corpus unigram counts. Members are sorted by
// word index; a word belongs to every tag it was ever seen with.
struct PosSets {
  std::vector<std::string> tags;
  std::unordered_map<std::string, int> tag_index;
  std::vector<std::vector<int>> members;
  std::vector<std::vector<long long>> member_counts;

  int tag_id(const std::string& tag) const {
    auto it = tag_index.find(tag);
    return it == tag_index.end() ? -1 : it->second;
  }

  int add_tag(const std::string& tag) {
    const int existing = tag_id(tag);
    if (existing >= 0) return existing;
    const int id = int(tags.size());
    tag_index.emplace(tag, id);
    tags.push_back(tag);
    members.emplace_back();
    member_counts.emplace_back();
    return id;
  }
};

// Suffix-rule tagger for corpora that arrive without tags. Deliberately
// crude; synthetic corpora carry template-assigned tags and never hit this.
inline std::string fallback_tag(const std::string& w) {
  static const std::unordered_map<std::string, std::string> closed = {
      {"the", "DT"}, {"a", "DT"},    {"an", "DT"},  {"in", "IN"},  {"on", "IN"},
      {"at", "IN"},  {"near", "IN"}, {"with", "IN"}, {"from", "IN"}, {"to", "IN"},
      {"is", "VBZ"}, {"are", "VBP"}, {"was", "VBD"}, {"and", "CC"}, {"he", "PRP"},
      {"she", "PRP"}, {"it", "PRP"}, {"they", "PRP"}};
  auto it = closed.find(w);
  if (it != closed.end()) return it->second;
  auto ends_with = [&](const char* suf) {
    const std::size_t n = std::char_traits<char>::length(suf);
    return w.size() > n && w.compare(w.size() - n, n, suf) == 0;
  };
  if (ends_with("ly")) return "RB";
  if (ends_with("ing")) return "VBG";
  if (ends_with("ed")) return "VBD";
  if (ends_with("est")) return "JJS";
  if (w.size() > 3 && w.back() == 's') return "NNS";
  return "NN";
}

}  // namespace vtc
