#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "vtc/dataset.hpp"
#include "vtc/errors.hpp"
#include "vtc/rng.hpp"

// Synthetic grounded-caption corpus. Each sentence narrates a scene drawn
// from a fixed scene inventory. Scenes are organized in groups: every scene
// of a group shares the same verb and object, and scenes within a group
// differ only by subject. Verb and object therefore identify the group from
// text alone, while the subject is recoverable only from the paired video
// feature. That makes subject blanks irreducibly ambiguous for a text-only
// corrector (an explicit Bayes bound, checked in the tests) and cleanly
// separable with the feature, which is what the visual/text ablations need.

namespace vtc {

struct SynthConfig {
  int sentences = 200;
  int vocab_target = 120;     // approximate final |V|
  int groups = 2;             // scene groups
  int subjects_per_group = 2;  // scenes per group
  int d_v = 16;
  float noise = 0.1f;  // expected L2 distance of a feature from its scene center
  std::uint64_t seed = 1;

  int scenes() const { return groups * subjects_per_group; }

  void validate() const {
    if (sentences < 1) throw config_error("synth: sentences must be >= 1");
    if (groups < 1 || subjects_per_group < 1)
      throw config_error("synth: groups and subjects-per-group must be >= 1");
    if (d_v < 1) throw config_error("synth: d_v must be >= 1");
    if (noise < 0.0f) throw config_error("synth: noise must be >= 0");
    const int floor = scenes() + 2 * groups + 4 + 3 * 2;
    if (vocab_target < floor)
      throw config_error("synth: vocab_target " + std::to_string(vocab_target) +
                         " too small for the scene inventory (needs >= " +
                         std::to_string(floor) + ")");
  }
};

// The generator's own distribution tables, exposed so tests can compute
// closed-form bounds (e.g. the blind-correction Bayes cap) independently.
struct SceneTable {
  int groups = 0;
  int subjects_per_group = 0;
  std::vector<std::string> subjects;       // one per scene
  std::vector<std::string> group_verbs;    // one per group
  std::vector<std::string> group_objects;  // one per group
  std::vector<std::string> adjectives, adverbs, locations;
  std::vector<std::vector<float>> scene_embedding;  // unit vectors, d_v each

  int scenes() const { return groups * subjects_per_group; }
  int group_of(int scene) const { return scene / subjects_per_group; }
};

struct SynthCorpus {
  std::vector<AnnotatedSentence> sentences;
  std::vector<int> scene_of;  // parallel to sentences
  FeatureStore features;
  SceneTable table;
};

namespace detail {

inline std::string synth_word(Rng& rng, std::set<std::string>& used) {
  static const char* consonants = "bdfgklmnprstvz";
  static const char* vowels = "aeiou";
  for (;;) {
    const int syllables = 2 + rng.below_int(2);
    std::string w;
    for (int i = 0; i < syllables; ++i) {
      w += consonants[rng.below(14)];
      w += vowels[rng.below(5)];
    }
    if (used.insert(w).second) return w;
  }
}

}  // namespace detail

inline SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthCorpus out;
  SceneTable& table = out.table;
  table.groups = cfg.groups;
  table.subjects_per_group = cfg.subjects_per_group;

  std::set<std::string> used = {"the", "a", "in", "near"};
  for (int s = 0; s < cfg.scenes(); ++s) table.subjects.push_back(detail::synth_word(rng, used));
  for (int g = 0; g < cfg.groups; ++g) {
    table.group_verbs.push_back(detail::synth_word(rng, used));
    table.group_objects.push_back(detail::synth_word(rng, used));
  }
  const int budget = cfg.vocab_target - cfg.scenes() - 2 * cfg.groups - 4;
  const int n_adj = std::max(2, budget * 2 / 5);
  const int n_adv = std::max(2, budget * 3 / 10);
  const int n_loc = std::max(2, budget - n_adj - n_adv);
  for (int i = 0; i < n_adj; ++i) table.adjectives.push_back(detail::synth_word(rng, used));
  for (int i = 0; i < n_adv; ++i) table.adverbs.push_back(detail::synth_word(rng, used));
  for (int i = 0; i < n_loc; ++i) table.locations.push_back(detail::synth_word(rng, used));

  // Unit-norm scene centers; sample features add isotropic noise with
  // expected norm cfg.noise.
  for (int s = 0; s < cfg.scenes(); ++s) {
    std::vector<float> e(std::size_t(cfg.d_v), 0.0f);
    double ss = 0.0;
    for (float& x : e) {
      x = float(rng.normal());
      ss += double(x) * double(x);
    }
    const float inv = float(1.0 / std::sqrt(std::max(ss, 1e-12)));
    for (float& x : e) x *= inv;
    table.scene_embedding.push_back(std::move(e));
  }

  // Sentence templates. Slot legend: T="the" A="a" S=subject V=verb
  // O=object J=adjective R=adverb I=preposition L=location.
  static const std::vector<std::string> templates = {
      "TSVTO", "TJSVTO", "TSVTOR", "TSRVTJO", "TJSVTOITL", "TSVTJOIAL",
  };

  out.features = FeatureStore(cfg.d_v);
  const float dim_sigma = cfg.noise / std::sqrt(float(cfg.d_v));
  char idbuf[32];

  for (int i = 0; i < cfg.sentences; ++i) {
    const int scene = i % cfg.scenes();  // round-robin: uniform scene prior
    const int group = table.group_of(scene);
    const std::string& tpl = templates[rng.below(templates.size())];

    AnnotatedSentence s;
    std::snprintf(idbuf, sizeof idbuf, "s%06d", i);
    s.sentence_id = idbuf;
    std::snprintf(idbuf, sizeof idbuf, "v%06d", i);
    s.video_id = idbuf;

    int subj_pos = -1, verb_pos = -1, obj_pos = -1;
    for (char slot : tpl) {
      std::string word, tag;
      switch (slot) {
        case 'T': word = "the"; tag = "DT"; break;
        case 'A': word = "a"; tag = "DT"; break;
        case 'S':
          word = table.subjects[std::size_t(scene)];
          tag = "NN";
          subj_pos = int(s.tokens.size());
          break;
        case 'V':
          word = table.group_verbs[std::size_t(group)];
          tag = "VBZ";
          verb_pos = int(s.tokens.size());
          break;
        case 'O':
          word = table.group_objects[std::size_t(group)];
          tag = "NN";
          obj_pos = int(s.tokens.size());
          break;
        case 'J':
          word = table.adjectives[rng.below(table.adjectives.size())];
          tag = "JJ";
          break;
        case 'R':
          word = table.adverbs[rng.below(table.adverbs.size())];
          tag = "RB";
          break;
        case 'I': word = rng.below(2) ? "near" : "in"; tag = "IN"; break;
        case 'L':
          word = table.locations[rng.below(table.locations.size())];
          tag = "NN";
          break;
      }
      s.tokens.push_back(std::move(word));
      s.tags.push_back(std::move(tag));
    }

    // Blanks: the subject slot plus, alternating, the verb or object slot.
    // Only scene-determined slots are annotated; fillers never are.
    s.blanks.push_back(subj_pos);
    s.blanks.push_back(i % 2 == 0 ? verb_pos : obj_pos);
    std::sort(s.blanks.begin(), s.blanks.end());

    std::vector<float> feat = table.scene_embedding[std::size_t(scene)];
    for (float& x : feat) x += float(rng.normal(0.0, double(dim_sigma)));
    out.features.add(s.video_id, feat);

    out.scene_of.push_back(scene);
    out.sentences.push_back(std::move(s));
  }
  return out;
}

// ---- datagen pipeline -----------------------------------------------------------

struct DatagenOptions {
  CorruptionStrategy strategy = CorruptionStrategy::pos_natural;
  int k = 1;  // test-split corruption mode; train/val are always k=1
  SynthConfig synth;
};

struct DatagenSummary {
  int train_samples = 0, val_samples = 0, test_samples = 0;
  CorruptionStats stats;
};

// Generates a corpus, splits it by sentence-id hash, builds vocabulary and
// POS statistics from the train split only, corrupts every split with those
// statistics, and writes train/val/test JSONL plus the feature store.
inline DatagenSummary run_datagen(const DatagenOptions& opt, const std::string& out_dir) {
  const SynthCorpus corpus = generate_synthetic(opt.synth);

  std::vector<const AnnotatedSentence*> splits[3];
  for (const AnnotatedSentence& s : corpus.sentences)
    splits[int(split_of(s.sentence_id))].push_back(&s);
  if (splits[0].empty()) throw contract_error("datagen: train split is empty");

  std::vector<AnnotatedSentence> train_sentences;
  train_sentences.reserve(splits[0].size());
  for (const AnnotatedSentence* s : splits[0]) train_sentences.push_back(*s);
  auto [vocab, pos] = build_vocab_and_pos(train_sentences);

  std::filesystem::create_directories(out_dir);
  DatagenSummary summary;
  const char* names[3] = {"train.jsonl", "val.jsonl", "test.jsonl"};
  for (int si = 0; si < 3; ++si) {
    Rng rng(opt.synth.seed + std::uint64_t(si) + 1);
    const int k = si == 2 ? opt.k : 1;
    std::vector<VtcSample> samples;
    for (const AnnotatedSentence* s : splits[si]) {
      // Sentences containing words absent from the train split cannot be
      // corrupted against train statistics; skip them.
      bool coverable = true;
      for (const std::string& t : s->tokens)
        if (!vocab.contains(t)) {
          coverable = false;
          break;
        }
      if (!coverable) {
        ++summary.stats.skipped_empty_pool;
        continue;
      }
      std::vector<VtcSample> got = corrupt(*s, opt.strategy, k, vocab, pos, rng, &summary.stats);
      for (VtcSample& x : got) samples.push_back(std::move(x));
    }
    write_corpus((std::filesystem::path(out_dir) / names[si]).string(), samples);
    (si == 0 ? summary.train_samples : si == 1 ? summary.val_samples : summary.test_samples) =
        int(samples.size());
  }
  corpus.features.save((std::filesystem::path(out_dir) / "features.vtcf").string());

  nlohmann::json meta;
  meta["strategy"] =
      opt.strategy == CorruptionStrategy::random_placement ? "random" : "pos-natural";
  meta["k"] = opt.k;
  meta["seed"] = opt.synth.seed;
  meta["sentences"] = opt.synth.sentences;
  meta["vocab_target"] = opt.synth.vocab_target;
  meta["groups"] = opt.synth.groups;
  meta["subjects_per_group"] = opt.synth.subjects_per_group;
  meta["d_v"] = opt.synth.d_v;
  meta["noise"] = opt.synth.noise;
  std::ofstream mf(std::filesystem::path(out_dir) / "gen_meta.json");
  if (!mf) throw io_error("cannot write gen_meta.json in " + out_dir);
  mf << meta.dump(2) << '\n';
  return summary;
}

}  // namespace vtc
