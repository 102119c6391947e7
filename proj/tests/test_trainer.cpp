#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "vtc/synth.hpp"
#include "vtc/trainer.hpp"

using namespace vtc;

namespace {

struct MiniData {
  std::vector<VtcSample> train;
  std::vector<VtcSample> val;
  Vocabulary vocab;
  std::vector<int> beta;
  FeatureStore features;
};

MiniData mini_data(std::uint64_t seed = 9, int sentences = 40) {
  SynthConfig sc;
  sc.sentences = sentences;
  sc.vocab_target = 30;
  sc.groups = 2;
  sc.subjects_per_group = 2;
  sc.d_v = 8;
  sc.noise = 0.05f;
  sc.seed = seed;
  SynthCorpus corpus = generate_synthetic(sc);

  auto [cv, pos] = build_vocab_and_pos(corpus.sentences);
  Rng rng(seed + 100);
  std::vector<VtcSample> all;
  for (const AnnotatedSentence& s : corpus.sentences)
    for (VtcSample& v : corrupt(s, CorruptionStrategy::pos_natural, 1, cv, pos, rng))
      all.push_back(std::move(v));

  MiniData d;
  const std::size_t cut = all.size() * 4 / 5;
  d.train.assign(all.begin(), all.begin() + std::ptrdiff_t(cut));
  d.val.assign(all.begin() + std::ptrdiff_t(cut), all.end());
  d.vocab = build_model_vocab(all);  // cover val too; datagen owns real splits
  d.beta = build_beta(all, d.vocab);
  d.features = std::move(corpus.features);
  return d;
}

ModelConfig mini_config(VisualMode mode = VisualMode::off) {
  ModelConfig cfg;
  cfg.d_x = 10;
  cfg.h = 8;
  cfg.d_q = 12;
  cfg.m = 3;
  cfg.depth = 1;
  cfg.n_max = 12;
  cfg.d_v = 8;
  cfg.visual = mode;
  return cfg;
}

TrainOptions quick_options(int epochs, unsigned long long seed = 5) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch = 8;
  o.seed = seed;
  return o;
}

std::vector<float> flat_params(VtcModel& m) {
  std::vector<float> out;
  m.visit_params([&](const std::string&, Tensor& p) {
    out.insert(out.end(), p.values().begin(), p.values().end());
  });
  return out;
}

}  // namespace

TEST_CASE("training rows reject incompatible corpora") {
  MiniData d = mini_data();
  Rng rng(1);
  VtcModel model(mini_config(), d.vocab, d.beta, rng);

  std::vector<TrainSample> rows = make_train_samples(d.train, model);
  REQUIRE(rows.size() == d.train.size());
  for (const TrainSample& r : rows) {
    CHECK(r.true_pos >= 0);
    CHECK(model.beta_index_of(r.true_word) >= 0);
  }

  VtcSample bad = d.train[0];
  bad.tokens[0] = "notaword";
  CHECK_THROWS_AS(make_train_samples({bad}, model), contract_error);

  bad = d.train[0];
  bad.corruptions.push_back(bad.corruptions[0]);
  bad.corruptions.back().pos = bad.corruptions[0].pos == 0 ? 1 : 0;
  bad.corruptions.back().original = bad.tokens[std::size_t(bad.corruptions.back().pos)];
  CHECK_THROWS_AS(make_train_samples({bad}, model), contract_error);

  // A candidate list that misses the answer word is incompatible.
  Rng rng2(1);
  std::vector<int> small_beta = {d.beta[0], d.beta[1]};
  VtcModel narrow(mini_config(), d.vocab, small_beta, rng2);
  bool threw = false;
  try {
    make_train_samples(d.train, narrow);
  } catch (const contract_error&) {
    threw = true;
  }
  CHECK(threw);
}

TEST_CASE("one epoch trains and logs") {
  MiniData d = mini_data(11, 12);
  Rng rng(2);
  VtcModel model(mini_config(), d.vocab, d.beta, rng);
  auto train = make_train_samples(d.train, model);
  auto val = make_train_samples(d.val, model);

  std::ostringstream log;
  TrainResult r = train_model(model, train, val, nullptr, quick_options(1), &log);
  REQUIRE(r.log.size() == 1);
  CHECK(std::isfinite(r.log[0].loss));
  CHECK(r.log[0].loss > 0.0);
  CHECK(r.log[0].loss == Catch::Approx(r.log[0].loss_detection + r.log[0].loss_correction)
                             .margin(1e-9));
  CHECK(r.best_epoch == 0);
  CHECK(log.str().find("epoch   0") != std::string::npos);
  CHECK(log.str().find("val detection") != std::string::npos);
}

TEST_CASE("loss goes down over a short run") {
  MiniData d = mini_data(13, 30);
  Rng rng(3);
  VtcModel model(mini_config(), d.vocab, d.beta, rng);
  auto train = make_train_samples(d.train, model);
  auto val = make_train_samples(d.val, model);

  TrainResult r = train_model(model, train, val, nullptr, quick_options(15));
  REQUIRE(r.log.size() >= 2);
  CHECK(r.log.back().loss < r.log.front().loss);
}

TEST_CASE("same seed reproduces training exactly") {
  MiniData d = mini_data(17, 16);

  auto run = [&](unsigned model_seed, unsigned long long train_seed) {
    Rng rng(model_seed);
    VtcModel model(mini_config(), d.vocab, d.beta, rng);
    auto train = make_train_samples(d.train, model);
    auto val = make_train_samples(d.val, model);
    TrainResult r = train_model(model, train, val, nullptr, quick_options(4, train_seed));
    return std::make_pair(flat_params(model), r);
  };

  auto [p1, r1] = run(7, 5);
  auto [p2, r2] = run(7, 5);
  CHECK(p1 == p2);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].loss == r2.log[i].loss);
    CHECK(r1.log[i].val_detection == r2.log[i].val_detection);
  }

  auto [p3, r3] = run(7, 6);  // different shuffle order
  CHECK(p1 != p3);
}

TEST_CASE("early stopping restores the best validation weights") {
  MiniData d = mini_data(19, 24);
  Rng rng(4);
  VtcModel model(mini_config(), d.vocab, d.beta, rng);
  auto train = make_train_samples(d.train, model);
  auto val = make_train_samples(d.val, model);

  TrainOptions o = quick_options(30);
  o.patience = 3;
  TrainResult r = train_model(model, train, val, nullptr, o);

  REQUIRE(r.best_epoch >= 0);
  // The run either exhausted its epochs or stopped patience epochs after the best.
  if (int(r.log.size()) < o.epochs)
    CHECK(int(r.log.size()) == r.best_epoch + o.patience + 1);

  // Restoration: the returned model scores exactly the best logged validation.
  const auto [vd, vc] = evaluate_samples(model, val, nullptr);
  CHECK(vd == r.best_val_detection);
  CHECK(vc == r.best_val_correction);
  double best_logged = -1.0;
  for (const EpochLog& e : r.log) best_logged = std::max(best_logged, e.val_detection);
  CHECK(vd == best_logged);
}

TEST_CASE("top-1 evaluation counts exact hits") {
  MiniData d = mini_data(23, 12);
  Rng rng(5);
  VtcModel model(mini_config(), d.vocab, d.beta, rng);
  model.visit_params([](const std::string&, Tensor& p) {
    std::fill(p.data(), p.data() + p.size(), 0.0f);
  });

  // A flat model always answers position 0 and the first candidate.
  TrainSample hit;
  hit.ids = {2, 3, 4};
  hit.true_pos = 0;
  hit.true_word = model.beta()[0];
  TrainSample miss = hit;
  miss.true_pos = 1;
  TrainSample half = hit;
  half.true_word = model.beta()[1];

  const auto [det, cor] = evaluate_samples(model, {hit, miss, half}, nullptr);
  CHECK(det == Catch::Approx(2.0 / 3.0));
  CHECK(cor == Catch::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(evaluate_samples(model, {}, nullptr), contract_error);
}

TEST_CASE("visual training pulls features from the store") {
  MiniData d = mini_data(29, 16);
  Rng rng(6);
  VtcModel model(mini_config(VisualMode::gated_bias), d.vocab, d.beta, rng);
  auto train = make_train_samples(d.train, model);
  auto val = make_train_samples(d.val, model);

  CHECK_THROWS_AS(train_model(model, train, val, nullptr, quick_options(1)),
                  contract_error);

  TrainResult r = train_model(model, train, val, &d.features, quick_options(2));
  CHECK(r.log.size() == 2);
  CHECK(std::isfinite(r.log[1].loss));

  FeatureStore empty(8);
  CHECK_THROWS_AS(train_model(model, train, val, &empty, quick_options(1)), index_error);
}

TEST_CASE("inference over a corpus feeds the report") {
  MiniData d = mini_data(31, 16);
  Rng rng(7);
  VtcModel model(mini_config(VisualMode::gated_bias), d.vocab, d.beta, rng);

  std::vector<EvalSample> samples = run_inference(model, d.val, &d.features);
  REQUIRE(samples.size() == d.val.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].n == int(d.val[i].tokens.size()));
    CHECK(samples[i].detected.size() == std::size_t(d.val[i].k()));
    CHECK(samples[i].pair_scores.size() ==
          std::size_t(samples[i].n) * d.beta.size());
  }
  EvalReport rep = multi_k_report(samples);
  CHECK(rep.sentences == int(samples.size()));

  std::vector<VtcSample> oov = d.val;
  oov[0].tokens[0] = "martian";
  CHECK_THROWS_AS(run_inference(model, oov, &d.features), contract_error);
}

TEST_CASE("stubs sit at the extremes of the metric range") {
  MiniData d = mini_data(37, 60);
  Rng rng(8);
  VtcModel model(mini_config(), d.vocab, d.beta, rng);

  Rng stub_rng(99);
  EvalReport oracle =
      multi_k_report(run_inference_stub(model, d.train, StubKind::oracle, stub_rng));
  CHECK(oracle.detection_accuracy == 1.0);
  CHECK(oracle.correction_accuracy == 1.0);
  CHECK(oracle.map == 1.0);

  // Random guessing concentrates near the chance floor over many draws.
  std::vector<EvalSample> pool;
  double expected_det = 0.0, expected_cor = 0.0;
  const int repeats = 40;
  for (int rep = 0; rep < repeats; ++rep) {
    auto batch = run_inference_stub(model, d.train, StubKind::random_guess, stub_rng);
    pool.insert(pool.end(), batch.begin(), batch.end());
  }
  for (const VtcSample& s : d.train) {
    expected_det += 1.0 / double(s.tokens.size());
    expected_cor += 1.0 / (double(s.tokens.size()) * double(d.beta.size()));
  }
  expected_det /= double(d.train.size());
  expected_cor /= double(d.train.size());

  EvalReport rnd = multi_k_report(pool);
  CHECK(rnd.detection_accuracy == Catch::Approx(expected_det).margin(0.03));
  CHECK(rnd.correction_accuracy == Catch::Approx(expected_cor).margin(0.02));
  CHECK(rnd.detection_accuracy > 0.0);
  CHECK(rnd.detection_accuracy < 0.5);
}
