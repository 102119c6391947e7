// Release gate. Eight independent criteria cover gradients, analytic
// invariants, oracle equivalence, trainability, ablation ordering, chance
// floors, corruption statistics, and determinism. Each prints exactly one
// [PASS]/[FAIL] line; the exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "support/oracles.hpp"
#include "vtc/vtc.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects expectation failures; keeps only the first few messages.
struct Check {
  long long checked = 0;
  long long failed = 0;
  std::string first;

  void expect(bool ok, const std::string& what) {
    ++checked;
    if (ok) return;
    ++failed;
    if (first.empty()) first = what;
  }

  bool pass() const { return failed == 0; }
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

void report(int idx, const char* name, bool pass, const std::string& detail, double secs) {
  std::printf("[%s] %d. %s: %s (%.1fs)\n", pass ? "PASS" : "FAIL", idx, name, detail.c_str(),
              secs);
  std::fflush(stdout);
}

vtc::Tensor rand_leaf(vtc::Rng& rng, vtc::Shape shape, double lo = -1.0, double hi = 1.0) {
  vtc::Tensor t = vtc::Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = float(rng.uniform(lo, hi));
  t.set_requires_grad(true);
  return t;
}

std::vector<float> rand_values(vtc::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n, 0.0f);
  for (float& x : v) x = float(rng.uniform(lo, hi));
  return v;
}

// ---- finite differences ---------------------------------------------------------
// Central differences with a step sweep: a wrong gradient formula misses at
// every step size, while f32 forward noise only corrupts the smallest steps.

void fd_check(const std::function<vtc::Tensor()>& loss_fn, std::vector<vtc::Tensor> params,
              double tol, int coords_per_param, Check& ck, const std::string& label,
              std::uint64_t seed = 17) {
  const double atol = 2e-5;
  const double floor = 5e-4;
  for (vtc::Tensor& p : params) p.zero_grad();
  vtc::Tensor loss = loss_fn();
  vtc::backward(loss);
  std::vector<std::vector<float>> analytic;
  analytic.reserve(params.size());
  for (vtc::Tensor& p : params) analytic.push_back(p.grad());

  vtc::Rng rng(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    vtc::Tensor& p = params[pi];
    std::vector<std::size_t> coords;
    if (coords_per_param < 0 || std::size_t(coords_per_param) >= p.size()) {
      coords.resize(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) coords[i] = i;
    } else {
      for (int c = 0; c < coords_per_param; ++c)
        coords.push_back(std::size_t(rng.below(p.size())));
    }
    for (std::size_t ci : coords) {
      const float orig = p.data()[ci];
      const double an = double(analytic[pi][ci]);
      double best = 1e300;
      double fd_best = 0.0;
      for (const float h : {1e-3f, 1e-2f, 3e-2f}) {
        double f_plus, f_minus;
        {
          vtc::NoGradGuard ng;
          p.data()[ci] = orig + h;
          f_plus = double(loss_fn().item());
          p.data()[ci] = orig - h;
          f_minus = double(loss_fn().item());
          p.data()[ci] = orig;
        }
        const double fd = (f_plus - f_minus) / (2.0 * double(h));
        double e;
        if (std::fabs(an) < floor && std::fabs(fd) < floor) {
          e = 0.0;
        } else {
          e = std::fabs(an - fd) / (atol + tol * std::max(std::fabs(an), std::fabs(fd)));
        }
        if (e < best) {
          best = e;
          fd_best = fd;
        }
        if (best < 1.0) break;
      }
      ck.expect(best < 1.0, fmt("%s[%zu]: analytic %.6g vs fd %.6g", label.c_str(), ci, an,
                                fd_best));
    }
  }
}

// ---- shared synthetic data ------------------------------------------------------

struct Corpus {
  std::vector<vtc::VtcSample> train, val, test;
  vtc::Vocabulary vocab;  // built from the train samples
  std::vector<int> beta;
  vtc::FeatureStore features;
  int skipped = 0;  // held-out samples incompatible with the train vocabulary
};

Corpus make_corpus(const vtc::SynthConfig& sc, double train_frac, double val_frac,
                   std::uint64_t corrupt_seed) {
  vtc::SynthCorpus synth = vtc::generate_synthetic(sc);
  auto [cv, pos] = vtc::build_vocab_and_pos(synth.sentences);

  vtc::Rng rng(corrupt_seed);
  std::vector<std::vector<vtc::VtcSample>> per_sentence;
  per_sentence.reserve(synth.sentences.size());
  for (const vtc::AnnotatedSentence& s : synth.sentences)
    per_sentence.push_back(vtc::corrupt(s, vtc::CorruptionStrategy::pos_natural, 1, cv, pos, rng));

  Corpus c;
  const std::size_t n = per_sentence.size();
  const std::size_t train_end = std::size_t(double(n) * train_frac);
  const std::size_t val_end = train_end + std::size_t(double(n) * val_frac);
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < train_end ? c.train : i < val_end ? c.val : c.test;
    for (vtc::VtcSample& v : per_sentence[i]) dst.push_back(std::move(v));
  }
  c.vocab = vtc::build_model_vocab(c.train);
  c.beta = vtc::build_beta(c.train, c.vocab);
  c.features = std::move(synth.features);

  // Held-out samples may carry filler words the train split never produced;
  // they cannot be scored against this vocabulary, so drop them up front.
  const auto compatible = [&](const vtc::VtcSample& s) {
    for (const std::string& t : s.tokens)
      if (c.vocab.find(t) < 0) return false;
    for (const vtc::Corruption& cr : s.corruptions) {
      const int w = c.vocab.find(cr.original);
      if (w < 0 || !std::binary_search(c.beta.begin(), c.beta.end(), w)) return false;
    }
    return true;
  };
  for (std::vector<vtc::VtcSample>* split : {&c.val, &c.test}) {
    std::vector<vtc::VtcSample> kept;
    kept.reserve(split->size());
    for (vtc::VtcSample& s : *split) {
      if (compatible(s))
        kept.push_back(std::move(s));
      else
        ++c.skipped;
    }
    *split = std::move(kept);
  }
  return c;
}

vtc::ModelConfig small_config(vtc::VisualMode mode, vtc::EncoderKind enc, int d_v) {
  vtc::ModelConfig mc;
  mc.d_x = 12;
  mc.h = 10;
  mc.d_q = 14;
  mc.m = 3;
  mc.depth = 1;
  mc.n_max = 12;
  mc.d_v = d_v;
  mc.visual = mode;
  mc.encoder = enc;
  return mc;
}

// ---- criterion 1: gradients -----------------------------------------------------

Check criterion_gradients() {
  Check ck;
  vtc::Rng rng(101);

  {
    vtc::Tensor a = rand_leaf(rng, {6}), b = rand_leaf(rng, {6});
    fd_check([&] { return vtc::sum(vtc::sub(vtc::add(a, vtc::scale(b, 0.7f)), vtc::mul(a, b))); },
             {a, b}, 1e-3, -1, ck, "add/sub/mul/scale");
  }
  {
    vtc::Tensor a = rand_leaf(rng, {6}), b = rand_leaf(rng, {6});
    fd_check([&] { return vtc::sum(vtc::mul(vtc::sigmoid(a), vtc::tanh(b))); }, {a, b}, 1e-3, -1,
             ck, "sigmoid/tanh");
  }
  {
    vtc::Tensor a = rand_leaf(rng, {3, 4}), b = rand_leaf(rng, {4, 2});
    fd_check([&] { return vtc::sum(vtc::matmul(a, b)); }, {a, b}, 1e-3, -1, ck, "matmul");
  }
  {
    vtc::Tensor w = rand_leaf(rng, {4, 5}), v = rand_leaf(rng, {5}), u = rand_leaf(rng, {4});
    fd_check([&] { return vtc::sum(vtc::matvec(w, v)); }, {w, v}, 1e-3, -1, ck, "matvec");
    fd_check([&] { return vtc::sum(vtc::matvec(vtc::transpose(w), u)); }, {w, u}, 1e-3, -1, ck,
             "transpose");
    fd_check([&] { return vtc::sum(vtc::vecmat(u, w)); }, {u, w}, 1e-3, -1, ck, "vecmat");
  }
  {
    vtc::Tensor x = rand_leaf(rng, {5, 3}), k = rand_leaf(rng, {3, 3, 4}), b = rand_leaf(rng, {4});
    fd_check([&] { return vtc::sum(vtc::conv1d(x, k, b)); }, {x, k, b}, 1e-3, -1, ck, "conv1d");
  }
  {
    vtc::Tensor v = rand_leaf(rng, {6}, -3.0, 3.0), w = rand_leaf(rng, {6});
    fd_check([&] { return vtc::sum(vtc::mul(vtc::softmax(v), w)); }, {v, w}, 1e-3, -1, ck,
             "softmax");
  }
  {
    vtc::Tensor v = rand_leaf(rng, {5}), u = rand_leaf(rng, {5});
    fd_check([&] { return vtc::sum(vtc::mul(vtc::l2_normalize(v), u)); }, {v, u}, 1e-3, -1, ck,
             "l2_normalize");
  }
  {
    vtc::Tensor logits = rand_leaf(rng, {7}, -2.0, 2.0);
    fd_check([&] { return vtc::cross_entropy(logits, 3); }, {logits}, 1e-3, -1, ck,
             "cross_entropy");
  }
  {
    vtc::Tensor a = rand_leaf(rng, {5}), b = rand_leaf(rng, {3}), w = rand_leaf(rng, {5});
    fd_check([&] { return vtc::sum(vtc::mul(vtc::slice(vtc::concat(a, b), 2, 7), w)); }, {a, b, w},
             1e-3, -1, ck, "concat/slice");
  }
  {
    vtc::Tensor m = rand_leaf(rng, {4, 6}), g = rand_leaf(rng, {4, 3}), w = rand_leaf(rng, {6});
    fd_check([&] { return vtc::sum(vtc::mul(vtc::cols(m, 1, 4), g)); }, {m, g}, 1e-3, -1, ck,
             "cols");
    fd_check([&] { return vtc::sum(vtc::mul(vtc::row(m, 2), w)); }, {m, w}, 1e-3, -1, ck, "row");
  }
  {
    vtc::Tensor tbl = rand_leaf(rng, {5, 4}), g = rand_leaf(rng, {4, 4});
    const std::vector<int> ids = {0, 2, 2, 4};
    fd_check([&] { return vtc::sum(vtc::mul(vtc::lookup_rows(tbl, ids), g)); }, {tbl, g}, 1e-3,
             -1, ck, "lookup_rows");
  }
  {
    vtc::Tensor r0 = rand_leaf(rng, {4}), r1 = rand_leaf(rng, {4}), r2 = rand_leaf(rng, {4});
    vtc::Tensor g = rand_leaf(rng, {3, 4});
    fd_check([&] { return vtc::sum(vtc::mul(vtc::stack_rows({r0, r1, r2}), g)); }, {r0, r1, r2, g},
             1e-3, -1, ck, "stack_rows");
  }
  {
    vtc::Rng prng(7);
    vtc::LstmParams p = vtc::LstmParams::init(3, 2, prng);
    vtc::Tensor x = rand_leaf(rng, {3}), h0 = rand_leaf(rng, {2}), c0 = rand_leaf(rng, {2});
    fd_check(
        [&] {
          const vtc::LstmState st = vtc::lstm_step(p, x, {h0, c0});
          return vtc::sum(vtc::add(st.h, st.c));
        },
        {p.w_ih, p.w_hh, p.b, x, h0, c0}, 1e-3, -1, ck, "lstm_step");
  }

  // End to end, both fusion modes: the joint loss through embedding, both
  // reconstruction paths, detection, attention, and the word classifier.
  for (const bool visual : {false, true}) {
    vtc::SynthConfig sc;
    sc.sentences = 10;
    sc.vocab_target = 24;
    sc.d_v = 6;
    sc.noise = 0.05f;
    sc.seed = 41;
    Corpus c = make_corpus(sc, 1.0, 0.0, 99);
    vtc::ModelConfig mc = small_config(
        visual ? vtc::VisualMode::gated_bias : vtc::VisualMode::off, vtc::EncoderKind::both, 6);
    mc.d_x = 8;
    mc.h = 6;
    mc.d_q = 10;
    vtc::Rng mrng(5);
    vtc::VtcModel model(mc, c.vocab, c.beta, mrng);
    const std::vector<vtc::TrainSample> rows = vtc::make_train_samples(c.train, model);
    const vtc::TrainSample& s = rows[1];

    vtc::Tensor omega;
    if (visual) {
      const auto feat = c.features.get(s.video_id);
      omega = vtc::Tensor::of({int(feat.size())}, std::vector<float>(feat.begin(), feat.end()));
      omega.set_requires_grad(true);
    }
    std::vector<vtc::Tensor> params = model.parameters();
    if (visual) params.push_back(omega);
    fd_check(
        [&] {
          const vtc::ModelForward f = model.forward(s.ids, visual ? &omega : nullptr);
          return model.training_loss(f, s.true_pos, s.true_word, visual ? &omega : nullptr).total;
        },
        params, 1e-2, 3, ck, visual ? "pipeline-gated" : "pipeline-text");
  }
  return ck;
}

// ---- criterion 2: analytic invariants -------------------------------------------

Check criterion_invariants() {
  Check ck;
  vtc::Rng rng(202);
  vtc::NoGradGuard ng;

  // A zeroed video projection must reduce the gated distance to the plain
  // text distance: the bias term is normalize(0) = 0 elementwise.
  {
    vtc::DetectorConfig gc{6, 4, vtc::VisualMode::gated_bias};
    vtc::DetectorConfig tc{6, 0, vtc::VisualMode::off};
    vtc::Rng r1(55), r2(55);
    vtc::Detector gated(gc, r1), text(tc, r2);
    gated.visit_params([](const std::string& name, vtc::Tensor& p) {
      if (name == "W_v") std::fill(p.data(), p.data() + p.size(), 0.0f);
    });
    for (int trial = 0; trial < 20; ++trial) {
      const vtc::Tensor x = vtc::Tensor::of({5, 6}, rand_values(rng, 30));
      const vtc::Tensor xh = vtc::Tensor::of({5, 6}, rand_values(rng, 30));
      const vtc::Tensor om = vtc::Tensor::of({4}, rand_values(rng, 4));
      const vtc::Tensor sg = gated.scores(x, xh, &om);
      const vtc::Tensor st = text.scores(x, xh);
      for (int t = 0; t < 5; ++t)
        ck.expect(sg.values()[std::size_t(t)] == st.values()[std::size_t(t)],
                  "closed gate changed a detection score");
    }
  }

  // One-hot attention returns exactly the selected query row; arbitrary
  // weights stay inside the rows' convex hull; every tanh output is in (-1, 1).
  {
    vtc::CorrectorConfig cc;
    cc.d_x = 5;
    cc.d_q = 6;
    cc.d_v = 4;
    cc.beta_size = 4;
    cc.visual = true;
    vtc::Rng crng(66);
    vtc::Corrector cor(cc, crng);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 3 + int(rng.below(4));
      const vtc::Tensor xh = vtc::Tensor::of({n, 5}, rand_values(rng, std::size_t(n) * 5, -2, 2));
      const vtc::Tensor q = cor.encode_candidates(xh);
      for (std::size_t i = 0; i < q.size(); ++i)
        ck.expect(std::fabs(q.values()[i]) < 1.0f, "query row left (-1, 1)");

      const int pick = int(rng.below(std::uint64_t(n)));
      std::vector<float> onehot(static_cast<std::size_t>(n), 0.0f);
      onehot[std::size_t(pick)] = 1.0f;
      const vtc::Tensor u = cor.attend(vtc::Tensor::of({n}, onehot), q);
      for (int j = 0; j < 6; ++j)
        ck.expect(u.values()[std::size_t(j)] == q.values()[std::size_t(pick * 6 + j)],
                  "one-hot attention is not the selected row");

      const vtc::Tensor w = vtc::Tensor::of(
          {n}, vtctest::oracle_softmax(rand_values(rng, std::size_t(n), -2, 2)));
      const vtc::Tensor mix = cor.attend(w, q);
      for (int j = 0; j < 6; ++j) {
        float lo = 1.0f, hi = -1.0f;
        for (int t = 0; t < n; ++t) {
          lo = std::min(lo, q.values()[std::size_t(t * 6 + j)]);
          hi = std::max(hi, q.values()[std::size_t(t * 6 + j)]);
        }
        const float v = mix.values()[std::size_t(j)];
        ck.expect(v >= lo - 1e-5f && v <= hi + 1e-5f, "attention left the convex hull");
      }

      const vtc::Tensor uv = cor.encode_video(vtc::Tensor::of({4}, rand_values(rng, 4, -3, 3)));
      for (std::size_t i = 0; i < uv.size(); ++i)
        ck.expect(std::fabs(uv.values()[i]) < 1.0f, "video context left (-1, 1)");
    }
  }

  // Softmax rows are distributions even at extreme inputs.
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + int(rng.below(8));
    const vtc::Tensor v = vtc::Tensor::of({n}, rand_values(rng, std::size_t(n), -50, 50));
    const vtc::Tensor s = vtc::softmax(v);
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      sum += double(s.values()[i]);
      ck.expect(s.values()[i] >= 0.0f, "negative softmax weight");
    }
    ck.expect(std::fabs(sum - 1.0) < 1e-5, fmt("softmax sums to %.8f", sum));
  }

  // detect_k(d, k) is always a prefix of detect_k(d, k+1).
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + int(rng.below(7));
    std::vector<float> vals(static_cast<std::size_t>(n), 0.0f);
    for (float& x : vals) x = float(rng.below(4));  // force ties
    const vtc::Tensor d = vtc::Tensor::of({n}, vals);
    std::vector<int> prev = vtc::detect_k(d, 1);
    for (int k = 2; k <= n; ++k) {
      const std::vector<int> cur = vtc::detect_k(d, k);
      ck.expect(std::equal(prev.begin(), prev.end(), cur.begin()), "top-k is not nested");
      prev = cur;
    }
  }

  // Report-level orderings: needing the whole sentence right can only lower
  // a metric, and correcting requires detecting first.
  {
    vtc::Rng erng(77);
    std::vector<vtc::EvalSample> samples;
    for (int i = 0; i < 200; ++i) {
      vtc::EvalSample s;
      const int k = 1 + int(erng.below(3));
      s.n = k + 2 + int(erng.below(5));
      s.beta_size = 3 + int(erng.below(4));
      std::vector<int> order(std::size_t(s.n), 0);
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t j = order.size(); j > 1; --j)
        std::swap(order[j - 1], order[erng.below(j)]);
      s.true_positions.assign(order.begin(), order.begin() + k);
      std::sort(s.true_positions.begin(), s.true_positions.end());
      for (int j = 0; j < k; ++j) {
        s.true_words.push_back(int(erng.below(40)));
        s.true_beta.push_back(erng.below(4) == 0 ? -1 : int(erng.below(std::uint64_t(s.beta_size))));
      }
      for (int j = 0; j < k; ++j) {
        s.detected.push_back(order[std::size_t(k + j) % order.size()]);
        s.predicted_words.push_back(int(erng.below(40)));
      }
      s.pair_scores.assign(std::size_t(s.n) * std::size_t(s.beta_size), 0.0);
      for (double& x : s.pair_scores) x = double(erng.below(12));
      samples.push_back(std::move(s));
    }
    const vtc::EvalReport rep = vtc::multi_k_report(samples);
    ck.expect(rep.correction_accuracy <= rep.detection_accuracy + 1e-12,
              "correction beat detection");
    for (const vtc::KBucket& b : rep.per_k) {
      ck.expect(b.sb.detection_accuracy <= b.wb.detection_accuracy + 1e-12,
                "sentence-based detection beat word-based");
      ck.expect(b.sb.correction_accuracy <= b.wb.correction_accuracy + 1e-12,
                "sentence-based correction beat word-based");
      ck.expect(b.sb.correction_accuracy <= b.sb.detection_accuracy + 1e-12,
                "bucket correction beat detection");
    }
  }
  return ck;
}

// ---- criterion 3: oracle equivalence --------------------------------------------

Check criterion_oracles() {
  Check ck;
  vtc::Rng rng(303);
  vtc::NoGradGuard ng;

  // Gated convolution layer against a straight-line rerun of the same math.
  {
    vtc::EncoderConfig ec;
    ec.vocab_size = 9;
    ec.d_x = 4;
    ec.h = 3;
    ec.m = 3;
    ec.depth = 2;
    ec.n_max = 8;
    vtc::Rng erng(11);
    vtc::TextEncoder enc(ec, erng);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 2 + int(rng.below(6));
      const vtc::Tensor x = vtc::Tensor::of({n, 4}, rand_values(rng, std::size_t(n) * 4));
      const vtc::Tensor got = enc.glu_layer(x, 0);
      const std::vector<float> want = vtctest::oracle_glu_layer(
          x.values(), n, 4, enc.conv_layer(0).kernel.values(), 3, enc.conv_layer(0).bias.values());
      for (std::size_t i = 0; i < got.size(); ++i)
        ck.expect(got.values()[i] == want[i], "glu layer diverged from the oracle");
    }
  }

  // Detection scores, plain and gated, against scalar recomputation.
  for (const bool gated : {false, true}) {
    vtc::DetectorConfig dc{5, gated ? 3 : 0,
                           gated ? vtc::VisualMode::gated_bias : vtc::VisualMode::off};
    vtc::Rng drng(21);
    vtc::Detector det(dc, drng);
    std::vector<float> wd, wv, wg;
    det.visit_params([&](const std::string& name, vtc::Tensor& p) {
      if (name == "W_d") wd = p.values();
      if (name == "W_v") wv = p.values();
      if (name == "W_g") wg = p.values();
    });
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 2 + int(rng.below(5));
      const vtc::Tensor x = vtc::Tensor::of({n, 5}, rand_values(rng, std::size_t(n) * 5));
      const vtc::Tensor xh = vtc::Tensor::of({n, 5}, rand_values(rng, std::size_t(n) * 5));
      const std::vector<float> om = rand_values(rng, 3);
      const vtc::Tensor omega = vtc::Tensor::of({3}, om);
      const vtc::Tensor got = det.scores(x, xh, gated ? &omega : nullptr);

      std::vector<float> vt;
      if (gated) vt = vtctest::oracle_l2_normalize(vtctest::oracle_matvec(wv, 5, 3, om));
      for (int t = 0; t < n; ++t) {
        const std::vector<float> xt(x.values().begin() + t * 5, x.values().begin() + t * 5 + 5);
        const std::vector<float> rt(xh.values().begin() + t * 5, xh.values().begin() + t * 5 + 5);
        const std::vector<float> nx = vtctest::oracle_l2_normalize(xt);
        const std::vector<float> nr = vtctest::oracle_l2_normalize(rt);
        std::vector<float> base(5, 0.0f);
        for (int i = 0; i < 5; ++i) base[std::size_t(i)] = nr[std::size_t(i)] * nx[std::size_t(i)];
        if (gated) {
          const std::vector<float> gate = vtctest::oracle_matvec(wg, 5, 5, xt);
          for (int i = 0; i < 5; ++i)
            base[std::size_t(i)] += vt[std::size_t(i)] * vtctest::oracle_sigmoid(gate[std::size_t(i)]);
        }
        float score = 0.0f;
        for (int i = 0; i < 5; ++i) score += base[std::size_t(i)] * wd[std::size_t(i)];
        ck.expect(got.values()[std::size_t(t)] == score, "detection score diverged from oracle");
      }
    }
  }

  // The cached two-sweep fragment reconstruction against a from-scratch rerun
  // of every prefix and suffix.
  {
    vtc::EncoderConfig ec;
    ec.vocab_size = 9;
    ec.d_x = 4;
    ec.h = 3;
    ec.m = 3;
    ec.depth = 1;
    ec.n_max = 9;
    vtc::Rng erng(31);
    vtc::TextEncoder enc(ec, erng);
    vtctest::OracleLstm left{enc.left_lstm().w_ih.values(), enc.left_lstm().w_hh.values(),
                             enc.left_lstm().b.values(), 4, 3};
    vtctest::OracleLstm right{enc.right_lstm().w_ih.values(), enc.right_lstm().w_hh.values(),
                              enc.right_lstm().b.values(), 4, 3};
    const std::vector<float> wc = enc.w_c().values();
    for (int trial = 0; trial < 12; ++trial) {
      const int n = 2 + int(rng.below(8));
      const vtc::Tensor x = vtc::Tensor::of({n, 4}, rand_values(rng, std::size_t(n) * 4));
      const vtc::Tensor got = enc.reconstruct_recurrent(x);
      for (int t = 0; t < n; ++t) {
        std::vector<float> hl(3, 0.0f), cl(3, 0.0f), hr(3, 0.0f), cr(3, 0.0f);
        for (int s = 0; s < t; ++s) {
          const std::vector<float> xs(x.values().begin() + s * 4, x.values().begin() + s * 4 + 4);
          left.step(xs, hl, cl);
        }
        for (int s = n - 1; s > t; --s) {
          const std::vector<float> xs(x.values().begin() + s * 4, x.values().begin() + s * 4 + 4);
          right.step(xs, hr, cr);
        }
        std::vector<float> cat(6, 0.0f);
        std::copy(hl.begin(), hl.end(), cat.begin());
        std::copy(hr.begin(), hr.end(), cat.begin() + 3);
        const std::vector<float> want = vtctest::oracle_matvec(wc, 4, 6, cat);
        for (int i = 0; i < 4; ++i)
          ck.expect(got.values()[std::size_t(t * 4 + i)] == want[std::size_t(i)],
                    "fragment sweep diverged from per-position rerun");
      }
    }
  }

  // Average precision against a rank-counting oracle on small tables.
  {
    const std::vector<double> pool = {-2, -1, -0.5, 0, 0.25, 0.5, 1, 1.5, 2, 3, 4, 5};
    for (int trial = 0; trial < 300; ++trial) {
      const int rows = 1 + int(rng.below(5));
      const int cols = 1 + int(rng.below(6));
      std::vector<double> scores(std::size_t(rows) * std::size_t(cols), 0.0);
      for (double& s : scores) s = pool[rng.below(pool.size())];
      const int total = rows * cols;
      const int nrel = 1 + int(rng.below(std::uint64_t(std::min(4, total))));
      std::set<int> flat;
      while (int(flat.size()) < nrel) flat.insert(int(rng.below(std::uint64_t(total))));
      std::vector<std::pair<int, int>> relevant;
      for (int f : flat) relevant.push_back({f / cols, f % cols});

      const double got = vtc::average_precision(scores, rows, cols, relevant);

      // Oracle: rank = 1 + count of strictly better or earlier-equal cells;
      // precision terms are summed in ascending rank order.
      std::vector<std::pair<long long, long long>> terms;  // (rank, hits at or above)
      for (const auto& [r, c] : relevant) {
        const double s = scores[std::size_t(r) * std::size_t(cols) + std::size_t(c)];
        const long long me = (long long)r * cols + c;
        long long rank = 1, at_or_above = 0;
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) {
            const double o = scores[std::size_t(i) * std::size_t(cols) + std::size_t(j)];
            const long long other = (long long)i * cols + j;
            const bool better = o > s || (o == s && other < me);
            if (better) ++rank;
            if (flat.count(int(other)) && (better || other == me)) ++at_or_above;
          }
        terms.push_back({rank, at_or_above});
      }
      std::sort(terms.begin(), terms.end());
      double want = 0.0;
      for (const auto& [rank, hits] : terms) want += double(hits) / double(rank);
      want /= double(relevant.size());
      ck.expect(got == want, fmt("average precision %.17g vs oracle %.17g", got, want));
    }
  }

  // detect_k against a stable sort on (score desc, index asc).
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + int(rng.below(9));
    std::vector<float> vals(static_cast<std::size_t>(n), 0.0f);
    for (float& x : vals) x = float(rng.below(8)) / 2.0f;
    const vtc::Tensor d = vtc::Tensor::of({n}, vals);
    std::vector<int> order(static_cast<std::size_t>(n), 0);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return vals[std::size_t(a)] > vals[std::size_t(b)]; });
    for (int k = 1; k <= n; ++k) {
      const std::vector<int> got = vtc::detect_k(d, k);
      ck.expect(std::equal(got.begin(), got.end(), order.begin()),
                "detect_k disagreed with the sorting oracle");
    }
  }
  return ck;
}

// ---- criterion 4: overfit -------------------------------------------------------

Check criterion_overfit(std::string& detail) {
  Check ck;
  vtc::SynthConfig sc;
  sc.sentences = 200;
  sc.vocab_target = 120;
  sc.groups = 2;
  sc.subjects_per_group = 2;  // 4 scenes
  sc.d_v = 16;
  sc.noise = 0.05f;
  sc.seed = 13;
  Corpus c = make_corpus(sc, 1.0, 0.0, 131);

  vtc::ModelConfig mc = small_config(vtc::VisualMode::gated_bias, vtc::EncoderKind::both, 16);
  mc.d_x = 16;
  mc.h = 12;
  mc.d_q = 20;
  vtc::Rng rng(3);
  vtc::VtcModel model(mc, c.vocab, c.beta, rng);
  const std::vector<vtc::TrainSample> rows = vtc::make_train_samples(c.train, model);

  vtc::TrainOptions to;
  to.epochs = 500;
  to.batch = 8;
  to.lr = 2e-3f;
  to.patience = 40;
  to.seed = 7;
  const vtc::TrainResult r = vtc::train_model(model, rows, rows, &c.features, to);

  const auto [det, cor] = vtc::evaluate_samples(model, rows, &c.features);
  detail = fmt("train detection %.3f, correction %.3f after %zu epochs on %zu samples", det, cor,
               r.log.size(), rows.size());
  ck.expect(det >= 0.95, "detection below 0.95");
  ck.expect(cor >= 0.90, "correction below 0.90");
  return ck;
}

// ---- criterion 5: ablation ordering ---------------------------------------------

struct AblationScores {
  double det = 0.0;
  double cor = 0.0;
};

AblationScores train_and_eval(const Corpus& c, const std::vector<vtc::TrainSample>& train_rows,
                              const std::vector<vtc::TrainSample>& val_rows,
                              const std::vector<vtc::TrainSample>& test_rows,
                              vtc::VisualMode mode, vtc::EncoderKind enc,
                              unsigned long long seed) {
  vtc::ModelConfig mc = small_config(mode, enc, 8);
  vtc::Rng rng(seed);
  vtc::VtcModel model(mc, c.vocab, c.beta, rng);

  vtc::TrainOptions to;
  to.epochs = 60;
  to.batch = 8;
  to.lr = 2e-3f;
  to.patience = 12;
  to.seed = seed + 1000;
  vtc::train_model(model, train_rows, val_rows, &c.features, to);
  const auto [det, cor] = vtc::evaluate_samples(model, test_rows, &c.features);
  return {det, cor};
}

Check criterion_ablation(std::string& detail) {
  Check ck;
  vtc::SynthConfig sc;
  sc.sentences = 200;
  sc.vocab_target = 60;
  sc.groups = 2;
  sc.subjects_per_group = 2;
  sc.d_v = 8;
  sc.noise = 0.05f;
  sc.seed = 71;
  Corpus c = make_corpus(sc, 0.70, 0.15, 171);

  // Rows depend only on the shared vocabulary, so build them once.
  vtc::ModelConfig ref_cfg = small_config(vtc::VisualMode::off, vtc::EncoderKind::both, 8);
  vtc::Rng ref_rng(1);
  vtc::VtcModel ref(ref_cfg, c.vocab, c.beta, ref_rng);
  const std::vector<vtc::TrainSample> train_rows = vtc::make_train_samples(c.train, ref);
  const std::vector<vtc::TrainSample> val_rows = vtc::make_train_samples(c.val, ref);
  const std::vector<vtc::TrainSample> test_rows = vtc::make_train_samples(c.test, ref);

  const std::vector<unsigned long long> seeds = {11, 12, 13, 14, 15};
  AblationScores gated, text, concat, conv, lstm;
  const auto accumulate = [&](AblationScores& acc, vtc::VisualMode m, vtc::EncoderKind e,
                              unsigned long long s) {
    const AblationScores one = train_and_eval(c, train_rows, val_rows, test_rows, m, e, s);
    acc.det += one.det / double(seeds.size());
    acc.cor += one.cor / double(seeds.size());
  };
  for (const unsigned long long s : seeds) {
    accumulate(gated, vtc::VisualMode::gated_bias, vtc::EncoderKind::both, s);
    accumulate(text, vtc::VisualMode::off, vtc::EncoderKind::both, s);
    accumulate(concat, vtc::VisualMode::concat, vtc::EncoderKind::both, s);
    accumulate(conv, vtc::VisualMode::off, vtc::EncoderKind::conv_only, s);
    accumulate(lstm, vtc::VisualMode::off, vtc::EncoderKind::lstm_only, s);
  }

  detail = fmt(
      "correction gated %.3f / concat %.3f / text %.3f; detection both %.3f / conv %.3f / lstm %.3f",
      gated.cor, concat.cor, text.cor, text.det, conv.det, lstm.det);
  ck.expect(gated.cor >= text.cor + 0.10, "video gating gained under 10 points over text");
  ck.expect(gated.cor >= concat.cor - 1e-9, "gating lost to plain concatenation");
  ck.expect(text.det >= std::max(conv.det, lstm.det) - 1e-9,
            "fused reconstruction lost to a single path");
  return ck;
}

// ---- criterion 6: chance floors -------------------------------------------------

Check criterion_random_floor(std::string& detail) {
  Check ck;
  vtc::SynthConfig sc;
  sc.sentences = 100;
  sc.vocab_target = 60;
  sc.d_v = 8;
  sc.noise = 0.05f;
  sc.seed = 23;
  Corpus c = make_corpus(sc, 0.5, 0.0, 231);

  vtc::Rng mrng(2);
  vtc::VtcModel model(small_config(vtc::VisualMode::off, vtc::EncoderKind::both, 8), c.vocab,
                      c.beta, mrng);

  double exp_det = 0.0, exp_pair = 0.0, var_det = 0.0, var_pair = 0.0;
  for (const vtc::VtcSample& s : c.test) {
    const double pd = 1.0 / double(s.tokens.size());
    const double pp = pd / double(c.beta.size());
    exp_det += pd;
    exp_pair += pp;
    var_det += pd * (1.0 - pd);
    var_pair += pp * (1.0 - pp);
  }
  const int repeats = 500;
  const double words = double(c.test.size()) * repeats;
  exp_det /= double(c.test.size());
  exp_pair /= double(c.test.size());
  const double sd_det = std::sqrt(var_det * repeats) / words;
  const double sd_pair = std::sqrt(var_pair * repeats) / words;

  vtc::Rng rng(7);
  std::vector<vtc::EvalSample> pool;
  pool.reserve(std::size_t(words));
  for (int rep = 0; rep < repeats; ++rep) {
    std::vector<vtc::EvalSample> batch =
        vtc::run_inference_stub(model, c.test, vtc::StubKind::random_guess, rng);
    pool.insert(pool.end(), std::make_move_iterator(batch.begin()),
                std::make_move_iterator(batch.end()));
  }
  const vtc::EvalReport rep = vtc::multi_k_report(pool);

  detail = fmt("detection %.4f vs 1/N mean %.4f; pair %.5f vs floor %.5f (4 sigma %.5f)",
               rep.detection_accuracy, exp_det, rep.correction_accuracy, exp_pair, 4 * sd_pair);
  ck.expect(std::fabs(rep.detection_accuracy - exp_det) < 0.01,
            "random detection left the 1% band");
  ck.expect(std::fabs(rep.detection_accuracy - exp_det) < 4 * sd_det + 1e-9,
            "random detection left its Monte Carlo band");
  ck.expect(std::fabs(rep.correction_accuracy - exp_pair) < 4 * sd_pair + 1e-9,
            "random pair guess left its Monte Carlo band");

  vtc::Rng orng(8);
  const vtc::EvalReport oracle =
      vtc::multi_k_report(vtc::run_inference_stub(model, c.test, vtc::StubKind::oracle, orng));
  ck.expect(oracle.detection_accuracy == 1.0 && oracle.correction_accuracy == 1.0 &&
                oracle.map == 1.0,
            "oracle stub is not perfect");
  return ck;
}

// ---- criterion 7: corruption statistics -----------------------------------------

Check criterion_corruption_stats(std::string& detail) {
  Check ck;

  // Count-proportional sampling, tested against its own target distribution.
  double p_value = 0.0;
  {
    vtc::SynthConfig sc;
    sc.sentences = 400;
    sc.vocab_target = 120;
    sc.seed = 5;
    vtc::SynthCorpus synth = vtc::generate_synthetic(sc);
    auto [vocab, pos] = vtc::build_vocab_and_pos(synth.sentences);
    const int tag = pos.tag_id("NN");
    ck.expect(tag >= 0, "synthetic corpus lost its noun tag");
    const std::vector<int>& members = pos.members[std::size_t(tag)];
    const std::vector<long long>& counts = pos.member_counts[std::size_t(tag)];
    const int exclude = members[0];

    std::map<int, long long> observed;
    const int draws = 100000;
    vtc::Rng rng(13);
    for (int i = 0; i < draws; ++i) {
      const int w = vtc::sample_pos_natural(rng, pos, tag, exclude);
      ck.expect(w >= 0 && w != exclude, "sampler returned the excluded word");
      ++observed[w];
    }
    double total_weight = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i)
      if (members[i] != exclude) total_weight += double(counts[i]);
    double chi2 = 0.0;
    int dof = -1;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (members[i] == exclude || counts[i] == 0) continue;
      const double expected = double(draws) * double(counts[i]) / total_weight;
      const auto it = observed.find(members[i]);
      const double obs = it == observed.end() ? 0.0 : double(it->second);
      chi2 += (obs - expected) * (obs - expected) / expected;
      ++dof;
    }
    ck.expect(dof >= 1, "degenerate noun pool");
    const boost::math::chi_squared dist(double(dof));
    p_value = 1.0 - boost::math::cdf(dist, chi2);
    ck.expect(p_value > 0.01, fmt("chi-square rejected the sampler (p=%.4f)", p_value));
  }

  // Replacement-to-occurrence ratios: frequency-proportional sampling keeps
  // them level across words, uniform placement skews them by 1/frequency.
  double var_pos = 0.0, var_rnd = 0.0;
  {
    vtc::SynthConfig sc;
    sc.sentences = 5000;
    sc.vocab_target = 120;
    sc.seed = 9;
    vtc::SynthCorpus synth = vtc::generate_synthetic(sc);
    auto [vocab, pos] = vtc::build_vocab_and_pos(synth.sentences);

    std::set<int> eligible;
    for (const char* tag : {"NN", "VBZ"}) {
      const int t = pos.tag_id(tag);
      if (t >= 0)
        eligible.insert(pos.members[std::size_t(t)].begin(), pos.members[std::size_t(t)].end());
    }

    const auto ratio_variance = [&](vtc::CorruptionStrategy strategy) {
      vtc::Rng rng(17);
      std::map<int, long long> incorrect;
      long long emitted = 0;
      for (const vtc::AnnotatedSentence& s : synth.sentences)
        for (const vtc::VtcSample& v : vtc::corrupt(s, strategy, 1, vocab, pos, rng)) {
          ++incorrect[vocab.at(v.corruptions[0].replacement)];
          ++emitted;
        }
      std::vector<double> ratios;
      ratios.reserve(eligible.size());
      for (const int w : eligible) {
        const auto it = incorrect.find(w);
        const double inc = it == incorrect.end() ? 0.0 : double(it->second);
        ratios.push_back(inc / double(vocab.count(w)));
      }
      double mean = 0.0;
      for (const double r : ratios) mean += r;
      mean /= double(ratios.size());
      double var = 0.0;
      for (const double r : ratios) var += (r - mean) * (r - mean);
      ck.expect(emitted >= 9000, "corruption yielded too few samples");
      return var / double(ratios.size());
    };
    var_pos = ratio_variance(vtc::CorruptionStrategy::pos_natural);
    var_rnd = ratio_variance(vtc::CorruptionStrategy::random_placement);
    ck.expect(var_pos < var_rnd, "tag-aware sampling did not level the appearance ratios");
  }
  detail = fmt("sampler chi-square p=%.3f; ratio variance %.5f (tag-aware) vs %.5f (uniform)",
               p_value, var_pos, var_rnd);
  return ck;
}

// ---- criterion 8: determinism ---------------------------------------------------

Check criterion_determinism(std::string& detail) {
  Check ck;
  vtc::SynthConfig sc;
  sc.sentences = 40;
  sc.vocab_target = 40;
  sc.d_v = 8;
  sc.noise = 0.05f;
  sc.seed = 31;
  Corpus c = make_corpus(sc, 0.7, 0.15, 311);

  const auto run = [&](const std::filesystem::path& ck_path) {
    vtc::Rng rng(7);
    vtc::VtcModel model(small_config(vtc::VisualMode::gated_bias, vtc::EncoderKind::both, 8),
                        c.vocab, c.beta, rng);
    const std::vector<vtc::TrainSample> train_rows = vtc::make_train_samples(c.train, model);
    const std::vector<vtc::TrainSample> val_rows = vtc::make_train_samples(c.val, model);
    vtc::TrainOptions to;
    to.epochs = 6;
    to.seed = 9;
    vtc::train_model(model, train_rows, val_rows, &c.features, to);
    model.save(ck_path.string());
    const vtc::EvalReport rep = vtc::multi_k_report(vtc::run_inference(model, c.test, &c.features));
    return std::make_pair(rep.to_json().dump(), rep.to_text());
  };

  const auto tmp = std::filesystem::temp_directory_path();
  const auto p1 = tmp / "vtc_accept_run1.vtck";
  const auto p2 = tmp / "vtc_accept_run2.vtck";
  const auto [json1, text1] = run(p1);
  const auto [json2, text2] = run(p2);

  const auto read_all = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const std::string b1 = read_all(p1), b2 = read_all(p2);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);

  ck.expect(!b1.empty(), "checkpoint came out empty");
  ck.expect(b1 == b2, "two identically seeded runs wrote different checkpoints");
  ck.expect(json1 == json2, "two identically seeded runs wrote different reports");
  ck.expect(text1 == text2, "two identically seeded runs printed different tables");
  detail = fmt("checkpoints %zu bytes each, reports %zu bytes, byte-identical across runs",
               b1.size(), json1.size());
  return ck;
}

}  // namespace

int main() {
  int failures = 0;
  const auto run = [&](int idx, const char* name, double cap_s,
                       const std::function<Check(std::string&)>& fn) {
    const auto t0 = Clock::now();
    std::string detail;
    Check ck;
    try {
      ck = fn(detail);
    } catch (const std::exception& e) {
      ck.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    bool pass = ck.pass();
    std::string line = detail;
    if (!ck.pass()) {
      line = ck.first + (detail.empty() ? "" : "; " + detail);
    } else if (cap_s > 0.0 && secs > cap_s) {
      pass = false;
      line = fmt("finished but took %.1fs, over the %.0fs budget", secs, cap_s);
    }
    if (line.empty()) line = fmt("%lld checks", ck.checked);
    report(idx, name, pass, line, secs);
    if (!pass) ++failures;
  };

  run(1, "gradient suite", 120.0, [](std::string& d) {
    Check ck = criterion_gradients();
    d = fmt("%lld finite-difference coordinates agree", ck.checked);
    return ck;
  });
  run(2, "analytic invariants", 60.0, [](std::string& d) {
    Check ck = criterion_invariants();
    d = fmt("%lld invariant checks hold", ck.checked);
    return ck;
  });
  run(3, "oracle equivalence", 0.0, [](std::string& d) {
    Check ck = criterion_oracles();
    d = fmt("%lld exact comparisons match", ck.checked);
    return ck;
  });
  run(4, "overfit", 600.0, [](std::string& d) { return criterion_overfit(d); });
  run(5, "ablation ordering", 0.0, [](std::string& d) { return criterion_ablation(d); });
  run(6, "chance floors", 0.0, [](std::string& d) { return criterion_random_floor(d); });
  run(7, "corruption statistics", 0.0, [](std::string& d) { return criterion_corruption_stats(d); });
  run(8, "determinism", 0.0, [](std::string& d) { return criterion_determinism(d); });

  if (failures == 0)
    std::printf("acceptance: all 8 criteria pass\n");
  else
    std::printf("acceptance: %d criteria FAILED\n", failures);
  return failures;
}
