// Command-line front end: dataset generation, training, evaluation, and
// single-sentence prediction. A JSON config file seeds every option; a flag
// of the same name overrides the file.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vtc/vtc.hpp"

namespace {

using nlohmann::json;

struct RunConfig {
  // model
  int d_x = 64, h = 64, d_q = 128, m = 5, depth = 3, n_max = 40, d_v = 0;
  std::string visual = "off";
  std::string encoder = "both";
  // training
  int epochs = 50, batch = 8, patience = 10;
  float lr = 1e-3f, clip = -1.0f;
  unsigned long long seed = 1;
  std::string optimizer = "adam";
  // paths
  std::string train, val, test, features, checkpoint, report;
  // datagen
  std::string out = "data";
  std::string strategy = "pos-natural";
  int sentences = 200, vocab_target = 120, groups = 2, subjects_per_group = 2, k = 1;
  float noise = 0.1f;
  // predict / eval extras
  std::string sentence, feature_id, stub;
  bool json_output = false;
};

void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vtc::io_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw vtc::config_error("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw vtc::config_error("config file must hold a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const json& v = it.value();
      if (key == "d_x") c.d_x = v.get<int>();
      else if (key == "h") c.h = v.get<int>();
      else if (key == "d_q") c.d_q = v.get<int>();
      else if (key == "m") c.m = v.get<int>();
      else if (key == "depth") c.depth = v.get<int>();
      else if (key == "n_max") c.n_max = v.get<int>();
      else if (key == "d_v") c.d_v = v.get<int>();
      else if (key == "visual") c.visual = v.get<std::string>();
      else if (key == "encoder") c.encoder = v.get<std::string>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "batch") c.batch = v.get<int>();
      else if (key == "patience") c.patience = v.get<int>();
      else if (key == "lr") c.lr = v.get<float>();
      else if (key == "clip") c.clip = v.get<float>();
      else if (key == "seed") c.seed = v.get<unsigned long long>();
      else if (key == "optimizer") c.optimizer = v.get<std::string>();
      else if (key == "train") c.train = v.get<std::string>();
      else if (key == "val") c.val = v.get<std::string>();
      else if (key == "test") c.test = v.get<std::string>();
      else if (key == "features") c.features = v.get<std::string>();
      else if (key == "checkpoint") c.checkpoint = v.get<std::string>();
      else if (key == "report") c.report = v.get<std::string>();
      else if (key == "out") c.out = v.get<std::string>();
      else if (key == "strategy") c.strategy = v.get<std::string>();
      else if (key == "sentences") c.sentences = v.get<int>();
      else if (key == "vocab_target") c.vocab_target = v.get<int>();
      else if (key == "groups") c.groups = v.get<int>();
      else if (key == "subjects_per_group") c.subjects_per_group = v.get<int>();
      else if (key == "k") c.k = v.get<int>();
      else if (key == "noise") c.noise = v.get<float>();
      else if (key == "sentence") c.sentence = v.get<std::string>();
      else if (key == "feature_id") c.feature_id = v.get<std::string>();
      else if (key == "stub") c.stub = v.get<std::string>();
      else if (key == "json") c.json_output = v.get<bool>();
      else throw vtc::config_error("unknown config key: " + key);
    }
  } catch (const json::exception& e) {
    throw vtc::config_error("bad config value in " + path + ": " + e.what());
  }
}

vtc::ModelConfig model_config(const RunConfig& c) {
  vtc::ModelConfig mc;
  mc.d_x = c.d_x;
  mc.h = c.h;
  mc.d_q = c.d_q;
  mc.m = c.m;
  mc.depth = c.depth;
  mc.n_max = c.n_max;
  mc.d_v = c.d_v;
  mc.visual = vtc::parse_visual_mode(c.visual);
  mc.encoder = vtc::parse_encoder_kind(c.encoder);
  mc.validate();
  return mc;
}

int cmd_datagen(const RunConfig& c) {
  vtc::DatagenOptions opt;
  opt.strategy = vtc::parse_strategy(c.strategy);
  opt.k = c.k;
  opt.synth.sentences = c.sentences;
  opt.synth.vocab_target = c.vocab_target;
  opt.synth.groups = c.groups;
  opt.synth.subjects_per_group = c.subjects_per_group;
  opt.synth.d_v = c.d_v > 0 ? c.d_v : opt.synth.d_v;
  opt.synth.noise = c.noise;
  opt.synth.seed = c.seed;

  const vtc::DatagenSummary s = vtc::run_datagen(opt, c.out);
  std::printf("wrote %s: train %d, val %d, test %d samples", c.out.c_str(), s.train_samples,
              s.val_samples, s.test_samples);
  if (s.stats.skipped_empty_pool || s.stats.skipped_few_blanks)
    std::printf("  (skipped: %d uncoverable, %d with too few blanks)",
                s.stats.skipped_empty_pool, s.stats.skipped_few_blanks);
  std::printf("\n");
  return 0;
}

int cmd_train(const RunConfig& c) {
  if (c.train.empty()) throw vtc::config_error("train: a training corpus path is required");
  if (c.val.empty()) throw vtc::config_error("train: a validation corpus path is required");
  if (c.checkpoint.empty()) throw vtc::config_error("train: a checkpoint output path is required");
  const vtc::ModelConfig mc = model_config(c);

  vtc::TrainOptions to;
  to.epochs = c.epochs;
  to.batch = c.batch;
  to.lr = c.lr;
  to.optimizer = vtc::parse_optimizer(c.optimizer);
  to.clip = c.clip;
  to.patience = c.patience;
  to.seed = c.seed;
  to.validate();

  const std::vector<vtc::VtcSample> train = vtc::read_corpus(c.train);
  const std::vector<vtc::VtcSample> val = vtc::read_corpus(c.val);
  vtc::FeatureStore store;
  const vtc::FeatureStore* fs = nullptr;
  if (mc.uses_video()) {
    if (c.features.empty()) throw vtc::config_error("train: a visual model needs a feature store");
    store = vtc::FeatureStore::load(c.features);
    fs = &store;
  }

  vtc::Vocabulary vocab = vtc::build_model_vocab(train);
  std::vector<int> beta = vtc::build_beta(train, vocab);
  std::printf("vocabulary %d words, %d replacement candidates, %zu train / %zu val samples\n",
              vocab.size(), int(beta.size()), train.size(), val.size());

  vtc::Rng rng(c.seed);
  vtc::VtcModel model(mc, std::move(vocab), std::move(beta), rng);
  const std::vector<vtc::TrainSample> train_rows = vtc::make_train_samples(train, model);
  const std::vector<vtc::TrainSample> val_rows = vtc::make_train_samples(val, model);

  const vtc::TrainResult r = vtc::train_model(model, train_rows, val_rows, fs, to, &std::cout);
  model.save(c.checkpoint);
  std::printf("best epoch %d  val detection %.4f  val correction %.4f\nwrote %s\n", r.best_epoch,
              r.best_val_detection, r.best_val_correction, c.checkpoint.c_str());
  return 0;
}

int cmd_eval(const RunConfig& c) {
  if (c.checkpoint.empty()) throw vtc::config_error("eval: a checkpoint path is required");
  if (c.test.empty()) throw vtc::config_error("eval: a test corpus path is required");
  if (!c.stub.empty() && c.stub != "random" && c.stub != "oracle")
    throw vtc::config_error("eval: stub must be 'random' or 'oracle', got '" + c.stub + "'");

  const vtc::VtcModel model = vtc::VtcModel::load(c.checkpoint);
  const std::vector<vtc::VtcSample> corpus = vtc::read_corpus(c.test);

  std::vector<vtc::EvalSample> samples;
  if (!c.stub.empty()) {
    vtc::Rng rng(c.seed);
    const auto kind = c.stub == "oracle" ? vtc::StubKind::oracle : vtc::StubKind::random_guess;
    samples = vtc::run_inference_stub(model, corpus, kind, rng);
  } else {
    vtc::FeatureStore store;
    const vtc::FeatureStore* fs = nullptr;
    if (model.config().uses_video()) {
      if (c.features.empty()) throw vtc::config_error("eval: this checkpoint needs a feature store");
      store = vtc::FeatureStore::load(c.features);
      fs = &store;
    }
    samples = vtc::run_inference(model, corpus, fs);
  }

  const vtc::EvalReport rep = vtc::multi_k_report(samples);
  if (!c.report.empty()) {
    std::ofstream out(c.report, std::ios::trunc);
    if (!out) throw vtc::io_error("cannot write report: " + c.report);
    out << rep.to_json().dump(2) << '\n';
  }
  std::cout << rep.to_text();
  return 0;
}

int cmd_predict(const RunConfig& c) {
  if (c.checkpoint.empty()) throw vtc::config_error("predict: a checkpoint path is required");
  if (c.sentence.empty()) throw vtc::config_error("predict: a sentence is required");
  if (c.k < 1) throw vtc::config_error("predict: k must be >= 1");

  const vtc::VtcModel model = vtc::VtcModel::load(c.checkpoint);

  std::vector<std::string> tokens;
  {
    std::istringstream ss(c.sentence);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
  }
  bool any_unk = false;
  const std::vector<int> ids = model.tokens_to_ids(tokens, &any_unk);
  std::vector<std::string> unk_tokens;
  for (const std::string& t : tokens) {
    const int id = model.vocab().find(t);
    if (id < 0 || id == vtc::kPadIndex) unk_tokens.push_back(t);
  }

  vtc::Tensor omega;
  const vtc::Tensor* om = nullptr;
  if (model.config().uses_video()) {
    if (c.features.empty() || c.feature_id.empty())
      throw vtc::config_error("predict: this checkpoint needs a feature store and a feature id");
    const vtc::FeatureStore store = vtc::FeatureStore::load(c.features);
    const auto feat = store.get(c.feature_id);
    omega = vtc::Tensor::of({int(feat.size())},
                            std::vector<float>(feat.begin(), feat.end()));
    om = &omega;
  } else if (!c.feature_id.empty()) {
    std::cerr << "note: checkpoint is text-only; ignoring feature id '" << c.feature_id << "'\n";
  }

  const std::vector<vtc::Prediction> preds = model.infer(ids, om, c.k);

  if (c.json_output) {
    json out;
    out["predictions"] = json::array();
    for (const vtc::Prediction& p : preds)
      out["predictions"].push_back({{"position", p.position},
                                    {"current", tokens[std::size_t(p.position)]},
                                    {"word", model.vocab().word(p.word_id)},
                                    {"score", p.score}});
    out["unk_tokens"] = unk_tokens;
    std::cout << out.dump(2) << '\n';
  } else {
    if (any_unk) {
      std::printf("note: %zu token(s) outside the vocabulary were mapped to %s:", unk_tokens.size(),
                  vtc::kUnkWord);
      for (const std::string& t : unk_tokens) std::printf(" %s", t.c_str());
      std::printf("\n");
    }
    for (const vtc::Prediction& p : preds)
      std::printf("position %d  %s -> %s  score %.4f\n", p.position,
                  tokens[std::size_t(p.position)].c_str(),
                  model.vocab().word(p.word_id).c_str(), p.score);
  }
  return 0;
}

std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config") {
      if (i + 1 >= argc) throw vtc::config_error("--config needs a file path");
      return argv[i + 1];
    }
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty()) apply_config_file(cfg, config_path);
  } catch (const vtc::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vtc::io_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  }

  CLI::App app{"visual text correction: find the wrong word in a sentence and fix it"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help");  // frees -h for the state-width option
  std::string config_path_dummy;  // consumed by the pre-scan above

  const auto add_config = [&](CLI::App* sc) {
    sc->set_help_flag("--help", "print help");
    sc->add_option("--config", config_path_dummy, "JSON config file; flags override its values");
  };
  const auto add_model = [&](CLI::App* sc) {
    sc->add_option("--d_x", cfg.d_x, "word embedding width");
    sc->add_option("--h", cfg.h, "recurrent state width");
    sc->add_option("--d_q", cfg.d_q, "query width");
    sc->add_option("--m", cfg.m, "convolution window (odd)");
    sc->add_option("--depth", cfg.depth, "convolution stack depth");
    sc->add_option("--n_max", cfg.n_max, "longest admissible sentence");
    sc->add_option("--d_v", cfg.d_v, "video feature width");
    sc->add_option("--visual", cfg.visual, "video fusion: off, gated, concat");
    sc->add_option("--encoder", cfg.encoder, "reconstruction paths: conv, lstm, both");
  };

  CLI::App* dg = app.add_subcommand("datagen", "generate a synthetic corpus with corruptions");
  add_config(dg);
  dg->add_option("--out", cfg.out, "output directory");
  dg->add_option("--sentences", cfg.sentences, "sentences to generate");
  dg->add_option("--vocab_target", cfg.vocab_target, "approximate vocabulary size");
  dg->add_option("--groups", cfg.groups, "verb/object groups");
  dg->add_option("--subjects_per_group", cfg.subjects_per_group, "subjects per group");
  dg->add_option("--d_v", cfg.d_v, "video feature width");
  dg->add_option("--noise", cfg.noise, "feature noise level");
  dg->add_option("--seed", cfg.seed, "generator seed");
  dg->add_option("--strategy", cfg.strategy, "replacement sampling: pos-natural, random");
  dg->add_option("--k", cfg.k, "test-split corruptions per sentence (0 = every blank)");

  CLI::App* tr = app.add_subcommand("train", "train a model and write the best checkpoint");
  add_config(tr);
  add_model(tr);
  tr->add_option("--train", cfg.train, "training corpus (jsonl)");
  tr->add_option("--val", cfg.val, "validation corpus (jsonl)");
  tr->add_option("--features", cfg.features, "feature store (vtcf)");
  tr->add_option("--checkpoint", cfg.checkpoint, "checkpoint output path");
  tr->add_option("--epochs", cfg.epochs, "training epochs");
  tr->add_option("--batch", cfg.batch, "gradient accumulation group size");
  tr->add_option("--lr", cfg.lr, "learning rate");
  tr->add_option("--optimizer", cfg.optimizer, "sgd, sgd-momentum, adam");
  tr->add_option("--clip", cfg.clip, "gradient norm clip (negative = automatic)");
  tr->add_option("--patience", cfg.patience, "early stopping patience");
  tr->add_option("--seed", cfg.seed, "training seed");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint and emit a report");
  add_config(ev);
  ev->add_option("--checkpoint", cfg.checkpoint, "checkpoint to evaluate");
  ev->add_option("--test", cfg.test, "test corpus (jsonl)");
  ev->add_option("--features", cfg.features, "feature store (vtcf)");
  ev->add_option("--report", cfg.report, "report JSON output path");
  ev->add_option("--stub", cfg.stub, "bypass the model: random or oracle");
  ev->add_option("--seed", cfg.seed, "seed for the random stub");

  CLI::App* pr = app.add_subcommand("predict", "correct one sentence");
  add_config(pr);
  pr->add_option("--checkpoint", cfg.checkpoint, "checkpoint to load");
  pr->add_option("--sentence", cfg.sentence, "whitespace-tokenized sentence");
  pr->add_option("--features", cfg.features, "feature store (vtcf)");
  pr->add_option("--feature_id", cfg.feature_id, "video id in the feature store");
  pr->add_option("--k", cfg.k, "positions to report");
  pr->add_flag("--json", cfg.json_output, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (dg->parsed()) return cmd_datagen(cfg);
    if (tr->parsed()) return cmd_train(cfg);
    if (ev->parsed()) return cmd_eval(cfg);
    return cmd_predict(cfg);
  } catch (const vtc::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vtc::io_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const vtc::contract_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
