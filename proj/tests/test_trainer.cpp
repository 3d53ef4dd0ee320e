#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "diamt/metrics_log.hpp"
#include "diamt/trainer.hpp"

using namespace diamt;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  ParallelCorpus train, validation, test;
  SubwordVocab vocab;
  ModelConfig mcfg;
  TrainerData data;
};

Fixture make_fixture(std::uint64_t seed) {
  std::vector<VarietySpec> tree(3);
  tree[0].id = "STD";
  tree[1].id = "D1";
  tree[1].parent = "STD";
  tree[1].lex_sub_rate = 0.4;
  tree[1].ortho_map = {{'a', 'e'}};
  tree[2].id = "D2";
  tree[2].parent = "STD";
  tree[2].lex_sub_rate = 0.2;
  ParallelCorpus corpus = gen_continuum(tree, 72, seed);
  CorpusSplit split = split_corpus(corpus, 0.8, 0.1, seed);

  std::vector<std::string> texts;
  for (const auto& row : split.train.sentences)
    for (const auto& s : row) texts.push_back(s);
  Fixture f;
  f.vocab = train_wordpiece(texts, 150);
  f.train = std::move(split.train);
  f.validation = std::move(split.validation);
  f.test = std::move(split.test);
  f.mcfg.d_model = 16;
  f.mcfg.n_layers = 2;
  f.mcfg.n_heads = 2;
  f.mcfg.d_ff = 32;
  f.mcfg.vocab_size = f.vocab.size();
  f.mcfg.max_seq_len = 128;
  f.mcfg.seed = seed;
  f.data = prepare_trainer_data(f.vocab, f.train, f.validation, true,
                                f.mcfg.max_seq_len);
  return f;
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.grad_accum_steps = 1;
  cfg.lr = 1e-3;
  cfg.max_steps = 6;
  cfg.eval_every = 2;
  cfg.seed = seed;
  cfg.max_val_examples = 24;
  cfg.probe_max_per_class = 200;
  cfg.probe_epochs = 3;
  return cfg;
}

std::string fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("encode_example masks the target span only") {
  SubwordVocab vocab;
  for (const std::string p :
       {"[PAD]", "[UNK]", "[BOS]", "[EOS]", "a", "b", "c", "##a", "##b", "##c"})
    vocab.pieces.push_back(p);
  for (int i = 0; i < vocab.size(); ++i)
    vocab.piece_to_id[vocab.pieces[i]] = i;

  PromptExample ex;
  ex.prompt_text = "a b";
  ex.target_text = "c c";
  auto enc = encode_example(vocab, ex, 32);
  REQUIRE(enc.has_value());
  // [BOS] a b c c [EOS]: input = first 5, target = last 5.
  CHECK(enc->input == std::vector<int>{2, 4, 5, 6, 6});
  CHECK(enc->target == std::vector<int>{4, 5, 6, 6, 3});
  CHECK(enc->mask == std::vector<std::uint8_t>{0, 0, 1, 1, 1});

  // Truncation that erases the target returns nothing.
  CHECK(!encode_example(vocab, ex, 2).has_value());
}

TEST_CASE("gradient accumulation 4x1 matches 1x4") {
  Fixture f = make_fixture(5);
  TrainConfig a = quick_config(5);
  a.batch_size = 4;
  a.grad_accum_steps = 1;
  a.max_steps = 2;
  TrainConfig b = a;
  b.batch_size = 1;
  b.grad_accum_steps = 4;

  Model ma(f.mcfg), mb(f.mcfg);
  run_sft(ma, f.data, a, fresh_dir("diamt_accum_a"));
  run_sft(mb, f.data, b, fresh_dir("diamt_accum_b"));
  // Identical micro-batch stream and normalization -> identical updates.
  CHECK(ma.checksum() == mb.checksum());
}

TEST_CASE("lambda = 0 decouple is bit-identical to sft") {
  Fixture f = make_fixture(7);
  TrainConfig cfg = quick_config(7);
  cfg.max_steps = 5;
  cfg.n_update = 2;

  Model sft_model(f.mcfg), dec_model(f.mcfg);
  TrainResult rs = run_sft(sft_model, f.data, cfg, fresh_dir("diamt_l0_sft"));
  TrainConfig dcfg = cfg;
  dcfg.lambda = 0.0;
  TrainResult rd =
      run_decouple(dec_model, f.data, dcfg, fresh_dir("diamt_l0_dec"));
  CHECK(sft_model.checksum() == dec_model.checksum());
  CHECK(rs.steps_run == rd.steps_run);
}

TEST_CASE("smoke: training reduces loss and logs evals") {
  Fixture f = make_fixture(11);
  TrainConfig cfg = quick_config(11);
  cfg.max_steps = 60;
  cfg.eval_every = 20;
  Model m(f.mcfg);
  const std::string dir = fresh_dir("diamt_smoke");
  TrainResult r = run_sft(m, f.data, cfg, dir);
  REQUIRE(r.log.rows.size() >= 3);
  CHECK(r.log.rows.front().step == 0);
  CHECK(r.log.rows.back().validation_loss < r.log.rows.front().validation_loss);
  CHECK(r.log.rows.back().lm_loss < r.log.rows.front().lm_loss);
  for (std::size_t i = 1; i < r.log.rows.size(); ++i)
    CHECK(r.log.rows[i].step > r.log.rows[i - 1].step);
  CHECK(fs::exists(r.final_checkpoint));
  CHECK(fs::exists(fs::path(dir) / "metrics.csv"));

  // Round trip of the on-disk log.
  MetricsLog back = MetricsLog::load_csv((fs::path(dir) / "metrics.csv").string());
  REQUIRE(back.rows.size() == r.log.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    CHECK(back.rows[i].step == r.log.rows[i].step);
    CHECK(back.rows[i].lm_loss == r.log.rows[i].lm_loss);
    CHECK(back.rows[i].validation_loss == r.log.rows[i].validation_loss);
  }
}

TEST_CASE("early stopping fires on a stagnant validation loss") {
  Fixture f = make_fixture(13);
  TrainConfig cfg = quick_config(13);
  cfg.max_steps = 10000;
  cfg.eval_every = 1000;
  cfg.early_stop_threshold = 100.0;  // nothing can improve by this much
  cfg.early_stop_patience = 2;
  cfg.lr = 1e-4;
  Model m(f.mcfg);
  TrainResult r = run_sft(m, f.data, cfg, fresh_dir("diamt_earlystop"));
  CHECK(r.early_stopped);
  // Baseline epoch plus 2 stagnant ones; an epoch is ~n_train / 4 steps.
  const long steps_per_epoch =
      (static_cast<long>(f.data.train.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  CHECK(r.steps_run <= 3 * steps_per_epoch + 1);
  CHECK(r.steps_run < cfg.max_steps);
}

TEST_CASE("decouple run refreshes and freezes the projector") {
  Fixture f = make_fixture(17);
  TrainConfig cfg = quick_config(17);
  cfg.mode = "decouple";
  cfg.lambda = 0.05;
  cfg.n_update = 3;
  cfg.max_steps = 6;
  Model m(f.mcfg);
  const std::string dir = fresh_dir("diamt_dec");
  TrainResult r = run_training(m, f.data, cfg, dir);
  CHECK(fs::exists(fs::path(dir) / "projector_step000000.bin"));
  CHECK(fs::exists(fs::path(dir) / "projector_step000003.bin"));
  Projector p0 = load_projector((fs::path(dir) / "projector_step000000.bin").string());
  Projector p3 = load_projector((fs::path(dir) / "projector_step000003.bin").string());
  CHECK((p0.P - p3.P).cwiseAbs().maxCoeff() > 0.0);  // model moved, probe re-fit
  // Penalty metric populated and nonnegative.
  bool saw_penalty = false;
  for (const auto& row : r.log.rows)
    if (row.step > 0) {
      CHECK(row.decouple_loss >= 0.0);
      saw_penalty = saw_penalty || row.decouple_loss > 0.0;
    }
  CHECK(saw_penalty);
}

TEST_CASE("kill and resume reproduces the uninterrupted run exactly") {
  Fixture f = make_fixture(19);
  TrainConfig cfg = quick_config(19);
  cfg.max_steps = 6;
  cfg.eval_every = 2;

  Model full(f.mcfg);
  const std::string dir_full = fresh_dir("diamt_resume_full");
  TrainResult rf = run_sft(full, f.data, cfg, dir_full);

  // "Kill" at step 4, then resume to 6 in the same directory.
  Model part(f.mcfg);
  TrainConfig half = cfg;
  half.max_steps = 4;
  const std::string dir_part = fresh_dir("diamt_resume_part");
  run_sft(part, f.data, half, dir_part);
  Model resumed(f.mcfg);  // parameters are overwritten by the resume file
  TrainResult rr = run_training(
      resumed, f.data, cfg, dir_part,
      (fs::path(dir_part) / "resume_latest.bin").string());

  CHECK(resumed.checksum() == full.checksum());
  REQUIRE(rr.log.rows.size() == rf.log.rows.size());
  for (std::size_t i = 0; i < rr.log.rows.size(); ++i) {
    CHECK(rr.log.rows[i].step == rf.log.rows[i].step);
    CHECK(rr.log.rows[i].lm_loss == rf.log.rows[i].lm_loss);
    CHECK(rr.log.rows[i].decouple_loss == rf.log.rows[i].decouple_loss);
    CHECK(rr.log.rows[i].validation_loss == rf.log.rows[i].validation_loss);
  }
}

TEST_CASE("evaluate_generation on an untrained model stays near the floor") {
  Fixture f = make_fixture(23);
  Model m(f.mcfg);
  const auto prompts = build_prompts(f.test, true);
  GenerationEval eval = evaluate_generation(m, f.vocab, prompts, "STD", 12);
  CHECK(!eval.per_variety.empty());
  for (const auto& [variety, score] : eval.per_variety) {
    CHECK(score >= 0.0);
    CHECK(score < 40.0);
  }
}

TEST_CASE("analyze_checkpoints emits per-variety rows") {
  Fixture f = make_fixture(29);
  TrainConfig cfg = quick_config(29);
  cfg.max_steps = 4;
  cfg.eval_every = 2;
  Model m(f.mcfg);
  const std::string dir = fresh_dir("diamt_analyze");
  TrainResult r = run_sft(m, f.data, cfg, dir);
  REQUIRE(r.log.rows.size() >= 2);

  std::vector<std::string> paths;
  std::vector<long> steps;
  for (const auto& row : {r.log.rows.front(), r.log.rows.back()}) {
    paths.push_back(row.checkpoint_path);
    steps.push_back(row.step);
  }
  const auto test_prompts = build_prompts(f.test, false);
  AnalyzeOptions opts;
  opts.probe_epochs = 3;
  opts.probe_max_per_class = 150;
  opts.seed = 29;
  AnalysisResult analysis = analyze_checkpoints(paths, steps, f.validation,
                                                test_prompts, f.vocab, opts);
  REQUIRE(analysis.rows.size() == 2);
  for (const auto& row : analysis.rows) {
    CHECK(row.code_bits.size() == 3);
    CHECK(row.ssa_vs_standard.at("STD") < 1e-4);  // arccos noise near 1.0
    CHECK(row.ssa_vs_standard.count("D1") == 1);
    CHECK(row.ssa_vs_standard.count("D2") == 1);
  }

  // Restart-averaged SSA stays within the valid range and remains
  // deterministic under a fixed seed.
  AnalyzeOptions avg = opts;
  avg.subspace_reps = 2;
  avg.probe_beta = 2.0;
  AnalysisResult a1 = analyze_checkpoints(paths, steps, f.validation,
                                          test_prompts, f.vocab, avg);
  AnalysisResult a2 = analyze_checkpoints(paths, steps, f.validation,
                                          test_prompts, f.vocab, avg);
  for (std::size_t i = 0; i < a1.rows.size(); ++i)
    for (const auto& [v, angle] : a1.rows[i].ssa_vs_standard) {
      CHECK(angle >= 0.0);
      CHECK(angle <= 90.0);
      CHECK(a2.rows[i].ssa_vs_standard.at(v) == doctest::Approx(angle));
    }

  CHECK_THROWS_AS(analyze_checkpoints({paths[0]}, {steps[0]}, f.validation,
                                      test_prompts, f.vocab, opts),
                  ConfigError);
  AnalyzeOptions bad = opts;
  bad.subspace_reps = 0;
  CHECK_THROWS_AS(
      analyze_checkpoints(paths, steps, f.validation, test_prompts, f.vocab, bad),
      ConfigError);
}

TEST_CASE("TrainConfig kv round trip and validation") {
  TrainConfig cfg;
  cfg.mode = "decouple";
  cfg.lambda = 0.01;
  cfg.n_update = 500;
  cfg.seed = 99;
  TrainConfig back = TrainConfig::from_kv(cfg.to_kv());
  CHECK(back.mode == "decouple");
  CHECK(back.lambda == doctest::Approx(0.01));
  CHECK(back.n_update == 500);
  CHECK(back.seed == 99);

  KVConfig bad;
  bad.set("mode", "finetune");
  CHECK_THROWS_AS(TrainConfig::from_kv(bad), ConfigError);
  KVConfig neg;
  neg.set("lambda", "-1");
  CHECK_THROWS_AS(TrainConfig::from_kv(neg), ConfigError);
}

TEST_CASE("MetricsLog rejects non-increasing steps") {
  MetricsLog log;
  MetricsRow a;
  a.step = 5;
  log.append(a);
  MetricsRow b;
  b.step = 5;
  CHECK_THROWS_AS(log.append(b), ConfigError);
}
