// Command-line front end: gen-corpus, train, probe, analyze, cluster,
// fertility, report. Every command reads a flat key=value config, writes its
// outputs under --out, and finishes with an atomically renamed manifest.json.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>

#include "diamt/cluster.hpp"
#include "diamt/corpus.hpp"
#include "diamt/geometry.hpp"
#include "diamt/kvconfig.hpp"
#include "diamt/metrics_log.hpp"
#include "diamt/report.hpp"
#include "diamt/stats.hpp"
#include "diamt/tokenizer.hpp"
#include "diamt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace diamt;

namespace {

constexpr const char* kVersion = "1.0.0";

struct CommandContext {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  bool resume = false;
  std::vector<std::string> inputs, outputs;
  std::chrono::steady_clock::time_point started =
      std::chrono::steady_clock::now();
};

// Output root: --out as given when absolute, otherwise under $WORKSPACE
// (default: current directory).
std::string resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p.string();
  const char* ws = std::getenv("WORKSPACE");
  return ((ws ? fs::path(ws) : fs::current_path()) / p).string();
}

KVConfig load_config(CommandContext& ctx) {
  ctx.inputs.push_back(ctx.config_path);
  if (ctx.command == "gen-corpus" && ctx.config_path == "default")
    return KVConfig::parse(default_continuum_config_text());
  return KVConfig::load(ctx.config_path);
}

std::uint64_t pick_seed(const CommandContext& ctx, const KVConfig& cfg) {
  if (ctx.seed_override) return *ctx.seed_override;
  return static_cast<std::uint64_t>(cfg.get_int("seed", 1));
}

void write_manifest(const CommandContext& ctx, std::uint64_t seed) {
  json m;
  m["command"] = ctx.command;
  m["config"] = ctx.config_path;
  m["out"] = ctx.out_dir;
  m["inputs"] = ctx.inputs;
  m["outputs"] = ctx.outputs;
  m["seed"] = seed;
  m["version"] = kVersion;
  m["duration_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                    ctx.started)
          .count();
  const fs::path final_path = fs::path(ctx.out_dir) / "manifest.json";
  const fs::path tmp = final_path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw RuntimeFailure("cannot write manifest");
    out << m.dump(2) << '\n';
  }
  fs::rename(tmp, final_path);
}

std::string out_file(CommandContext& ctx, const std::string& name) {
  const std::string path = (fs::path(ctx.out_dir) / name).string();
  ctx.outputs.push_back(path);
  return path;
}

ParallelCorpus load_corpus_input(CommandContext& ctx, const KVConfig& cfg) {
  const std::string path = cfg.get_string("corpus");
  ctx.inputs.push_back(path);
  return load_tsv(path);
}

ModelConfig model_config_from(const KVConfig& cfg, int vocab_size,
                              std::uint64_t seed) {
  ModelConfig mc;
  mc.d_model = static_cast<int>(cfg.get_int("d_model", 64));
  mc.n_layers = static_cast<int>(cfg.get_int("n_layers", 4));
  mc.n_heads = static_cast<int>(cfg.get_int("n_heads", 4));
  mc.d_ff = static_cast<int>(cfg.get_int("d_ff", 256));
  mc.max_seq_len = static_cast<int>(cfg.get_int("max_seq_len", 128));
  mc.vocab_size = vocab_size;
  mc.seed = seed;
  mc.validate();
  return mc;
}

std::vector<std::string> all_texts(const ParallelCorpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& row : corpus.sentences)
    for (const auto& s : row) texts.push_back(s);
  return texts;
}

GenerationEval load_generation_csv(const std::string& path,
                                   const std::string& standard_id) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  std::string line;
  std::getline(in, line);  // header
  GenerationEval eval;
  double dial_sum = 0;
  long dial_n = 0;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    const auto cells = split_on(line, ',');
    if (cells.size() != 2) throw ConfigError(path + ": bad generation CSV row");
    const double score = std::stod(cells[1]);
    eval.per_variety[cells[0]] = score;
    if (cells[0] == standard_id) {
      eval.standard_score = score;
    } else {
      dial_sum += score;
      ++dial_n;
    }
  }
  eval.dialect_mean = dial_n ? dial_sum / dial_n : 0.0;
  return eval;
}

int cmd_gen_corpus(CommandContext& ctx) {
  const KVConfig kv = load_config(ctx);
  ContinuumConfig cc = parse_continuum_config(kv);
  if (ctx.seed_override) cc.seed = *ctx.seed_override;
  const ParallelCorpus corpus = gen_continuum(cc.tree, cc.n_sentences, cc.seed);
  save_tsv(corpus, out_file(ctx, "corpus.tsv"));
  write_manifest(ctx, cc.seed);
  return 0;
}

int cmd_train(CommandContext& ctx) {
  const KVConfig kv = load_config(ctx);
  const std::uint64_t seed = pick_seed(ctx, kv);
  const ParallelCorpus corpus = load_corpus_input(ctx, kv);
  const double train_frac = kv.get_double("train_frac", 0.8);
  const double test_frac = kv.get_double("test_frac", 0.1);
  const CorpusSplit split = split_corpus(corpus, train_frac, test_frac, seed);

  const SubwordVocab vocab = train_wordpiece(
      all_texts(split.train), static_cast<int>(kv.get_int("vocab_size", 1000)));
  save_vocab(vocab, out_file(ctx, "vocab.txt"));

  TrainConfig tc = TrainConfig::from_kv(kv);
  tc.seed = seed;
  const ModelConfig mc = model_config_from(kv, vocab.size(), seed);
  Model model(mc);
  const TrainerData data =
      prepare_trainer_data(vocab, split.train, split.validation,
                           kv.get_bool("bidirectional", true), mc.max_seq_len);

  const std::string resume_path =
      (fs::path(ctx.out_dir) / "resume_latest.bin").string();
  const TrainResult result = run_training(
      model, data, tc, ctx.out_dir,
      (ctx.resume && fs::exists(resume_path)) ? resume_path : "");
  ctx.outputs.push_back((fs::path(ctx.out_dir) / "metrics.csv").string());
  ctx.outputs.push_back(result.final_checkpoint);

  if (!result.aborted) {
    const auto test_prompts =
        build_prompts(split.test, kv.get_bool("bidirectional", true));
    const GenerationEval eval = evaluate_generation(
        model, vocab, test_prompts, corpus.standard_id,
        kv.get_int("max_test_prompts", 0));
    report_generation_scores(eval, ctx.out_dir);
    out_file(ctx, "generation_chrf.csv");
    report_training_curves(result.log, ctx.out_dir, tc.mode);
    out_file(ctx, tc.mode + "_losses.svg");
  }
  write_manifest(ctx, seed);
  if (result.aborted) {
    std::cerr << "training aborted (divergence); last good checkpoint: "
              << result.final_checkpoint << '\n';
    return 1;
  }
  return 0;
}

int cmd_probe(CommandContext& ctx) {
  const KVConfig kv = load_config(ctx);
  const std::uint64_t seed = pick_seed(ctx, kv);
  const ParallelCorpus corpus = load_corpus_input(ctx, kv);
  const std::string ckpt = kv.get_string("checkpoint");
  const std::string vocab_path = kv.get_string("vocab");
  ctx.inputs.push_back(ckpt);
  ctx.inputs.push_back(vocab_path);
  const Model model = load_checkpoint(ckpt);
  const SubwordVocab vocab = load_vocab(vocab_path);

  std::vector<std::vector<int>> sentences;
  std::vector<int> labels;
  for (std::size_t r = 0; r < corpus.n_sentences(); ++r)
    for (const auto& variety : corpus.varieties) {
      std::vector<int> ids = encode(vocab, corpus.text(r, variety));
      if (ids.empty()) continue;
      if (static_cast<int>(ids.size()) > model.config.max_seq_len)
        ids.resize(model.config.max_seq_len);
      sentences.push_back(std::move(ids));
      labels.push_back(variety == corpus.standard_id ? 0 : 1);
    }
  const TokenReprs reprs =
      build_token_dataset(model, sentences, labels, 2,
                          kv.get_int("max_per_class", 2000), seed);
  ProbeConfig pc;
  pc.epochs = static_cast<int>(kv.get_int("probe_epochs", 30));
  pc.beta = kv.get_double("beta", 1.0);
  pc.seed = seed;
  const TrainedProbe tp = train_probe(reprs, 2, model.config.d_model, pc);
  save_probe(tp.params, out_file(ctx, "probe.bin"));
  const SubspaceBasis basis = extract_basis(expected_weight_matrix(tp.params));
  save_basis(basis, out_file(ctx, "basis.bin"));
  save_projector(make_projector(basis), out_file(ctx, "projector.bin"));

  const CodeLength cl = code_length(tp.params, reprs, pc.beta);
  std::ofstream csv(out_file(ctx, "probe_summary.csv"));
  csv << "val_accuracy,val_loss,epochs_run,bits_per_token,subspace_rank\n"
      << tp.val_accuracy << ',' << tp.val_loss << ',' << tp.epochs_run << ','
      << cl.bits_per_token << ',' << basis.U.cols() << '\n';
  write_manifest(ctx, seed);
  return 0;
}

int cmd_analyze(CommandContext& ctx) {
  const KVConfig kv = load_config(ctx);
  const std::uint64_t seed = pick_seed(ctx, kv);
  const ParallelCorpus corpus = load_corpus_input(ctx, kv);
  const std::string run_dir = kv.get_string("run_dir");
  const std::string vocab_path = kv.get_string("vocab");
  ctx.inputs.push_back(run_dir);
  ctx.inputs.push_back(vocab_path);
  const SubwordVocab vocab = load_vocab(vocab_path);
  const MetricsLog log =
      MetricsLog::load_csv((fs::path(run_dir) / "metrics.csv").string());

  std::vector<std::string> ckpts;
  std::vector<long> steps;
  for (const auto& row : log.rows)
    if (!row.checkpoint_path.empty() && fs::exists(row.checkpoint_path)) {
      ckpts.push_back(row.checkpoint_path);
      steps.push_back(row.step);
    }
  const CorpusSplit split =
      split_corpus(corpus, kv.get_double("train_frac", 0.8),
                   kv.get_double("test_frac", 0.1), seed);
  auto test_prompts = build_prompts(split.test, false);
  const long cap = kv.get_int("max_test_prompts", 240);
  if (cap > 0 && static_cast<long>(test_prompts.size()) > cap)
    test_prompts.resize(cap);

  AnalyzeOptions opts;
  opts.probe_epochs = static_cast<int>(kv.get_int("probe_epochs", 30));
  opts.probe_max_per_class = kv.get_int("max_per_class", 1000);
  opts.probe_beta = kv.get_double("probe_beta", 1.0);
  opts.subspace_reps = static_cast<int>(kv.get_int("subspace_reps", 1));
  opts.seed = seed;
  const AnalysisResult analysis = analyze_checkpoints(
      ckpts, steps, split.validation, test_prompts, vocab, opts);
  report_code_length(analysis, corpus.standard_id, ctx.out_dir);
  report_ssa(analysis, corpus.standard_id, ctx.out_dir);
  for (const char* f : {"code_length.csv", "code_length.svg", "ssa.csv",
                        "ssa.svg", "ssa_vs_chrf.svg"})
    ctx.outputs.push_back((fs::path(ctx.out_dir) / f).string());

  // Layer diagnostics on the final checkpoint: anchored distances and the
  // per-layer correlation between L2 distance and generation chrF++.
  const Model model = load_checkpoint(ckpts.back());
  ParallelCorpus probe_sample = split.validation;
  std::vector<std::vector<AnchoredDistance>> per_layer;
  for (int layer = 0; layer <= model.config.n_layers; ++layer)
    per_layer.push_back(anchored_distances(model, vocab, probe_sample,
                                           corpus.standard_id, layer));
  report_anchored(per_layer, corpus.standard_id, ctx.out_dir);
  ctx.outputs.push_back((fs::path(ctx.out_dir) / "anchored_distances.csv").string());

  const auto& final_chrf = analysis.rows.back().chrf;
  std::vector<double> layer_r;
  for (int layer = 0; layer <= model.config.n_layers; ++layer) {
    std::vector<double> xs, ys;
    for (const auto& d : per_layer[layer]) {
      const auto it = final_chrf.find(d.variety);
      if (d.variety == corpus.standard_id || it == final_chrf.end()) continue;
      xs.push_back(d.l2);
      ys.push_back(it->second);
    }
    try {
      layer_r.push_back(pearson(xs, ys));
    } catch (const std::exception&) {
      layer_r.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  report_layer_correlation(layer_r, ctx.out_dir);
  ctx.outputs.push_back((fs::path(ctx.out_dir) / "layer_correlation.csv").string());
  write_manifest(ctx, seed);
  return 0;
}

int cmd_cluster(CommandContext& ctx) {
  const KVConfig kv = load_config(ctx);
  const ParallelCorpus corpus = load_corpus_input(ctx, kv);
  report_dendrogram(corpus, ctx.out_dir);
  for (const char* f : {"dendrogram.svg", "newick.txt", "distance_matrix.csv"})
    ctx.outputs.push_back((fs::path(ctx.out_dir) / f).string());

  const Dendrogram dendro = cluster_varieties(corpus);
  const Matrix coph = cophenetic_matrix(dendro);
  std::ofstream csv(out_file(ctx, "cophenetic.csv"));
  csv << "variety_a,variety_b,height\n";
  for (std::size_t i = 0; i < dendro.leaves.size(); ++i)
    for (std::size_t j = 0; j < dendro.leaves.size(); ++j)
      csv << dendro.leaves[i] << ',' << dendro.leaves[j] << ',' << coph(i, j)
          << '\n';
  write_manifest(ctx, pick_seed(ctx, kv));
  return 0;
}

int cmd_fertility(CommandContext& ctx) {
  const KVConfig kv = load_config(ctx);
  const ParallelCorpus corpus = load_corpus_input(ctx, kv);
  // Appendix-style setting: the vocabulary is trained on the standard
  // variety, then applied to every variety.
  std::vector<std::string> std_texts;
  for (std::size_t r = 0; r < corpus.n_sentences(); ++r)
    std_texts.push_back(corpus.text(r, corpus.standard_id));
  const SubwordVocab vocab = train_wordpiece(
      std_texts, static_cast<int>(kv.get_int("vocab_size", 1000)));
  save_vocab(vocab, out_file(ctx, "vocab.txt"));

  std::vector<std::pair<std::string, double>> rows;
  for (const auto& variety : corpus.varieties) {
    std::vector<std::string> texts;
    for (std::size_t r = 0; r < corpus.n_sentences(); ++r)
      texts.push_back(corpus.text(r, variety));
    rows.emplace_back(variety, fertility(vocab, texts));
  }
  report_fertility(rows, ctx.out_dir);
  ctx.outputs.push_back((fs::path(ctx.out_dir) / "fertility.csv").string());
  write_manifest(ctx, pick_seed(ctx, kv));
  return 0;
}

int cmd_report(CommandContext& ctx) {
  const KVConfig kv = load_config(ctx);
  const std::string sft_dir = kv.get_string("sft_dir");
  const std::string dec_dir = kv.get_string("decouple_dir");
  const std::string standard_id = kv.get_string("standard", "STD");
  ctx.inputs.push_back(sft_dir);
  ctx.inputs.push_back(dec_dir);

  const GenerationEval sft = load_generation_csv(
      (fs::path(sft_dir) / "generation_chrf.csv").string(), standard_id);
  const GenerationEval dec = load_generation_csv(
      (fs::path(dec_dir) / "generation_chrf.csv").string(), standard_id);
  report_comparison(sft, dec, standard_id, ctx.out_dir);
  for (const char* f : {"comparison.svg", "summary_deltas.csv"})
    ctx.outputs.push_back((fs::path(ctx.out_dir) / f).string());

  for (const auto& [dir, prefix] :
       {std::pair{sft_dir, std::string("sft")}, {dec_dir, "decouple"}}) {
    const MetricsLog log =
        MetricsLog::load_csv((fs::path(dir) / "metrics.csv").string());
    report_training_curves(log, ctx.out_dir, prefix);
    ctx.outputs.push_back((fs::path(ctx.out_dir) / (prefix + "_losses.svg")).string());
  }
  write_manifest(ctx, pick_seed(ctx, kv));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probe-and-decouple pipeline"};
  app.require_subcommand(1);

  CommandContext ctx;
  std::uint64_t seed_value = 0;
  int exit_code = 0;

  const std::vector<std::pair<std::string, int (*)(CommandContext&)>> commands = {
      {"gen-corpus", cmd_gen_corpus}, {"train", cmd_train},
      {"probe", cmd_probe},           {"analyze", cmd_analyze},
      {"cluster", cmd_cluster},       {"fertility", cmd_fertility},
      {"report", cmd_report},
  };
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", ctx.config_path)->required();
    sub->add_option("--out", ctx.out_dir)->required();
    sub->add_option("--seed", seed_value);
    if (name == "train") sub->add_flag("--resume", ctx.resume);
    int (*handler)(CommandContext&) = fn;
    const std::string cmd_name = name;
    sub->callback([&ctx, handler, cmd_name, sub, &seed_value, &exit_code]() {
      ctx.command = cmd_name;
      if (sub->count("--seed")) ctx.seed_override = seed_value;
      ctx.out_dir = resolve_out(ctx.out_dir);
      fs::create_directories(ctx.out_dir);
      exit_code = handler(ctx);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems are config errors
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
