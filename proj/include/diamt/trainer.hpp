#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diamt/corpus.hpp"
#include "diamt/kvconfig.hpp"
#include "diamt/metrics_log.hpp"
#include "diamt/model.hpp"
#include "diamt/probe.hpp"
#include "diamt/subspace.hpp"
#include "diamt/tokenizer.hpp"

namespace diamt {

struct TrainConfig {
  std::string mode = "sft";        // "sft" | "decouple"
  double lambda = 0.01;
  int n_update = 500;              // probe refresh interval, optimizer steps
  int batch_size = 8;
  int grad_accum_steps = 1;
  double lr = 1e-3;
  long max_steps = 3000;
  int early_stop_patience = 3;     // epochs without improvement
  double early_stop_threshold = 0.01;
  int eval_every = 250;
  std::uint64_t seed = 0;
  int probe_epochs = 15;
  long probe_max_per_class = 2000;
  long max_val_examples = 500;
  bool penalize_all_tokens = false;  // default: target span only
  bool warm_start_probe = false;

  void validate() const;
  static TrainConfig from_kv(const KVConfig& kv);
  KVConfig to_kv() const;
};

/// One training example, already tokenized: model input, shifted targets,
/// and a loss mask covering the target span (and EOS).
struct EncodedExample {
  std::vector<int> input;
  std::vector<int> target;
  std::vector<std::uint8_t> mask;
};

/// [BOS] prompt target [EOS], truncated to max_len; nullopt when truncation
/// leaves no target token.
std::optional<EncodedExample> encode_example(const SubwordVocab& vocab,
                                             const PromptExample& ex,
                                             int max_len);

struct TrainerData {
  std::vector<EncodedExample> train, validation;
  // Probe-refresh pool (decouple mode): encoded sentences with binary labels,
  // 0 = standard variety, 1 = rest.
  std::vector<std::vector<int>> probe_sentences;
  std::vector<int> probe_labels;
};

TrainerData prepare_trainer_data(const SubwordVocab& vocab,
                                 const ParallelCorpus& train_corpus,
                                 const ParallelCorpus& val_corpus,
                                 bool bidirectional, int max_seq_len);

struct TrainResult {
  MetricsLog log;
  std::string final_checkpoint;
  long steps_run = 0;
  bool aborted = false;            // divergence; final_checkpoint = last good
  bool early_stopped = false;
};

/// Shared training loop. `out_dir` receives checkpoints, resume files,
/// projector artifacts, and metrics.csv. `resume_from` restores an exact
/// mid-run state written by a previous invocation.
TrainResult run_training(Model& model, const TrainerData& data,
                         const TrainConfig& cfg, const std::string& out_dir,
                         const std::string& resume_from = "");

TrainResult run_sft(Model& model, const TrainerData& data, TrainConfig cfg,
                    const std::string& out_dir);
TrainResult run_decouple(Model& model, const TrainerData& data, TrainConfig cfg,
                         const std::string& out_dir);

struct GenerationEval {
  std::map<std::string, double> per_variety;  // mean chrF++ by target variety
  double dialect_mean = 0;                    // excludes the standard variety
  double standard_score = 0;                  // standard-variety targets only
};

GenerationEval evaluate_generation(const Model& model, const SubwordVocab& vocab,
                                   const std::vector<PromptExample>& prompts,
                                   const std::string& standard_id,
                                   long max_examples = 0);

/// Mean decoupling penalty of the model's hidden states over examples'
/// loss-masked tokens, under a fixed (alpha, P).
double mean_projection_norm(const Model& model,
                            const std::vector<EncodedExample>& examples,
                            const Vector& alpha, const Matrix& P,
                            long max_examples = 0);

struct CheckpointAnalysis {
  long step = 0;
  std::map<std::string, double> code_bits;         // per variety, bits/token
  std::map<std::string, double> ssa_vs_standard;   // per variety (standard = 0)
  std::map<std::string, double> chrf;              // per target variety
  double dialect_chrf_mean = 0;
};

struct AnalysisResult {
  std::vector<CheckpointAnalysis> rows;
  // SSA-vs-chrF++ correlation across checkpoints: each dialect's series is
  // centered on its own mean before pooling, so the coefficient measures the
  // shared temporal trend rather than cross-dialect level differences.
  // NaN when undefined.
  double pearson_ssa_chrf = 0;
};

struct AnalyzeOptions {
  int probe_epochs = 30;
  long probe_max_per_class = 1000;
  // KL weight for the analysis probes. Larger values prune the probe onto its
  // most informative hidden dimensions, which stabilizes the extracted
  // subspace at small model widths.
  double probe_beta = 1.0;
  // Independent probe restarts per (checkpoint, variety); code length and SSA
  // are averaged over restarts to reduce estimation noise.
  int subspace_reps = 1;
  std::uint64_t seed = 0;
};

/// Per-checkpoint analytics: one-vs-rest probes per variety (code length +
/// subspace), SSA against the standard variety, and held-out generation
/// chrF++; finally the SSA-vs-chrF++ correlation.
AnalysisResult analyze_checkpoints(const std::vector<std::string>& ckpt_paths,
                                   const std::vector<long>& steps,
                                   const ParallelCorpus& probe_corpus,
                                   const std::vector<PromptExample>& test_prompts,
                                   const SubwordVocab& vocab,
                                   const AnalyzeOptions& opts = {});

}  // namespace diamt
