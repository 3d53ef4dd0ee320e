#include "diamt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "diamt/chrf.hpp"
#include "diamt/stats.hpp"
#include "diamt/tensor_io.hpp"

namespace fs = std::filesystem;

namespace diamt {

void TrainConfig::validate() const {
  if (mode != "sft" && mode != "decouple")
    throw ConfigError("train: mode must be sft or decouple");
  if (lambda < 0) throw ConfigError("train: lambda must be >= 0");
  if (n_update < 1) throw ConfigError("train: n_update must be >= 1");
  if (batch_size < 1 || grad_accum_steps < 1)
    throw ConfigError("train: batch/accum must be >= 1");
  if (max_steps < 1) throw ConfigError("train: max_steps must be >= 1");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (early_stop_patience < 1) throw ConfigError("train: patience must be >= 1");
  if (lr <= 0) throw ConfigError("train: lr must be positive");
}

TrainConfig TrainConfig::from_kv(const KVConfig& kv) {
  TrainConfig c;
  c.mode = kv.get_string("mode", c.mode);
  c.lambda = kv.get_double("lambda", c.lambda);
  c.n_update = static_cast<int>(kv.get_int("n_update", c.n_update));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.grad_accum_steps =
      static_cast<int>(kv.get_int("grad_accum_steps", c.grad_accum_steps));
  c.lr = kv.get_double("lr", c.lr);
  c.max_steps = kv.get_int("max_steps", c.max_steps);
  c.early_stop_patience =
      static_cast<int>(kv.get_int("early_stop_patience", c.early_stop_patience));
  c.early_stop_threshold =
      kv.get_double("early_stop_threshold", c.early_stop_threshold);
  c.eval_every = static_cast<int>(kv.get_int("eval_every", c.eval_every));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.probe_epochs = static_cast<int>(kv.get_int("probe_epochs", c.probe_epochs));
  c.probe_max_per_class =
      kv.get_int("probe_max_per_class", c.probe_max_per_class);
  c.max_val_examples = kv.get_int("max_val_examples", c.max_val_examples);
  c.penalize_all_tokens =
      kv.get_bool("penalize_all_tokens", c.penalize_all_tokens);
  c.warm_start_probe = kv.get_bool("warm_start_probe", c.warm_start_probe);
  c.validate();
  return c;
}

KVConfig TrainConfig::to_kv() const {
  KVConfig kv;
  kv.set("mode", mode);
  kv.set("lambda", std::to_string(lambda));
  kv.set("n_update", std::to_string(n_update));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("grad_accum_steps", std::to_string(grad_accum_steps));
  kv.set("lr", std::to_string(lr));
  kv.set("max_steps", std::to_string(max_steps));
  kv.set("early_stop_patience", std::to_string(early_stop_patience));
  kv.set("early_stop_threshold", std::to_string(early_stop_threshold));
  kv.set("eval_every", std::to_string(eval_every));
  kv.set("seed", std::to_string(seed));
  kv.set("probe_epochs", std::to_string(probe_epochs));
  kv.set("probe_max_per_class", std::to_string(probe_max_per_class));
  kv.set("max_val_examples", std::to_string(max_val_examples));
  kv.set("penalize_all_tokens", penalize_all_tokens ? "true" : "false");
  kv.set("warm_start_probe", warm_start_probe ? "true" : "false");
  return kv;
}

std::optional<EncodedExample> encode_example(const SubwordVocab& vocab,
                                             const PromptExample& ex,
                                             int max_len) {
  std::vector<int> prompt_ids = encode(vocab, ex.prompt_text);
  std::vector<int> target_ids = encode(vocab, ex.target_text);
  std::vector<int> seq;
  seq.push_back(SubwordVocab::kBos);
  seq.insert(seq.end(), prompt_ids.begin(), prompt_ids.end());
  const std::size_t target_start = seq.size();  // first target position
  seq.insert(seq.end(), target_ids.begin(), target_ids.end());
  seq.push_back(SubwordVocab::kEos);
  if (static_cast<int>(seq.size()) > max_len + 1)
    seq.resize(max_len + 1);
  if (seq.size() <= target_start) return std::nullopt;  // target truncated away

  EncodedExample out;
  out.input.assign(seq.begin(), seq.end() - 1);
  out.target.assign(seq.begin() + 1, seq.end());
  out.mask.assign(out.input.size(), 0);
  // Position t predicts seq[t+1]; loss on predictions of target tokens + EOS.
  for (std::size_t t = 0; t + 1 < seq.size(); ++t)
    if (t + 1 >= target_start) out.mask[t] = 1;
  bool any = false;
  for (auto m : out.mask) any |= (m != 0);
  if (!any) return std::nullopt;
  return out;
}

TrainerData prepare_trainer_data(const SubwordVocab& vocab,
                                 const ParallelCorpus& train_corpus,
                                 const ParallelCorpus& val_corpus,
                                 bool bidirectional, int max_seq_len) {
  TrainerData data;
  for (const auto& ex : build_prompts(train_corpus, bidirectional))
    if (auto enc = encode_example(vocab, ex, max_seq_len))
      data.train.push_back(std::move(*enc));
  for (const auto& ex : build_prompts(val_corpus, bidirectional))
    if (auto enc = encode_example(vocab, ex, max_seq_len))
      data.validation.push_back(std::move(*enc));
  for (std::size_t row = 0; row < train_corpus.n_sentences(); ++row) {
    for (const auto& variety : train_corpus.varieties) {
      std::vector<int> ids = encode(vocab, train_corpus.text(row, variety));
      if (ids.empty()) continue;
      if (static_cast<int>(ids.size()) > max_seq_len) ids.resize(max_seq_len);
      data.probe_sentences.push_back(std::move(ids));
      data.probe_labels.push_back(variety == train_corpus.standard_id ? 0 : 1);
    }
  }
  return data;
}

namespace {

struct PenaltyState {
  bool active = false;
  Vector alpha;
  Matrix P;
  ProbeParams probe;  // for warm starts
};

std::vector<long> epoch_permutation(long n, std::uint64_t seed, long epoch) {
  std::vector<long> perm(n);
  std::iota(perm.begin(), perm.end(), 0L);
  Rng rng(derive_seed(seed, "perm", static_cast<std::uint64_t>(epoch)));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

double validation_loss(const Model& model, const TrainerData& data,
                       const TrainConfig& cfg) {
  long n = static_cast<long>(data.validation.size());
  if (cfg.max_val_examples > 0) n = std::min(n, cfg.max_val_examples);
  if (n == 0) throw ConfigError("train: empty validation set");
  double acc = 0;
  for (long i = 0; i < n; ++i) {
    const auto& ex = data.validation[i];
    acc += lm_loss(forward(model, ex.input), ex.target, ex.mask);
  }
  return acc / n;
}

void refresh_penalty(const Model& model, const TrainerData& data,
                     const TrainConfig& cfg, long refresh_count,
                     PenaltyState& pen, const std::string& out_dir, long step) {
  if (data.probe_sentences.empty())
    throw ConfigError("train: decouple mode needs probe sentences");
  // Subsample sentences per class before running the model: token targets
  // divided by the pool's average sentence length.
  double total_len = 0;
  for (const auto& s : data.probe_sentences) total_len += s.size();
  const double avg_len = total_len / data.probe_sentences.size();
  const long sent_cap = std::max<long>(
      20, static_cast<long>(cfg.probe_max_per_class / std::max(1.0, avg_len)) + 1);
  const std::uint64_t rseed =
      derive_seed(cfg.seed, "probe-refresh", static_cast<std::uint64_t>(refresh_count));
  std::vector<long> by_class[2];
  for (std::size_t i = 0; i < data.probe_labels.size(); ++i)
    by_class[data.probe_labels[i]].push_back(static_cast<long>(i));
  Rng rng(derive_seed(rseed, "subsample"));
  std::vector<std::vector<int>> sentences;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    const long take = std::min<long>(sent_cap, static_cast<long>(by_class[c].size()));
    for (long i = 0; i < take; ++i) {
      sentences.push_back(data.probe_sentences[by_class[c][i]]);
      labels.push_back(c);
    }
  }

  try {
    TokenReprs reprs = build_token_dataset(model, sentences, labels, 2,
                                           cfg.probe_max_per_class, rseed);
    ProbeConfig pc;
    pc.epochs = cfg.probe_epochs;
    pc.seed = rseed;
    TrainedProbe tp =
        train_probe(reprs, 2, model.config.d_model, pc,
                    (cfg.warm_start_probe && pen.active) ? &pen.probe : nullptr);
    const Matrix theta = expected_weight_matrix(tp.params);
    SubspaceBasis basis = extract_basis(theta);
    basis.source_step = step;
    pen.P = make_projector(basis).P;
    pen.alpha = tp.params.alpha();
    pen.probe = tp.params;
    pen.active = true;
    if (!out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof name, "projector_step%06ld.bin", step);
      save_projector({pen.P}, (fs::path(out_dir) / name).string());
      std::snprintf(name, sizeof name, "probe_step%06ld.bin", step);
      save_probe(tp.params, (fs::path(out_dir) / name).string());
    }
  } catch (const ConfigError& e) {
    // Degenerate refresh: keep the previous projector.
    std::cerr << "warning: probe refresh at step " << step
              << " failed (" << e.what() << "); keeping previous projector\n";
  }
}

std::string checkpoint_name(long step) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ckpt_step%06ld.bin", step);
  return buf;
}

void save_resume(const Model& model, const AdamState& adam,
                 const PenaltyState& pen, long step, long consumed,
                 double best_val, int bad_epochs, long refresh_count,
                 long checked_epochs, const std::string& path) {
  ResumeFile f;
  f.header.set("kind", "resume");
  f.header.set("step", std::to_string(step));
  f.header.set("consumed", std::to_string(consumed));
  char best[40];
  std::snprintf(best, sizeof best, "%.17g", best_val);
  f.header.set("best_val", best);
  f.header.set("bad_epochs", std::to_string(bad_epochs));
  f.header.set("refresh_count", std::to_string(refresh_count));
  f.header.set("checked_epochs", std::to_string(checked_epochs));
  f.header.set("adam_t", std::to_string(adam.t));
  f.header.set("penalty_active", pen.active ? "1" : "0");
  model.params.visit([&](const std::string& name, const Matrix& m) {
    f.add("param." + name, m);
  });
  if (!adam.m.empty()) {
    std::size_t i = 0;
    model.params.visit([&](const std::string& name, const Matrix&) {
      f.add("adam_m." + name, adam.m[i]);
      f.add("adam_v." + name, adam.v[i]);
      ++i;
    });
  }
  if (pen.active) {
    f.add("pen.P", pen.P);
    f.add("pen.alpha", pen.alpha.transpose());
    f.add("pen.probe.alpha_raw", pen.probe.alpha_raw.transpose());
    f.add("pen.probe.mu", pen.probe.mu);
    f.add("pen.probe.sigma_raw", pen.probe.sigma_raw);
    f.add("pen.probe.mu_z", pen.probe.mu_z);
    f.add("pen.probe.sigma_z_raw", pen.probe.sigma_z_raw);
  }
  f.save(path);
}

}  // namespace

TrainResult run_training(Model& model, const TrainerData& data,
                         const TrainConfig& cfg, const std::string& out_dir,
                         const std::string& resume_from) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("train: empty training set");
  if (data.validation.empty()) throw ConfigError("train: empty validation set");
  fs::create_directories(out_dir);

  const bool decouple = cfg.mode == "decouple";
  const long n_train = static_cast<long>(data.train.size());
  const long per_step = static_cast<long>(cfg.batch_size) * cfg.grad_accum_steps;

  AdamState adam;
  PenaltyState pen;
  TrainResult result;
  long step = 0, consumed = 0, refresh_count = 0, checked_epochs = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  if (!resume_from.empty()) {
    const ResumeFile f = ResumeFile::load(resume_from);
    step = f.header.get_int("step");
    consumed = f.header.get_int("consumed");
    best_val = f.header.get_double("best_val");
    bad_epochs = static_cast<int>(f.header.get_int("bad_epochs"));
    refresh_count = f.header.get_int("refresh_count");
    checked_epochs = f.header.get_int("checked_epochs");
    adam.t = f.header.get_int("adam_t");
    model.params.visit([&](const std::string& name, Matrix& m) {
      m = f.get("param." + name);
    });
    if (adam.t > 0) {
      model.params.visit([&](const std::string& name, const Matrix&) {
        adam.m.push_back(f.get("adam_m." + name));
        adam.v.push_back(f.get("adam_v." + name));
      });
    }
    if (f.header.get_int("penalty_active", 0) == 1) {
      pen.active = true;
      pen.P = f.get("pen.P");
      pen.alpha = f.get("pen.alpha").row(0).transpose();
      pen.probe.alpha_raw = f.get("pen.probe.alpha_raw").row(0).transpose();
      pen.probe.mu = f.get("pen.probe.mu");
      pen.probe.sigma_raw = f.get("pen.probe.sigma_raw");
      pen.probe.mu_z = f.get("pen.probe.mu_z");
      pen.probe.sigma_z_raw = f.get("pen.probe.sigma_z_raw");
      pen.probe.n_classes = 2;
    }
    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    if (fs::exists(metrics_path)) {
      MetricsLog prior = MetricsLog::load_csv(metrics_path);
      for (auto& row : prior.rows)
        if (row.step <= step) result.log.append(std::move(row));
    }
  }

  std::string last_ckpt;
  const auto save_eval_state = [&](double val, double lm_mean, double dec_mean) {
    const std::string ckpt = (fs::path(out_dir) / checkpoint_name(step)).string();
    save_checkpoint(model, ckpt);
    last_ckpt = ckpt;
    MetricsRow row;
    row.step = step;
    row.lm_loss = lm_mean;
    row.decouple_loss = dec_mean;
    row.validation_loss = val;
    row.checkpoint_path = ckpt;
    result.log.append(std::move(row));
    result.log.save_csv((fs::path(out_dir) / "metrics.csv").string());
    save_resume(model, adam, pen, step, consumed, best_val, bad_epochs,
                refresh_count, checked_epochs,
                (fs::path(out_dir) / "resume_latest.bin").string());
  };

  if (resume_from.empty()) {
    if (decouple) {
      refresh_penalty(model, data, cfg, refresh_count++, pen, out_dir, 0);
    }
    const double val0 = validation_loss(model, data, cfg);
    save_eval_state(val0, val0, 0.0);
  } else {
    last_ckpt = (fs::path(out_dir) / checkpoint_name(step)).string();
  }

  std::vector<long> perm;
  long perm_epoch = -1;
  double lm_acc = 0, dec_acc = 0;
  long acc_count = 0;

  while (step < cfg.max_steps) {
    if (decouple && step > 0 && step % cfg.n_update == 0 &&
        consumed == step * per_step) {
      refresh_penalty(model, data, cfg, refresh_count++, pen, out_dir, step);
    }

    Gradients grads = zero_gradients(model);
    double step_lm = 0, step_dec = 0;
    bool finite = true;
    for (long micro = 0; micro < per_step; ++micro) {
      const long epoch = consumed / n_train;
      if (epoch != perm_epoch) {
        perm = epoch_permutation(n_train, cfg.seed, epoch);
        perm_epoch = epoch;
      }
      const EncodedExample& ex = data.train[perm[consumed % n_train]];
      ++consumed;

      ForwardCache cache;
      HiddenStack stack;
      const bool need_stack = decouple && cfg.lambda > 0 && pen.active;
      Matrix logits =
          forward(model, ex.input, {}, need_stack ? &stack : nullptr, &cache);
      const double lm = lm_loss(logits, ex.target, ex.mask);
      step_lm += lm;
      Matrix d_logits = lm_loss_grad(logits, ex.target, ex.mask);
      Gradients g;
      if (need_stack) {
        stack.mask = cfg.penalize_all_tokens
                         ? std::vector<std::uint8_t>(ex.input.size(), 1)
                         : ex.mask;
        std::vector<Matrix> d_hidden;
        const double dec = decoupling_loss(stack, pen.alpha, pen.P, &d_hidden);
        step_dec += dec;
        for (auto& dh : d_hidden) dh *= cfg.lambda;
        g = backward(model, cache, d_logits, &d_hidden);
      } else {
        g = backward(model, cache, d_logits);
      }
      if (!std::isfinite(lm)) finite = false;
      accumulate(grads, g);
    }
    scale_gradients(grads, 1.0 / per_step);
    step_lm /= per_step;
    step_dec /= per_step;
    if (!finite) {
      result.aborted = true;
      break;
    }
    try {
      adam_step(model, grads, adam, cfg.lr);
    } catch (const RuntimeFailure&) {
      result.aborted = true;
      break;
    }
    ++step;
    lm_acc += step_lm;
    dec_acc += step_dec;
    ++acc_count;

    // Epoch boundary: early-stopping bookkeeping.
    const long epochs_done = consumed / n_train;
    if (epochs_done > checked_epochs) {
      checked_epochs = epochs_done;
      const double val = validation_loss(model, data, cfg);
      if (best_val - val >= cfg.early_stop_threshold) {
        best_val = val;
        bad_epochs = 0;
      } else if (++bad_epochs >= cfg.early_stop_patience) {
        result.early_stopped = true;
      }
      if (!std::isfinite(val)) result.aborted = true;
    }

    if (step % cfg.eval_every == 0 || step == cfg.max_steps ||
        result.early_stopped || result.aborted) {
      const double val = validation_loss(model, data, cfg);
      if (!std::isfinite(val)) result.aborted = true;
      if (!result.aborted)
        save_eval_state(val, acc_count ? lm_acc / acc_count : 0.0,
                        acc_count ? dec_acc / acc_count : 0.0);
      lm_acc = dec_acc = 0;
      acc_count = 0;
    }
    if (result.early_stopped || result.aborted) break;
  }

  // Final state if the loop ended off an eval boundary.
  if (!result.aborted && (result.log.rows.empty() ||
                          result.log.rows.back().step != step)) {
    const double val = validation_loss(model, data, cfg);
    save_eval_state(val, acc_count ? lm_acc / acc_count : 0.0,
                    acc_count ? dec_acc / acc_count : 0.0);
  }

  result.steps_run = step;
  result.final_checkpoint = last_ckpt;
  return result;
}

TrainResult run_sft(Model& model, const TrainerData& data, TrainConfig cfg,
                    const std::string& out_dir) {
  cfg.mode = "sft";
  return run_training(model, data, cfg, out_dir);
}

TrainResult run_decouple(Model& model, const TrainerData& data, TrainConfig cfg,
                         const std::string& out_dir) {
  cfg.mode = "decouple";
  return run_training(model, data, cfg, out_dir);
}

GenerationEval evaluate_generation(const Model& model, const SubwordVocab& vocab,
                                   const std::vector<PromptExample>& prompts,
                                   const std::string& standard_id,
                                   long max_examples) {
  std::map<std::string, double> sums;
  std::map<std::string, long> counts;
  long n = static_cast<long>(prompts.size());
  if (max_examples > 0) n = std::min(n, max_examples);
  for (long i = 0; i < n; ++i) {
    const PromptExample& ex = prompts[i];
    std::vector<int> ids = encode(vocab, ex.prompt_text);
    ids.insert(ids.begin(), SubwordVocab::kBos);
    const int cap = model.config.max_seq_len;
    if (static_cast<int>(ids.size()) > cap - 4) continue;  // no room to generate
    const long ref_len =
        static_cast<long>(encode(vocab, ex.target_text).size());
    const int max_new = static_cast<int>(
        std::min<long>(ref_len + 8, cap - static_cast<long>(ids.size())));
    const std::vector<int> out =
        generate_greedy(model, ids, max_new, SubwordVocab::kEos);
    const std::string hyp = decode(vocab, out);
    sums[ex.target_variety] += chrf_pp(hyp, ex.target_text);
    counts[ex.target_variety] += 1;
  }
  GenerationEval eval;
  double dial_sum = 0;
  long dial_n = 0;
  for (const auto& [variety, sum] : sums) {
    const double mean = sum / counts[variety];
    eval.per_variety[variety] = mean;
    if (variety == standard_id) {
      eval.standard_score = mean;
    } else {
      dial_sum += mean;
      ++dial_n;
    }
  }
  eval.dialect_mean = dial_n ? dial_sum / dial_n : 0.0;
  return eval;
}

double mean_projection_norm(const Model& model,
                            const std::vector<EncodedExample>& examples,
                            const Vector& alpha, const Matrix& P,
                            long max_examples) {
  long n = static_cast<long>(examples.size());
  if (max_examples > 0) n = std::min(n, max_examples);
  if (n == 0) throw ConfigError("mean_projection_norm: no examples");
  double acc = 0;
  for (long i = 0; i < n; ++i) {
    HiddenStack stack;
    forward(model, examples[i].input, {}, &stack);
    stack.mask = examples[i].mask;
    acc += decoupling_loss(stack, alpha, P);
  }
  return acc / n;
}

AnalysisResult analyze_checkpoints(const std::vector<std::string>& ckpt_paths,
                                   const std::vector<long>& steps,
                                   const ParallelCorpus& probe_corpus,
                                   const std::vector<PromptExample>& test_prompts,
                                   const SubwordVocab& vocab,
                                   const AnalyzeOptions& opts) {
  if (ckpt_paths.size() < 2)
    throw ConfigError("analyze_checkpoints: need at least 2 checkpoints");
  if (ckpt_paths.size() != steps.size())
    throw ConfigError("analyze_checkpoints: paths/steps size mismatch");
  if (opts.subspace_reps < 1)
    throw ConfigError("analyze_checkpoints: subspace_reps must be >= 1");

  AnalysisResult result;
  for (std::size_t ci = 0; ci < ckpt_paths.size(); ++ci) {
    const Model model = load_checkpoint(ckpt_paths[ci]);
    CheckpointAnalysis row;
    row.step = steps[ci];

    // Per-sentence encodings, reused for every one-vs-rest probe.
    std::vector<std::vector<int>> encoded;
    std::vector<int> variety_of;
    for (std::size_t r = 0; r < probe_corpus.n_sentences(); ++r)
      for (std::size_t v = 0; v < probe_corpus.varieties.size(); ++v) {
        std::vector<int> ids =
            encode(vocab, probe_corpus.text(r, probe_corpus.varieties[v]));
        if (ids.empty()) continue;
        if (static_cast<int>(ids.size()) > model.config.max_seq_len)
          ids.resize(model.config.max_seq_len);
        encoded.push_back(std::move(ids));
        variety_of.push_back(static_cast<int>(v));
      }
    double total_len = 0;
    for (const auto& s : encoded) total_len += s.size();
    const double avg_len = total_len / std::max<std::size_t>(1, encoded.size());
    const long sent_cap = std::max<long>(
        20,
        static_cast<long>(opts.probe_max_per_class / std::max(1.0, avg_len)) +
            1);

    // Probe estimation noise dominates single-shot subspace estimates at
    // small widths, so code length and SSA are averaged over independent
    // probe restarts.
    for (int rep = 0; rep < opts.subspace_reps; ++rep) {
      std::map<std::string, SubspaceBasis> bases;
      for (std::size_t v = 0; v < probe_corpus.varieties.size(); ++v) {
        const std::string& variety = probe_corpus.varieties[v];
        const std::uint64_t vseed = derive_seed(
            opts.seed, "analyze", (ci * 1000 + v) * 101 + rep);
        Rng rng(vseed);
        std::vector<long> pos, neg;
        for (std::size_t i = 0; i < encoded.size(); ++i)
          (variety_of[i] == static_cast<int>(v) ? pos : neg).push_back(
              static_cast<long>(i));
        std::shuffle(pos.begin(), pos.end(), rng);
        std::shuffle(neg.begin(), neg.end(), rng);
        const long take = std::min<long>({sent_cap, static_cast<long>(pos.size()),
                                          static_cast<long>(neg.size())});
        std::vector<std::vector<int>> sentences;
        std::vector<int> labels;
        for (long i = 0; i < take; ++i) {
          sentences.push_back(encoded[pos[i]]);
          labels.push_back(0);
          sentences.push_back(encoded[neg[i]]);
          labels.push_back(1);
        }
        TokenReprs reprs = build_token_dataset(model, sentences, labels, 2,
                                               opts.probe_max_per_class, vseed);
        ProbeConfig pc;
        pc.epochs = opts.probe_epochs;
        pc.beta = opts.probe_beta;
        pc.seed = vseed;
        TrainedProbe tp = train_probe(reprs, 2, model.config.d_model, pc);
        row.code_bits[variety] +=
            code_length(tp.params, reprs, pc.beta).bits_per_token /
            opts.subspace_reps;
        bases.emplace(variety, extract_basis(expected_weight_matrix(tp.params)));
      }
      const SubspaceBasis& std_basis = bases.at(probe_corpus.standard_id);
      for (const auto& [variety, basis] : bases)
        row.ssa_vs_standard[variety] +=
            ssa_degrees(std_basis.U, basis.U) / opts.subspace_reps;
    }

    const GenerationEval gen = evaluate_generation(
        model, vocab, test_prompts, probe_corpus.standard_id);
    row.chrf = gen.per_variety;
    row.dialect_chrf_mean = gen.dialect_mean;
    result.rows.push_back(std::move(row));
  }

  // Pool (checkpoint, dialect) pairs after centering each dialect's SSA and
  // chrF++ series, so the correlation reflects the trend across checkpoints.
  std::vector<double> pooled_ssa, pooled_chrf;
  for (const auto& [variety, unused] : result.rows.front().ssa_vs_standard) {
    if (variety == probe_corpus.standard_id) continue;
    std::vector<double> sx, sy;
    for (const auto& row : result.rows) {
      const auto it = row.chrf.find(variety);
      if (it == row.chrf.end()) continue;
      sx.push_back(row.ssa_vs_standard.at(variety));
      sy.push_back(it->second);
    }
    if (sx.empty()) continue;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < sx.size(); ++i) {
      mx += sx[i] / sx.size();
      my += sy[i] / sy.size();
    }
    for (std::size_t i = 0; i < sx.size(); ++i) {
      pooled_ssa.push_back(sx[i] - mx);
      pooled_chrf.push_back(sy[i] - my);
    }
  }
  try {
    result.pearson_ssa_chrf = pearson(pooled_ssa, pooled_chrf);
  } catch (const ConfigError&) {
    result.pearson_ssa_chrf = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

}  // namespace diamt
