#pragma once

#include <string>
#include <vector>

#include "diamt/common.hpp"
#include "diamt/model.hpp"

namespace diamt {

/// Variational linear probe: layer attention alpha plus a compound Gaussian
/// posterior over classifier weights, w = z*mu + |z|*sigma*eps with
/// z ~ N(mu_z, sigma_z^2). sigma/sigma_z come from softplus of the raw fields.
struct ProbeParams {
  Vector alpha_raw;              // length L+1
  Matrix mu, sigma_raw;          // d x c
  Matrix mu_z, sigma_z_raw;      // d x c
  int n_classes = 0;

  Vector alpha() const;          // softmax(alpha_raw)
  void validate() const;
};

ProbeParams init_probe(int n_layers_plus1, int d, int n_classes, std::uint64_t seed);

struct ProbeConfig {
  double beta = 1.0;             // KL weight
  int epochs = 30;
  int early_stop_patience = 5;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int mc_samples = 1;
  int batch_size = 64;
  bool sequence_level = false;   // mean-pool tokens per sentence instead

  void validate() const;
};

/// Token-level probing dataset: one row per token, all L+1 layer views kept
/// so alpha can keep training.
struct TokenReprs {
  std::vector<Matrix> layers;    // L+1 matrices, each N x d
  std::vector<int> labels;       // length N

  long size() const { return static_cast<long>(labels.size()); }
};

/// Per-token layer aggregation h' = sum_i alpha_i h^(i); masked rows are kept
/// in place (callers exclude them downstream).
Matrix aggregate(const HiddenStack& stack, const ProbeParams& params);
Matrix aggregate(const std::vector<Matrix>& layers, const ProbeParams& params);

struct WeightSample {
  Matrix w;                      // d x c
  Matrix z, eps1, eps2;          // kept for the backward pass
};
WeightSample sample_weights(const ProbeParams& params, Rng& rng);

/// Posterior mean of w: theta = mu_z (.) mu.
Matrix expected_weight_matrix(const ProbeParams& params);

struct ProbeGrads {
  Vector alpha_raw;
  Matrix mu, sigma_raw, mu_z, sigma_z_raw;
};
ProbeGrads zero_probe_grads(const ProbeParams& params);

/// Sparsity penalty under the normal-Jeffreys prior, the standard analytic
/// approximation with k1=0.63576, k2=1.87320, k3=1.48695 on
/// log alpha_w = log(Var[w]/E[w]^2), clamped at +8. Optionally accumulates
/// d(KL)/d(params) into `grads`.
double kl_normal_jeffreys(const ProbeParams& params, ProbeGrads* grads = nullptr,
                          double grad_scale = 1.0);

struct ProbeDiagnostics {
  double ce = 0;                 // mean CE over the batch, nats
  double kl = 0;                 // total KL penalty, nats
  double loss = 0;               // ce + beta * kl / dataset_tokens
  double accuracy = 0;           // argmax accuracy under the sampled weights
};

/// Stochastic loss for one batch: mean CE over mc_samples draws plus the
/// (dataset-normalized) KL term. Fills `grads` with exact gradients when given.
double probe_loss(const std::vector<Matrix>& layers, const std::vector<int>& labels,
                  const ProbeParams& params, Rng& rng, const ProbeConfig& cfg,
                  long dataset_tokens, ProbeGrads* grads = nullptr,
                  ProbeDiagnostics* diag = nullptr);

/// Builds the token-level dataset by running the frozen model over encoded
/// sentences. Balanced: each class is subsampled to the smallest class size
/// (and to max_per_class when positive).
TokenReprs build_token_dataset(const Model& model,
                               const std::vector<std::vector<int>>& sentences,
                               const std::vector<int>& labels, int n_classes,
                               long max_per_class, std::uint64_t seed,
                               bool sequence_level = false);

struct TrainedProbe {
  ProbeParams params;
  double val_accuracy = 0;
  double val_loss = 0;
  int epochs_run = 0;
};

/// Adam + early stopping on held-out loss; deterministic under cfg.seed.
/// `init` warm-starts from existing parameters instead of a fresh draw.
TrainedProbe train_probe(const TokenReprs& data, int n_classes, int d,
                         const ProbeConfig& cfg,
                         const ProbeParams* init = nullptr);

/// Deterministic classification accuracy using theta = mu_z (.) mu.
double probe_accuracy(const TokenReprs& data, const ProbeParams& params);

struct CodeLength {
  double total_bits = 0;
  double bits_per_token = 0;
};
/// Variational code length (sum CE + beta*KL) / ln 2, CE under theta.
CodeLength code_length(const ProbeParams& params, const TokenReprs& data,
                       double beta);

void save_probe(const ProbeParams& params, const std::string& path);
ProbeParams load_probe(const std::string& path);

}  // namespace diamt
