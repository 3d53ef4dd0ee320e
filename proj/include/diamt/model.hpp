#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diamt/common.hpp"

namespace diamt {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;
  int max_seq_len = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BlockParams {
  Matrix ln1_g, ln1_b;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_g, ln2_b;
  Matrix w1, b1, w2, b2;
};

/// All parameters; also used (shape-matched) for gradients and Adam moments.
struct ModelParams {
  Matrix tok_emb, pos_emb;
  std::vector<BlockParams> blocks;
  Matrix lnf_g, lnf_b;
  Matrix w_out, b_out;

  /// Enumerates tensors in the declared (serialization) order.
  template <typename F>
  void visit(F&& f) {
    f("tok_emb", tok_emb);
    f("pos_emb", pos_emb);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "block" + std::to_string(i) + ".";
      f(p + "ln1_g", b.ln1_g); f(p + "ln1_b", b.ln1_b);
      f(p + "wq", b.wq); f(p + "bq", b.bq);
      f(p + "wk", b.wk); f(p + "bk", b.bk);
      f(p + "wv", b.wv); f(p + "bv", b.bv);
      f(p + "wo", b.wo); f(p + "bo", b.bo);
      f(p + "ln2_g", b.ln2_g); f(p + "ln2_b", b.ln2_b);
      f(p + "w1", b.w1); f(p + "b1", b.b1);
      f(p + "w2", b.w2); f(p + "b2", b.b2);
    }
    f("lnf_g", lnf_g);
    f("lnf_b", lnf_b);
    f("w_out", w_out);
    f("b_out", b_out);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const std::string& n, Matrix& m) { f(n, const_cast<const Matrix&>(m)); });
  }
};

using Gradients = ModelParams;

/// Per-token hidden states for all layers; layer 0 is the embedding output.
struct HiddenStack {
  std::vector<Matrix> states;        // (L+1) matrices, each T x d
  std::vector<std::uint8_t> mask;    // length T, 1 = real token
};

struct Model {
  ModelConfig config;
  ModelParams params;

  explicit Model(const ModelConfig& cfg);
  Model() = default;

  long param_count() const;
  /// Order-sensitive hash of all parameter bytes.
  std::uint64_t checksum() const;
};

Gradients zero_gradients(const Model& model);
void accumulate(Gradients& acc, const Gradients& g);
void scale_gradients(Gradients& g, double factor);

/// Activation cache for one sequence; feed to backward().
struct BlockCache {
  Matrix x_in, n1_hat, n1;
  Vector ln1_istd;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, T x T
  Matrix ctx, x_mid, n2_hat, n2;
  Vector ln2_istd;
  Matrix u, gact;
};
struct ForwardCache {
  std::vector<int> ids;
  Matrix x0;
  std::vector<BlockCache> blocks;
  Matrix yf_hat, yf;
  Vector lnf_istd;
};

/// Returns T x vocab logits. Pass `stack`/`cache` to collect hidden states
/// or enable backward. `mask` may be empty (all ones).
Matrix forward(const Model& model, std::span<const int> ids,
               std::span<const std::uint8_t> mask = {},
               HiddenStack* stack = nullptr, ForwardCache* cache = nullptr);

/// Mean token-level cross-entropy (nats) over positions with loss_mask = 1.
double lm_loss(const Matrix& logits, std::span<const int> targets,
               std::span<const std::uint8_t> loss_mask);

/// Gradient of lm_loss w.r.t. logits.
Matrix lm_loss_grad(const Matrix& logits, std::span<const int> targets,
                    std::span<const std::uint8_t> loss_mask);

/// Exact analytic gradients. `d_hidden`, when given, injects extra gradient
/// at each of the L+1 stack outputs (e.g. from the decoupling penalty).
Gradients backward(const Model& model, const ForwardCache& cache,
                   const Matrix& d_logits,
                   const std::vector<Matrix>* d_hidden = nullptr);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};
struct AdamState {
  std::vector<Matrix> m, v;
  long t = 0;
};

/// Decoupled-weight-decay Adam with bias correction.
void adam_step(Model& model, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& cfg = {});

std::vector<int> generate_greedy(const Model& model, std::span<const int> prompt,
                                 int max_new, int eos_id);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace diamt
