#include "diamt/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "diamt/tensor_io.hpp"

namespace diamt {
namespace {

constexpr double kK1 = 0.63576;
constexpr double kK2 = 1.87320;
constexpr double kK3 = 1.48695;
constexpr double kLogAlphaCeiling = 8.0;

Matrix normal_matrix(long rows, long cols, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = n01(rng);
  return m;
}

Vector softmax_vec(const Vector& v) {
  Vector e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

Vector ProbeParams::alpha() const { return softmax_vec(alpha_raw); }

void ProbeParams::validate() const {
  if (n_classes < 2) throw ConfigError("probe needs at least 2 classes");
  if (alpha_raw.size() < 1) throw ConfigError("probe alpha_raw is empty");
  const long d = mu.rows(), c = mu.cols();
  if (c != n_classes) throw ConfigError("probe mu column count != n_classes");
  for (const Matrix* m : {&sigma_raw, &mu_z, &sigma_z_raw})
    if (m->rows() != d || m->cols() != c)
      throw ConfigError("probe parameter shapes are inconsistent");
}

void ProbeConfig::validate() const {
  if (beta < 0) throw ConfigError("probe beta must be >= 0");
  if (early_stop_patience < 1) throw ConfigError("probe patience must be >= 1");
  if (epochs < 1) throw ConfigError("probe epochs must be >= 1");
  if (mc_samples < 1) throw ConfigError("probe mc_samples must be >= 1");
  if (batch_size < 1) throw ConfigError("probe batch_size must be >= 1");
}

ProbeParams init_probe(int n_layers_plus1, int d, int n_classes,
                       std::uint64_t seed) {
  if (n_layers_plus1 < 1 || d < 1 || n_classes < 2)
    throw ConfigError("invalid probe dimensions");
  Rng rng(derive_seed(seed, "probe-init"));
  ProbeParams p;
  p.alpha_raw = Vector::Zero(n_layers_plus1);
  p.mu = 0.1 * normal_matrix(d, n_classes, rng);
  p.sigma_raw = Matrix::Constant(d, n_classes, -3.0);    // softplus ~ 0.049
  p.mu_z = Matrix::Ones(d, n_classes);
  p.sigma_z_raw = Matrix::Constant(d, n_classes, -3.0);
  p.n_classes = n_classes;
  return p;
}

Matrix aggregate(const std::vector<Matrix>& layers, const ProbeParams& params) {
  if (static_cast<long>(layers.size()) != params.alpha_raw.size())
    throw ConfigError("aggregate: layer count does not match probe alpha");
  if (layers.empty()) throw ConfigError("aggregate: no layers");
  const Vector a = params.alpha();
  Matrix out = a(0) * layers[0];
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i].rows() != out.rows() || layers[i].cols() != out.cols())
      throw ConfigError("aggregate: layer shapes differ");
    out += a(static_cast<long>(i)) * layers[i];
  }
  return out;
}

Matrix aggregate(const HiddenStack& stack, const ProbeParams& params) {
  return aggregate(stack.states, params);
}

WeightSample sample_weights(const ProbeParams& params, Rng& rng) {
  const Matrix sz = params.sigma_z_raw.unaryExpr([](double x) { return softplus(x); });
  const Matrix s = params.sigma_raw.unaryExpr([](double x) { return softplus(x); });
  WeightSample ws;
  ws.eps1 = normal_matrix(params.mu.rows(), params.mu.cols(), rng);
  ws.eps2 = normal_matrix(params.mu.rows(), params.mu.cols(), rng);
  ws.z = params.mu_z + sz.cwiseProduct(ws.eps1);
  ws.w = ws.z.cwiseProduct(params.mu) +
         ws.z.cwiseAbs().cwiseProduct(s).cwiseProduct(ws.eps2);
  return ws;
}

Matrix expected_weight_matrix(const ProbeParams& params) {
  return params.mu_z.cwiseProduct(params.mu);
}

ProbeGrads zero_probe_grads(const ProbeParams& params) {
  ProbeGrads g;
  g.alpha_raw = Vector::Zero(params.alpha_raw.size());
  g.mu = Matrix::Zero(params.mu.rows(), params.mu.cols());
  g.sigma_raw = g.mu;
  g.mu_z = g.mu;
  g.sigma_z_raw = g.mu;
  return g;
}

double kl_normal_jeffreys(const ProbeParams& params, ProbeGrads* grads,
                          double grad_scale) {
  double total = 0.0;
  for (long r = 0; r < params.mu.rows(); ++r) {
    for (long c = 0; c < params.mu.cols(); ++c) {
      const double mu = params.mu(r, c);
      const double mz = params.mu_z(r, c);
      const double s = softplus(params.sigma_raw(r, c));
      const double sz = softplus(params.sigma_z_raw(r, c));
      const double mean = mz * mu;
      const double var = mu * mu * sz * sz + s * s * (mz * mz + sz * sz);
      double t;
      bool clamped = false;
      if (mean == 0.0 || var <= 0.0) {
        t = kLogAlphaCeiling;
        clamped = true;
      } else {
        t = std::log(var) - 2.0 * std::log(std::abs(mean));
        if (t > kLogAlphaCeiling) {
          t = kLogAlphaCeiling;
          clamped = true;
        }
      }
      const double sg = sigmoid(kK2 + kK3 * t);
      const double neg_kl = kK1 * sg - 0.5 * softplus(-t) - kK1;
      total -= neg_kl;
      if (grads && !clamped) {
        // KL = -neg_kl; d(neg_kl)/dt = k1 k3 sg(1-sg) + 0.5 sigmoid(-t).
        const double dkl_dt =
            -(kK1 * kK3 * sg * (1.0 - sg) + 0.5 * sigmoid(-t));
        const double dvar_dmu = 2.0 * mu * sz * sz;
        const double dvar_ds = 2.0 * s * (mz * mz + sz * sz);
        const double dvar_dmz = 2.0 * mz * s * s;
        const double dvar_dsz = 2.0 * sz * (mu * mu + s * s);
        const double dt_dmu = dvar_dmu / var - 2.0 * mz / mean;
        const double dt_ds = dvar_ds / var;
        const double dt_dmz = dvar_dmz / var - 2.0 * mu / mean;
        const double dt_dsz = dvar_dsz / var;
        grads->mu(r, c) += grad_scale * dkl_dt * dt_dmu;
        grads->mu_z(r, c) += grad_scale * dkl_dt * dt_dmz;
        grads->sigma_raw(r, c) +=
            grad_scale * dkl_dt * dt_ds * sigmoid(params.sigma_raw(r, c));
        grads->sigma_z_raw(r, c) +=
            grad_scale * dkl_dt * dt_dsz * sigmoid(params.sigma_z_raw(r, c));
      }
    }
  }
  return total;
}

double probe_loss(const std::vector<Matrix>& layers, const std::vector<int>& labels,
                  const ProbeParams& params, Rng& rng, const ProbeConfig& cfg,
                  long dataset_tokens, ProbeGrads* grads,
                  ProbeDiagnostics* diag) {
  params.validate();
  cfg.validate();
  if (labels.empty()) throw ConfigError("probe_loss: empty batch");
  if (dataset_tokens < 1) throw ConfigError("probe_loss: dataset_tokens < 1");
  const long n = static_cast<long>(labels.size());
  for (int y : labels)
    if (y < 0 || y >= params.n_classes)
      throw ConfigError("probe_loss: label out of range");

  const Matrix hp = aggregate(layers, params);
  if (hp.rows() != n) throw ConfigError("probe_loss: labels/reprs mismatch");

  const Vector a = params.alpha();
  const Matrix sig_s =
      params.sigma_raw.unaryExpr([](double x) { return sigmoid(x); });
  const Matrix sig_sz =
      params.sigma_z_raw.unaryExpr([](double x) { return sigmoid(x); });
  const Matrix s =
      params.sigma_raw.unaryExpr([](double x) { return softplus(x); });

  double ce_sum = 0.0, acc_sum = 0.0;
  Matrix dhp = Matrix::Zero(hp.rows(), hp.cols());
  const double inv = 1.0 / (n * cfg.mc_samples);
  for (int samp = 0; samp < cfg.mc_samples; ++samp) {
    const WeightSample ws = sample_weights(params, rng);
    const Matrix logits = hp * ws.w;  // n x c
    Matrix dlogits(n, params.n_classes);
    for (long r = 0; r < n; ++r) {
      const Vector row = logits.row(r).transpose();
      const Vector p = softmax_vec(row);
      ce_sum -= std::log(std::max(p(labels[r]), 1e-300)) * inv;
      Eigen::Index best;
      row.maxCoeff(&best);
      if (static_cast<int>(best) == labels[r]) acc_sum += inv * n / n;
      dlogits.row(r) = p.transpose() * inv;
      dlogits(r, labels[r]) -= inv;
    }
    if (grads) {
      const Matrix dw = hp.transpose() * dlogits;
      dhp += dlogits * ws.w.transpose();
      grads->mu += dw.cwiseProduct(ws.z);
      grads->sigma_raw += dw.cwiseProduct(ws.z.cwiseAbs())
                              .cwiseProduct(ws.eps2)
                              .cwiseProduct(sig_s);
      const Matrix sign_z = ws.z.unaryExpr(
          [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
      const Matrix dz = dw.cwiseProduct(
          params.mu + sign_z.cwiseProduct(s).cwiseProduct(ws.eps2));
      grads->mu_z += dz;
      grads->sigma_z_raw += dz.cwiseProduct(ws.eps1).cwiseProduct(sig_sz);
    }
  }
  if (grads) {
    // Chain dhp -> alpha_raw through the softmax.
    Vector da(a.size());
    for (long i = 0; i < a.size(); ++i)
      da(i) = dhp.cwiseProduct(layers[static_cast<std::size_t>(i)]).sum();
    const double dot = a.dot(da);
    grads->alpha_raw += a.cwiseProduct((da.array() - dot).matrix());
  }

  const double kl_scale = cfg.beta / static_cast<double>(dataset_tokens);
  const double kl = kl_normal_jeffreys(params, grads, kl_scale);
  const double loss = ce_sum + kl_scale * kl;
  if (diag) {
    diag->ce = ce_sum;
    diag->kl = kl;
    diag->loss = loss;
    diag->accuracy = acc_sum;  // inv already averages over samples and rows
  }
  return loss;
}

TokenReprs build_token_dataset(const Model& model,
                               const std::vector<std::vector<int>>& sentences,
                               const std::vector<int>& labels, int n_classes,
                               long max_per_class, std::uint64_t seed,
                               bool sequence_level) {
  if (sentences.size() != labels.size())
    throw ConfigError("build_token_dataset: sentence/label count mismatch");
  if (n_classes < 2) throw ConfigError("build_token_dataset: need >= 2 classes");
  const int n_layers = model.config.n_layers + 1;
  const int d = model.config.d_model;

  // Collect every candidate row first, then balance classes by subsampling.
  std::vector<Matrix> rows_by_layer(n_layers);  // each grows as n x d
  std::vector<int> row_labels;
  std::vector<std::vector<Vector>> pending(n_layers);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw ConfigError("build_token_dataset: label out of range");
    if (sentences[i].empty()) continue;
    HiddenStack stack;
    forward(model, sentences[i], {}, &stack);
    const long t = stack.states[0].rows();
    if (sequence_level) {
      for (int l = 0; l < n_layers; ++l)
        pending[l].push_back(stack.states[l].colwise().mean().transpose());
      row_labels.push_back(labels[i]);
    } else {
      for (long r = 0; r < t; ++r) {
        for (int l = 0; l < n_layers; ++l)
          pending[l].push_back(stack.states[l].row(r).transpose());
        row_labels.push_back(labels[i]);
      }
    }
  }

  std::vector<std::vector<long>> by_class(n_classes);
  for (std::size_t i = 0; i < row_labels.size(); ++i)
    by_class[row_labels[i]].push_back(static_cast<long>(i));
  long take = std::numeric_limits<long>::max();
  for (int c = 0; c < n_classes; ++c) {
    if (by_class[c].empty())
      throw ConfigError("build_token_dataset: class " + std::to_string(c) +
                        " has no examples");
    take = std::min(take, static_cast<long>(by_class[c].size()));
  }
  if (max_per_class > 0) take = std::min(take, max_per_class);

  Rng rng(derive_seed(seed, "probe-dataset"));
  std::vector<long> chosen;
  for (int c = 0; c < n_classes; ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].begin() + take);
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);

  TokenReprs out;
  out.layers.assign(n_layers, Matrix(static_cast<long>(chosen.size()), d));
  out.labels.reserve(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    for (int l = 0; l < n_layers; ++l)
      out.layers[l].row(static_cast<long>(i)) = pending[l][chosen[i]].transpose();
    out.labels.push_back(row_labels[chosen[i]]);
  }
  return out;
}

namespace {

struct ProbeAdam {
  ProbeGrads m, v;
  long t = 0;
};

void probe_adam_step(ProbeParams& params, ProbeGrads& grads, ProbeAdam& state,
                     double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (state.t == 0) {
    state.m = zero_probe_grads(params);
    state.v = zero_probe_grads(params);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto update = [&](auto& p, auto& g, auto& m, auto& v) {
    m = b1 * m + (1 - b1) * g;
    v = (b2 * v.array() + (1 - b2) * g.array().square()).matrix();
    p -= (lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps)).matrix();
  };
  update(params.alpha_raw, grads.alpha_raw, state.m.alpha_raw, state.v.alpha_raw);
  update(params.mu, grads.mu, state.m.mu, state.v.mu);
  update(params.sigma_raw, grads.sigma_raw, state.m.sigma_raw, state.v.sigma_raw);
  update(params.mu_z, grads.mu_z, state.m.mu_z, state.v.mu_z);
  update(params.sigma_z_raw, grads.sigma_z_raw, state.m.sigma_z_raw,
         state.v.sigma_z_raw);
}

std::vector<Matrix> slice_layers(const TokenReprs& data,
                                 const std::vector<long>& idx, long begin,
                                 long end) {
  std::vector<Matrix> out(data.layers.size());
  for (std::size_t l = 0; l < data.layers.size(); ++l) {
    out[l].resize(end - begin, data.layers[l].cols());
    for (long i = begin; i < end; ++i)
      out[l].row(i - begin) = data.layers[l].row(idx[i]);
  }
  return out;
}

double deterministic_loss(const TokenReprs& data, const std::vector<long>& idx,
                          long begin, long end, const ProbeParams& params,
                          double beta, long dataset_tokens) {
  const auto layers = slice_layers(data, idx, begin, end);
  const Matrix hp = aggregate(layers, params);
  const Matrix theta = expected_weight_matrix(params);
  const Matrix logits = hp * theta;
  double ce = 0;
  for (long r = 0; r < logits.rows(); ++r) {
    const Vector p = softmax_vec(logits.row(r).transpose());
    ce -= std::log(std::max(p(data.labels[idx[begin + r]]), 1e-300));
  }
  const double kl = kl_normal_jeffreys(params);
  return ce / (end - begin) + beta * kl / dataset_tokens;
}

}  // namespace

TrainedProbe train_probe(const TokenReprs& data, int n_classes, int d,
                         const ProbeConfig& cfg, const ProbeParams* init) {
  cfg.validate();
  if (data.size() < 10) throw ConfigError("train_probe: dataset too small");
  if (data.layers.empty() || data.layers[0].cols() != d)
    throw ConfigError("train_probe: dimension mismatch");

  Rng rng(derive_seed(cfg.seed, "probe-train"));
  std::vector<long> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0L);
  std::shuffle(idx.begin(), idx.end(), rng);
  const long n_val = std::max<long>(1, data.size() / 10);
  const long n_train = data.size() - n_val;
  std::vector<long> train_idx(idx.begin(), idx.begin() + n_train);
  std::vector<long> val_idx(idx.begin() + n_train, idx.end());

  ProbeParams params = init ? *init
                            : init_probe(static_cast<int>(data.layers.size()),
                                         d, n_classes, cfg.seed);
  if (init) params.validate();
  ProbeAdam adam;
  ProbeParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0, epochs_run = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ++epochs_run;
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (long b = 0; b < n_train; b += cfg.batch_size) {
      const long e = std::min(n_train, b + cfg.batch_size);
      const auto layers = slice_layers(data, train_idx, b, e);
      std::vector<int> labels;
      labels.reserve(e - b);
      for (long i = b; i < e; ++i) labels.push_back(data.labels[train_idx[i]]);
      ProbeGrads grads = zero_probe_grads(params);
      probe_loss(layers, labels, params, rng, cfg, n_train, &grads);
      probe_adam_step(params, grads, adam, cfg.lr);
    }
    const double val = deterministic_loss(data, idx, n_train, data.size(),
                                          params, cfg.beta, n_train);
    if (val < best_val - 1e-9) {
      best_val = val;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }

  TrainedProbe out;
  out.params = best;
  out.val_loss = best_val;
  out.epochs_run = epochs_run;
  TokenReprs val_set;
  val_set.layers = slice_layers(data, idx, n_train, data.size());
  for (long i = n_train; i < data.size(); ++i)
    val_set.labels.push_back(data.labels[idx[i]]);
  out.val_accuracy = probe_accuracy(val_set, best);
  return out;
}

double probe_accuracy(const TokenReprs& data, const ProbeParams& params) {
  if (data.size() == 0) throw ConfigError("probe_accuracy: empty dataset");
  const Matrix hp = aggregate(data.layers, params);
  const Matrix logits = hp * expected_weight_matrix(params);
  long hits = 0;
  for (long r = 0; r < logits.rows(); ++r) {
    Eigen::Index best;
    logits.row(r).maxCoeff(&best);
    if (static_cast<int>(best) == data.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / logits.rows();
}

CodeLength code_length(const ProbeParams& params, const TokenReprs& data,
                       double beta) {
  if (data.size() == 0) throw ConfigError("code_length: empty dataset");
  const Matrix hp = aggregate(data.layers, params);
  const Matrix logits = hp * expected_weight_matrix(params);
  double ce = 0;
  for (long r = 0; r < logits.rows(); ++r) {
    const Vector p = softmax_vec(logits.row(r).transpose());
    ce -= std::log(std::max(p(data.labels[r]), 1e-300));
  }
  CodeLength out;
  out.total_bits = (ce + beta * kl_normal_jeffreys(params)) / std::log(2.0);
  out.bits_per_token = out.total_bits / data.size();
  return out;
}

void save_probe(const ProbeParams& params, const std::string& path) {
  TensorFile f;
  f.header.set("kind", "probe");
  f.header.set("n_classes", std::to_string(params.n_classes));
  f.add("alpha_raw", params.alpha_raw.transpose());
  f.add("mu", params.mu);
  f.add("sigma_raw", params.sigma_raw);
  f.add("mu_z", params.mu_z);
  f.add("sigma_z_raw", params.sigma_z_raw);
  f.save(path);
}

ProbeParams load_probe(const std::string& path) {
  const TensorFile f = TensorFile::load(path);
  ProbeParams p;
  p.alpha_raw = f.get("alpha_raw").row(0).transpose();
  p.mu = f.get("mu");
  p.sigma_raw = f.get("sigma_raw");
  p.mu_z = f.get("mu_z");
  p.sigma_z_raw = f.get("sigma_z_raw");
  p.n_classes = static_cast<int>(f.header.get_int("n_classes", p.mu.cols()));
  p.validate();
  return p;
}

}  // namespace diamt
