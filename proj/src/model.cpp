#include "diamt/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diamt/tensor_io.hpp"

namespace diamt {
namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

// y = g .* xhat + b per row; returns xhat and per-row inverse std.
Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b,
                  Matrix& xhat, Vector& istd) {
  const long t = x.rows(), d = x.cols();
  xhat.resize(t, d);
  istd.resize(t);
  Matrix y(t, d);
  for (long r = 0; r < t; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    istd(r) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(r) = (x.row(r).array() - mean) * istd(r);
    y.row(r) = xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
  }
  return y;
}

// Backward through layer_norm; accumulates into dg/db, returns dx.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat,
                           const Vector& istd, const Matrix& g, Matrix& dg,
                           Matrix& db) {
  const long t = dy.rows(), d = dy.cols();
  Matrix dx(t, d);
  for (long r = 0; r < t; ++r) {
    dg.row(0) += dy.row(r).cwiseProduct(xhat.row(r));
    db.row(0) += dy.row(r);
    Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
    dx.row(r) =
        istd(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

Matrix gaussian(long rows, long cols, double std_dev, Rng& rng) {
  std::normal_distribution<double> g(0.0, std_dev);
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = g(rng);
  return m;
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite())
    throw RuntimeFailure(std::string("non-finite values in ") + what);
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
      vocab_size <= 0)
    throw ConfigError("model config: all dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("model config: d_model must be divisible by n_heads");
  if (max_seq_len < 2)
    throw ConfigError("model config: max_seq_len must be >= 2");
}

Model::Model(const ModelConfig& cfg) : config(cfg) {
  cfg.validate();
  const int d = cfg.d_model, ff = cfg.d_ff, v = cfg.vocab_size,
            s = cfg.max_seq_len;
  params.blocks.resize(cfg.n_layers);
  // Allocate in visit order, then fill deterministically in the same order.
  params.tok_emb.resize(v, d);
  params.pos_emb.resize(s, d);
  for (auto& b : params.blocks) {
    b.ln1_g = Matrix::Ones(1, d); b.ln1_b = Matrix::Zero(1, d);
    b.wq.resize(d, d); b.bq = Matrix::Zero(1, d);
    b.wk.resize(d, d); b.bk = Matrix::Zero(1, d);
    b.wv.resize(d, d); b.bv = Matrix::Zero(1, d);
    b.wo.resize(d, d); b.bo = Matrix::Zero(1, d);
    b.ln2_g = Matrix::Ones(1, d); b.ln2_b = Matrix::Zero(1, d);
    b.w1.resize(d, ff); b.b1 = Matrix::Zero(1, ff);
    b.w2.resize(ff, d); b.b2 = Matrix::Zero(1, d);
  }
  params.lnf_g = Matrix::Ones(1, d);
  params.lnf_b = Matrix::Zero(1, d);
  params.w_out.resize(d, v);
  params.b_out = Matrix::Zero(1, v);

  Rng rng(derive_seed(cfg.seed, "model-init"));
  params.visit([&](const std::string& name, Matrix& m) {
    // Weight matrices and embeddings are Gaussian; biases and LN affines
    // keep their zero/one initialization.
    const bool is_weight = name.find("_g") == std::string::npos &&
                           name.find("_b") == std::string::npos &&
                           name.find(".b") == std::string::npos &&
                           name != "b_out";
    if (is_weight || name == "tok_emb" || name == "pos_emb")
      m = gaussian(m.rows(), m.cols(), kInitStd, rng);
  });
}

long Model::param_count() const {
  long n = 0;
  params.visit([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  params.visit([&](const std::string&, const Matrix& m) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(m.data());
    for (long i = 0; i < m.size() * static_cast<long>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

Gradients zero_gradients(const Model& model) {
  Gradients g = model.params;
  g.visit([](const std::string&, Matrix& m) { m.setZero(); });
  return g;
}

void accumulate(Gradients& acc, const Gradients& g) {
  std::vector<const Matrix*> src;
  g.visit([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  acc.visit([&](const std::string&, Matrix& m) { m += *src[i++]; });
}

void scale_gradients(Gradients& g, double factor) {
  g.visit([&](const std::string&, Matrix& m) { m *= factor; });
}

Matrix forward(const Model& model, std::span<const int> ids,
               std::span<const std::uint8_t> mask, HiddenStack* stack,
               ForwardCache* cache) {
  const ModelConfig& cfg = model.config;
  const ModelParams& p = model.params;
  const long t = static_cast<long>(ids.size());
  if (t == 0) throw ConfigError("forward: empty sequence");
  if (t > cfg.max_seq_len)
    throw ConfigError("forward: sequence length " + std::to_string(t) +
                      " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw ConfigError("forward: token id out of range: " + std::to_string(id));
  if (!mask.empty() && static_cast<long>(mask.size()) != t)
    throw ConfigError("forward: mask length mismatch");

  const int d = cfg.d_model, nh = cfg.n_heads, dh = d / nh;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(t, d);
  for (long r = 0; r < t; ++r)
    x.row(r) = p.tok_emb.row(ids[r]) + p.pos_emb.row(r);

  if (stack) {
    stack->states.clear();
    stack->states.reserve(cfg.n_layers + 1);
    stack->states.push_back(x);
    stack->mask = mask.empty()
                      ? std::vector<std::uint8_t>(t, 1)
                      : std::vector<std::uint8_t>(mask.begin(), mask.end());
  }
  if (cache) {
    cache->ids.assign(ids.begin(), ids.end());
    cache->x0 = x;
    cache->blocks.assign(cfg.n_layers, BlockCache{});
  }

  for (int bi = 0; bi < cfg.n_layers; ++bi) {
    const BlockParams& b = p.blocks[bi];
    BlockCache local;
    BlockCache& c = cache ? cache->blocks[bi] : local;
    c.x_in = x;
    c.n1 = layer_norm(x, b.ln1_g, b.ln1_b, c.n1_hat, c.ln1_istd);
    c.q = (c.n1 * b.wq).rowwise() + b.bq.row(0);
    c.k = (c.n1 * b.wk).rowwise() + b.bk.row(0);
    c.v = (c.n1 * b.wv).rowwise() + b.bv.row(0);
    c.ctx.resize(t, d);
    c.probs.assign(nh, Matrix());
    for (int h = 0; h < nh; ++h) {
      auto qh = c.q.middleCols(h * dh, dh);
      auto kh = c.k.middleCols(h * dh, dh);
      auto vh = c.v.middleCols(h * dh, dh);
      Matrix scores = qh * kh.transpose() * scale;
      Matrix& probs = c.probs[h];
      probs = Matrix::Zero(t, t);
      for (long r = 0; r < t; ++r) {
        // Causal: row r attends to columns 0..r.
        const long n = r + 1;
        const double mx = scores.row(r).head(n).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(r).head(n).array() - mx).exp();
        probs.row(r).head(n) = e / e.sum();
      }
      c.ctx.middleCols(h * dh, dh) = probs * vh;
    }
    Matrix att = (c.ctx * b.wo).rowwise() + b.bo.row(0);
    c.x_mid = c.x_in + att;
    c.n2 = layer_norm(c.x_mid, b.ln2_g, b.ln2_b, c.n2_hat, c.ln2_istd);
    c.u = (c.n2 * b.w1).rowwise() + b.b1.row(0);
    c.gact = c.u.unaryExpr([](double v) { return gelu(v); });
    Matrix f = (c.gact * b.w2).rowwise() + b.b2.row(0);
    x = c.x_mid + f;
    if (stack) stack->states.push_back(x);
  }

  Matrix yf_hat;
  Vector lnf_istd;
  Matrix yf = layer_norm(x, p.lnf_g, p.lnf_b, yf_hat, lnf_istd);
  if (cache) {
    cache->yf_hat = yf_hat;
    cache->yf = yf;
    cache->lnf_istd = lnf_istd;
  }
  Matrix logits = (yf * p.w_out).rowwise() + p.b_out.row(0);
  return logits;
}

double lm_loss(const Matrix& logits, std::span<const int> targets,
               std::span<const std::uint8_t> loss_mask) {
  const long t = logits.rows();
  if (static_cast<long>(targets.size()) != t ||
      static_cast<long>(loss_mask.size()) != t)
    throw ConfigError("lm_loss: length mismatch");
  double total = 0;
  long n = 0;
  for (long r = 0; r < t; ++r) {
    if (!loss_mask[r]) continue;
    const int y = targets[r];
    if (y < 0 || y >= logits.cols())
      throw ConfigError("lm_loss: target id out of range");
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += lse - logits(r, y);
    ++n;
  }
  if (n == 0) throw ConfigError("lm_loss: empty loss mask");
  return total / n;
}

Matrix lm_loss_grad(const Matrix& logits, std::span<const int> targets,
                    std::span<const std::uint8_t> loss_mask) {
  const long t = logits.rows();
  long n = 0;
  for (long r = 0; r < t; ++r)
    if (loss_mask[r]) ++n;
  if (n == 0) throw ConfigError("lm_loss_grad: empty loss mask");
  Matrix d = Matrix::Zero(t, logits.cols());
  for (long r = 0; r < t; ++r) {
    if (!loss_mask[r]) continue;
    const double mx = logits.row(r).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
    d.row(r) = e / e.sum();
    d(r, targets[r]) -= 1.0;
    d.row(r) /= static_cast<double>(n);
  }
  return d;
}

Gradients backward(const Model& model, const ForwardCache& cache,
                   const Matrix& d_logits,
                   const std::vector<Matrix>* d_hidden) {
  const ModelConfig& cfg = model.config;
  const ModelParams& p = model.params;
  check_finite(d_logits, "d_logits");
  if (d_hidden && static_cast<int>(d_hidden->size()) != cfg.n_layers + 1)
    throw ConfigError("backward: d_hidden must have n_layers + 1 entries");

  const long t = d_logits.rows();
  const int d = cfg.d_model, nh = cfg.n_heads, dh = d / nh;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Gradients g = zero_gradients(model);

  g.w_out = cache.yf.transpose() * d_logits;
  g.b_out.row(0) = d_logits.colwise().sum();
  Matrix dyf = d_logits * p.w_out.transpose();
  Matrix dx = layer_norm_backward(dyf, cache.yf_hat, cache.lnf_istd, p.lnf_g,
                                  g.lnf_g, g.lnf_b);
  if (d_hidden && (*d_hidden)[cfg.n_layers].size() > 0)
    dx += (*d_hidden)[cfg.n_layers];

  for (int bi = cfg.n_layers - 1; bi >= 0; --bi) {
    const BlockParams& b = p.blocks[bi];
    const BlockCache& c = cache.blocks[bi];
    BlockParams& gb = g.blocks[bi];

    // Feed-forward branch.
    const Matrix& df = dx;
    gb.w2 += c.gact.transpose() * df;
    gb.b2.row(0) += df.colwise().sum();
    Matrix dgact = df * b.w2.transpose();
    Matrix du =
        dgact.cwiseProduct(c.u.unaryExpr([](double v) { return gelu_grad(v); }));
    gb.w1 += c.n2.transpose() * du;
    gb.b1.row(0) += du.colwise().sum();
    Matrix dn2 = du * b.w1.transpose();
    Matrix dx_mid =
        dx + layer_norm_backward(dn2, c.n2_hat, c.ln2_istd, b.ln2_g, gb.ln2_g,
                                 gb.ln2_b);

    // Attention branch.
    const Matrix& datt = dx_mid;
    gb.wo += c.ctx.transpose() * datt;
    gb.bo.row(0) += datt.colwise().sum();
    Matrix dctx = datt * b.wo.transpose();
    Matrix dq(t, d), dk(t, d), dv(t, d);
    for (int h = 0; h < nh; ++h) {
      auto dch = dctx.middleCols(h * dh, dh);
      auto qh = c.q.middleCols(h * dh, dh);
      auto kh = c.k.middleCols(h * dh, dh);
      auto vh = c.v.middleCols(h * dh, dh);
      const Matrix& probs = c.probs[h];
      dv.middleCols(h * dh, dh) = probs.transpose() * dch;
      Matrix dp = dch * vh.transpose();
      Matrix ds(t, t);
      for (long r = 0; r < t; ++r) {
        const double dot = dp.row(r).cwiseProduct(probs.row(r)).sum();
        ds.row(r) =
            probs.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
      }
      dq.middleCols(h * dh, dh) = ds * kh * scale;
      dk.middleCols(h * dh, dh) = ds.transpose() * qh * scale;
    }
    gb.wq += c.n1.transpose() * dq;
    gb.bq.row(0) += dq.colwise().sum();
    gb.wk += c.n1.transpose() * dk;
    gb.bk.row(0) += dk.colwise().sum();
    gb.wv += c.n1.transpose() * dv;
    gb.bv.row(0) += dv.colwise().sum();
    Matrix dn1 =
        dq * b.wq.transpose() + dk * b.wk.transpose() + dv * b.wv.transpose();
    dx = dx_mid + layer_norm_backward(dn1, c.n1_hat, c.ln1_istd, b.ln1_g,
                                      gb.ln1_g, gb.ln1_b);
    if (d_hidden && (*d_hidden)[bi].size() > 0) dx += (*d_hidden)[bi];
  }

  for (long r = 0; r < t; ++r) {
    g.tok_emb.row(cache.ids[r]) += dx.row(r);
    g.pos_emb.row(r) += dx.row(r);
  }
  return g;
}

void adam_step(Model& model, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& cfg) {
  std::vector<const Matrix*> gs;
  grads.visit([&](const std::string& name, const Matrix& m) {
    if (!m.allFinite())
      throw RuntimeFailure("adam_step: non-finite gradient in " + name);
    gs.push_back(&m);
  });
  if (state.m.empty()) {
    for (const Matrix* g : gs) {
      state.m.push_back(Matrix::Zero(g->rows(), g->cols()));
      state.v.push_back(Matrix::Zero(g->rows(), g->cols()));
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.t);
  std::size_t i = 0;
  model.params.visit([&](const std::string&, Matrix& w) {
    const Matrix& g = *gs[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Matrix mhat = m / bc1;
    const Matrix vhat = v / bc2;
    // Decoupled weight decay.
    if (cfg.weight_decay != 0.0) w -= lr * cfg.weight_decay * w;
    w -= lr * mhat.cwiseQuotient(
                  (vhat.cwiseSqrt().array() + cfg.eps).matrix());
    ++i;
  });
}

std::vector<int> generate_greedy(const Model& model, std::span<const int> prompt,
                                 int max_new, int eos_id) {
  if (static_cast<int>(prompt.size()) + max_new > model.config.max_seq_len)
    throw ConfigError("generate_greedy: prompt + max_new exceeds max_seq_len");
  std::vector<int> ids(prompt.begin(), prompt.end());
  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    Matrix logits = forward(model, ids);
    Eigen::Index best;
    logits.row(logits.rows() - 1).maxCoeff(&best);
    const int next = static_cast<int>(best);
    if (next == eos_id) break;
    out.push_back(next);
    ids.push_back(next);
  }
  return out;
}

void save_checkpoint(const Model& model, const std::string& path) {
  TensorFile file;
  file.header.set("kind", "model");
  file.header.set("d_model", std::to_string(model.config.d_model));
  file.header.set("n_layers", std::to_string(model.config.n_layers));
  file.header.set("n_heads", std::to_string(model.config.n_heads));
  file.header.set("d_ff", std::to_string(model.config.d_ff));
  file.header.set("vocab_size", std::to_string(model.config.vocab_size));
  file.header.set("max_seq_len", std::to_string(model.config.max_seq_len));
  file.header.set("seed", std::to_string(model.config.seed));
  model.params.visit(
      [&](const std::string& name, const Matrix& m) { file.add(name, m); });
  file.save(path);
}

Model load_checkpoint(const std::string& path) {
  TensorFile file = TensorFile::load(path);
  if (file.header.get_string("kind", "") != "model")
    throw ConfigError(path + ": not a model checkpoint");
  ModelConfig cfg;
  cfg.d_model = static_cast<int>(file.header.get_int("d_model"));
  cfg.n_layers = static_cast<int>(file.header.get_int("n_layers"));
  cfg.n_heads = static_cast<int>(file.header.get_int("n_heads"));
  cfg.d_ff = static_cast<int>(file.header.get_int("d_ff"));
  cfg.vocab_size = static_cast<int>(file.header.get_int("vocab_size"));
  cfg.max_seq_len = static_cast<int>(file.header.get_int("max_seq_len"));
  cfg.seed = static_cast<std::uint64_t>(file.header.get_int("seed", 0));
  Model model(cfg);
  model.params.visit([&](const std::string& name, Matrix& m) {
    const Matrix& src = file.get(name);
    if (src.rows() != m.rows() || src.cols() != m.cols())
      throw ConfigError(path + ": shape mismatch for tensor " + name);
    m = src;
  });
  return model;
}

}  // namespace diamt
