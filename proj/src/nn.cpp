#include "wbmr/nn.hpp"

#include <cmath>
#include <limits>

namespace wbmr {

// ── ParamStore ────────────────────────────────────────────────────────────

Param& ParamStore::add(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = MatX::Zero(rows, cols);
  p->grad = MatX::Zero(rows, cols);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Param* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Param& ParamStore::at(const std::string& name) {
  Param* p = find(name);
  if (!p) throw ConfigError("unknown parameter: " + name);
  return *p;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

std::pair<Param*, int64_t> ParamStore::locate(int64_t i) const {
  for (const auto& p : params_) {
    if (i < p->size()) return {p.get(), i};
    i -= p->size();
  }
  throw ConfigError("flat parameter index out of range");
}

double ParamStore::get_flat(int64_t i) const {
  auto [p, off] = locate(i);
  return p->value.data()[off];
}

void ParamStore::set_flat(int64_t i, double v) {
  auto [p, off] = locate(i);
  p->value.data()[off] = v;
}

double ParamStore::grad_flat(int64_t i) const {
  auto [p, off] = locate(i);
  return p->grad.data()[off];
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.params_.size() != params_.size()) {
    throw ConfigError("parameter stores have different layouts");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i]->value.rows() != other.params_[i]->value.rows() ||
        params_[i]->value.cols() != other.params_[i]->value.cols()) {
      throw ConfigError("parameter shape mismatch at " + params_[i]->name);
    }
    params_[i]->value = other.params_[i]->value;
  }
}

// ── activations ───────────────────────────────────────────────────────────

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

MatX gelu(const MatX& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
}

MatX gelu_backward(const MatX& x, const MatX& d_y) {
  MatX d = x.unaryExpr([](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return cdf + v * pdf;
  });
  return d.cwiseProduct(d_y);
}

MatX sigmoid(const MatX& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

MatX sigmoid_backward(const MatX& y, const MatX& d_y) {
  return d_y.cwiseProduct(y.cwiseProduct(MatX::Ones(y.rows(), y.cols()) - y));
}

// ── Linear ────────────────────────────────────────────────────────────────

Linear::Linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng) {
  w_ = &store.add(prefix + ".weight", out, in);
  b_ = &store.add(prefix + ".bias", out, 1);
  const double scale = std::sqrt(2.0 / (in + out));
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) w_->value(r, c) = rng.gaussian() * scale;
  }
}

MatX Linear::forward(const MatX& x) {
  x_ = x;
  return (w_->value * x).colwise() + b_->value.col(0);
}

MatX Linear::backward(const MatX& d_y) {
  w_->grad.noalias() += d_y * x_.transpose();
  b_->grad.col(0).noalias() += d_y.rowwise().sum();
  return w_->value.transpose() * d_y;
}

// ── Mlp2 ──────────────────────────────────────────────────────────────────

Mlp2::Mlp2(ParamStore& store, const std::string& prefix, int in, int hidden, int out,
           Rng& rng)
    : l1_(store, prefix + ".l1", in, hidden, rng), l2_(store, prefix + ".l2", hidden, out, rng) {}

MatX Mlp2::forward(const MatX& x, bool linear_mode) {
  linear_ = linear_mode;
  pre_ = l1_.forward(x);
  return l2_.forward(linear_ ? pre_ : gelu(pre_));
}

MatX Mlp2::backward(const MatX& d_y) {
  MatX d_mid = l2_.backward(d_y);
  if (!linear_) d_mid = gelu_backward(pre_, d_mid);
  return l1_.backward(d_mid);
}

// ── LayerNorm ─────────────────────────────────────────────────────────────

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, int dim) {
  gamma_ = &store.add(prefix + ".gamma", dim, 1);
  beta_ = &store.add(prefix + ".beta", dim, 1);
  gamma_->value.setOnes();
}

MatX LayerNorm::forward(const MatX& x) {
  const int d = static_cast<int>(x.rows());
  const int n = static_cast<int>(x.cols());
  xhat_.resize(d, n);
  inv_std_.resize(n);
  for (int c = 0; c < n; ++c) {
    const double mu = x.col(c).mean();
    const double var = (x.col(c).array() - mu).square().sum() / d;
    inv_std_[c] = 1.0 / std::sqrt(var + kEps);
    xhat_.col(c) = (x.col(c).array() - mu) * inv_std_[c];
  }
  return ((xhat_.array().colwise() * gamma_->value.col(0).array()).colwise() +
          beta_->value.col(0).array())
      .matrix();
}

MatX LayerNorm::backward(const MatX& d_y) {
  const int d = static_cast<int>(d_y.rows());
  const int n = static_cast<int>(d_y.cols());
  gamma_->grad.col(0).noalias() += d_y.cwiseProduct(xhat_).rowwise().sum();
  beta_->grad.col(0).noalias() += d_y.rowwise().sum();
  MatX d_x(d, n);
  for (int c = 0; c < n; ++c) {
    const VecX dxh = d_y.col(c).cwiseProduct(gamma_->value.col(0));
    const double m1 = dxh.mean();
    const double m2 = dxh.cwiseProduct(xhat_.col(c)).mean();
    d_x.col(c) = inv_std_[c] * (dxh.array() - m1 - xhat_.col(c).array() * m2);
  }
  return d_x;
}

// ── RotaryWindowedAttention ───────────────────────────────────────────────

RotaryWindowedAttention::RotaryWindowedAttention(ParamStore& store, const std::string& prefix,
                                                 int dim, int heads, double window, Rng& rng)
    : dim_(dim), heads_(heads), head_dim_(dim / heads), window_(window),
      q_(store, prefix + ".q", dim, dim, rng),
      k_(store, prefix + ".k", dim, dim, rng),
      v_(store, prefix + ".v", dim, dim, rng),
      o_(store, prefix + ".o", dim, dim, rng) {
  if (dim % heads != 0) throw ConfigError("attention width must divide evenly into heads");
  if (head_dim_ % 2 != 0) throw ConfigError("attention head width must be even");
  if (window < 1) throw ConfigError("attention window must be at least one frame");
}

void RotaryWindowedAttention::rotate(Eigen::Ref<MatX> m, double sign) const {
  const int T = static_cast<int>(m.cols());
  const int pairs = head_dim_ / 2;
  for (int t = 0; t < T; ++t) {
    for (int h = 0; h < heads_; ++h) {
      for (int p = 0; p < pairs; ++p) {
        const double omega =
            std::pow(kRotaryBase, -2.0 * p / static_cast<double>(head_dim_));
        const double theta = sign * t * omega;
        const double c = std::cos(theta), s = std::sin(theta);
        const int r = h * head_dim_ + 2 * p;
        const double a = m(r, t), b = m(r + 1, t);
        m(r, t) = a * c - b * s;
        m(r + 1, t) = a * s + b * c;
      }
    }
  }
}

MatX RotaryWindowedAttention::forward(const MatX& x) {
  const int T = static_cast<int>(x.cols());
  q_rot_ = q_.forward(x);
  k_rot_ = k_.forward(x);
  v_val_ = v_.forward(x);
  rotate(q_rot_, +1.0);
  rotate(k_rot_, +1.0);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  const double half = window_ / 2.0;
  concat_.setZero(dim_, T);
  probs_.assign(heads_, MatX::Zero(T, T));

  for (int h = 0; h < heads_; ++h) {
    const auto Q = q_rot_.middleRows(h * head_dim_, head_dim_);
    const auto K = k_rot_.middleRows(h * head_dim_, head_dim_);
    const auto V = v_val_.middleRows(h * head_dim_, head_dim_);
    MatX& P = probs_[h];
    for (int i = 0; i < T; ++i) {
      const int lo = std::max(0, static_cast<int>(std::ceil(i - half)));
      const int hi = std::min(T - 1, static_cast<int>(std::floor(i + half)));
      // Softmax over the window only: frames beyond it carry exact zeros.
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = lo; j <= hi; ++j) {
        mx = std::max(mx, Q.col(i).dot(K.col(j)) * inv_sqrt);
      }
      double sum = 0.0;
      for (int j = lo; j <= hi; ++j) {
        const double e = std::exp(Q.col(i).dot(K.col(j)) * inv_sqrt - mx);
        P(j, i) = e;
        sum += e;
      }
      for (int j = lo; j <= hi; ++j) {
        P(j, i) /= sum;
        concat_.col(i).segment(h * head_dim_, head_dim_) += P(j, i) * V.col(j);
      }
    }
  }
  return o_.forward(concat_);
}

MatX RotaryWindowedAttention::backward(const MatX& d_y) {
  const int T = static_cast<int>(d_y.cols());
  const MatX d_concat = o_.backward(d_y);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  const double half = window_ / 2.0;

  MatX d_q = MatX::Zero(dim_, T), d_k = MatX::Zero(dim_, T), d_v = MatX::Zero(dim_, T);
  for (int h = 0; h < heads_; ++h) {
    const auto Q = q_rot_.middleRows(h * head_dim_, head_dim_);
    const auto K = k_rot_.middleRows(h * head_dim_, head_dim_);
    const auto V = v_val_.middleRows(h * head_dim_, head_dim_);
    auto dQ = d_q.middleRows(h * head_dim_, head_dim_);
    auto dK = d_k.middleRows(h * head_dim_, head_dim_);
    auto dV = d_v.middleRows(h * head_dim_, head_dim_);
    const MatX& P = probs_[h];
    for (int i = 0; i < T; ++i) {
      const int lo = std::max(0, static_cast<int>(std::ceil(i - half)));
      const int hi = std::min(T - 1, static_cast<int>(std::floor(i + half)));
      const auto d_out = d_concat.col(i).segment(h * head_dim_, head_dim_);
      double dot = 0.0;  // sum_k p_k * d_p_k for the softmax jacobian
      VecX d_p(hi - lo + 1);
      for (int j = lo; j <= hi; ++j) {
        d_p[j - lo] = V.col(j).dot(d_out);
        dV.col(j) += P(j, i) * d_out;
        dot += P(j, i) * d_p[j - lo];
      }
      for (int j = lo; j <= hi; ++j) {
        const double d_s = P(j, i) * (d_p[j - lo] - dot) * inv_sqrt;
        dQ.col(i) += d_s * K.col(j);
        dK.col(j) += d_s * Q.col(i);
      }
    }
  }
  rotate(d_q, -1.0);
  rotate(d_k, -1.0);
  return q_.backward(d_q) + k_.backward(d_k) + v_.backward(d_v);
}

// ── TransformerBlock ──────────────────────────────────────────────────────

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& prefix, int dim,
                                   int heads, double window, Rng& rng)
    : ln1_(store, prefix + ".ln1", dim),
      ln2_(store, prefix + ".ln2", dim),
      attn_(store, prefix + ".attn", dim, heads, window, rng),
      ff1_(store, prefix + ".ff1", dim, 4 * dim, rng),
      ff2_(store, prefix + ".ff2", 4 * dim, dim, rng) {}

MatX TransformerBlock::forward(const MatX& x) {
  const MatX x1 = x + attn_.forward(ln1_.forward(x));
  ff_pre_ = ff1_.forward(ln2_.forward(x1));
  return x1 + ff2_.forward(gelu(ff_pre_));
}

MatX TransformerBlock::backward(const MatX& d_y) {
  MatX d_x1 = d_y;
  d_x1 += ln2_.backward(ff1_.backward(gelu_backward(ff_pre_, ff2_.backward(d_y))));
  MatX d_x = d_x1;
  d_x += ln1_.backward(attn_.backward(d_x1));
  return d_x;
}

// ── TemporalEncoder ───────────────────────────────────────────────────────

TemporalEncoder::TemporalEncoder(ParamStore& store, const std::string& prefix, int dim,
                                 int layers, int heads, double window, Rng& rng) {
  blocks_.reserve(layers);
  for (int l = 0; l < layers; ++l) {
    blocks_.emplace_back(store, prefix + ".block" + std::to_string(l), dim, heads, window, rng);
  }
  final_ln_ = LayerNorm(store, prefix + ".final_ln", dim);
}

MatX TemporalEncoder::forward(const MatX& x) {
  MatX h = x;
  for (auto& b : blocks_) h = b.forward(h);
  return final_ln_.forward(h);
}

MatX TemporalEncoder::backward(const MatX& d_y) {
  MatX d = final_ln_.backward(d_y);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
  return d;
}

// ── Adam ──────────────────────────────────────────────────────────────────

Adam::Adam(ParamStore& store, double beta1, double beta2, double eps)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.all()) {
    m_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto& params = store_->all();
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const MatX mhat = m_[i] / bc1;
    const MatX vhat = v_[i] / bc2;
    p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

// ── Ema ───────────────────────────────────────────────────────────────────

Ema::Ema(const ParamStore& store) {
  for (const auto& p : store.all()) shadow_.push_back(p->value);
}

void Ema::update(const ParamStore& store, double alpha) {
  const auto& params = store.all();
  for (size_t i = 0; i < params.size(); ++i) {
    shadow_[i] += alpha * (params[i]->value - shadow_[i]);
  }
}

void Ema::write_to(ParamStore& store) const {
  const auto& params = store.all();
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = shadow_[i];
}

}  // namespace wbmr
