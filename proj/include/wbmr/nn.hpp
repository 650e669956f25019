#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "wbmr/common.hpp"
#include "wbmr/errors.hpp"
#include "wbmr/rng.hpp"

namespace wbmr {

// Reverse-mode building blocks. Everything is double precision and
// single-threaded; layers cache their last forward pass, so the usage
// pattern is strictly forward-then-backward per clip. Gradients accumulate
// across calls until ParamStore::zero_grad.

// ── parameters ────────────────────────────────────────────────────────────

struct Param {
  std::string name;
  MatX value;
  MatX grad;

  int64_t size() const { return value.size(); }
};

// Named parameter arrays in registration order. The order defines both the
// flat index space used by finite-difference checks and the checkpoint
// layout.
class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Param& at(const std::string& name);

  const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
  int64_t total_size() const;

  // Flat view over all parameters (registration order, column-major within
  // each array): lets tests nudge single weights generically.
  double get_flat(int64_t i) const;
  void set_flat(int64_t i, double v);
  double grad_flat(int64_t i) const;

  void zero_grad();
  void copy_values_from(const ParamStore& other);  // must have equal layout

 private:
  std::pair<Param*, int64_t> locate(int64_t i) const;

  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, size_t> index_;
};

// ── activations ───────────────────────────────────────────────────────────

// Exact (erf-based) smooth gate.
MatX gelu(const MatX& x);
MatX gelu_backward(const MatX& x, const MatX& d_y);

MatX sigmoid(const MatX& x);
MatX sigmoid_backward(const MatX& y, const MatX& d_y);  // takes forward output

// ── layers ────────────────────────────────────────────────────────────────

// y = W x + b, applied column-wise to an in×N matrix.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng);

  MatX forward(const MatX& x);
  MatX backward(const MatX& d_y);

  Param& weight() { return *w_; }
  Param& bias() { return *b_; }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
  MatX x_;
};

// Two affine maps around one smooth gate; the gate can be bypassed so the
// whole map turns exactly linear (used by additivity tests).
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(ParamStore& store, const std::string& prefix, int in, int hidden, int out, Rng& rng);

  MatX forward(const MatX& x, bool linear_mode = false);
  MatX backward(const MatX& d_y);

 private:
  Linear l1_, l2_;
  MatX pre_;
  bool linear_ = false;
};

// Feature-wise normalization of each column to zero mean / unit variance,
// then a learned affine.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& prefix, int dim);

  MatX forward(const MatX& x);
  MatX backward(const MatX& d_y);

  static constexpr double kEps = 1e-5;

 private:
  Param* gamma_ = nullptr;
  Param* beta_ = nullptr;
  MatX xhat_;
  VecX inv_std_;
};

// ── attention ─────────────────────────────────────────────────────────────

// Multi-head self-attention over a d×T sequence with two properties the
// tests rely on:
//  * positions enter only through a rotary phase on queries/keys, so scores
//    depend on the frame gap i-j, never on absolute time;
//  * each query attends to the closed window |i-j| <= window/2 and the
//    softmax is computed over that window alone, so frames outside it have
//    exactly zero influence (bitwise).
class RotaryWindowedAttention {
 public:
  RotaryWindowedAttention() = default;
  RotaryWindowedAttention(ParamStore& store, const std::string& prefix, int dim, int heads,
                          double window, Rng& rng);

  MatX forward(const MatX& x);
  MatX backward(const MatX& d_y);

  static constexpr double kRotaryBase = 10000.0;

 private:
  void rotate(Eigen::Ref<MatX> m, double sign) const;  // per-column rotary phase

  int dim_ = 0, heads_ = 0, head_dim_ = 0;
  double window_ = 0;
  Linear q_, k_, v_, o_;
  MatX q_rot_, k_rot_, v_val_, concat_;
  std::vector<MatX> probs_;  // per head, probs_[h](j, i) = attention i <- j
};

// Pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& prefix, int dim, int heads,
                   double window, Rng& rng);

  MatX forward(const MatX& x);
  MatX backward(const MatX& d_y);

 private:
  LayerNorm ln1_, ln2_;
  RotaryWindowedAttention attn_;
  Linear ff1_, ff2_;
  MatX ff_pre_;
};

// L blocks plus a closing normalization.
class TemporalEncoder {
 public:
  TemporalEncoder() = default;
  TemporalEncoder(ParamStore& store, const std::string& prefix, int dim, int layers, int heads,
                  double window, Rng& rng);

  MatX forward(const MatX& x);
  MatX backward(const MatX& d_y);

 private:
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_ln_;
};

// ── optimization ──────────────────────────────────────────────────────────

class Adam {
 public:
  explicit Adam(ParamStore& store, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(double lr);

 private:
  ParamStore* store_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<MatX> m_, v_;
};

// Exponential moving average of parameter values; `alpha` is the per-step
// pull toward the live weights (shadow += alpha * (value - shadow)).
class Ema {
 public:
  explicit Ema(const ParamStore& store);

  void update(const ParamStore& store, double alpha);
  void write_to(ParamStore& store) const;

 private:
  std::vector<MatX> shadow_;
};

}  // namespace wbmr
