#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "layoutgraph/autograd.hpp"
#include "layoutgraph/error.hpp"
#include "layoutgraph/rng.hpp"

namespace layoutgraph::nn {

using ad::Matrix;
using ad::Var;

// Named trainable parameters in registration order. Names are unique and
// stable, so checkpoints and optimizer state can address them directly.
class ParamStore {
public:
  Var create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw Error("internal", "duplicate parameter name: " + name);
    auto v = ad::make_var(Matrix::Zero(rows, cols), true);
    index_[name] = params_.size();
    params_.push_back(v);
    names_.push_back(name);
    return v;
  }

  Var get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("internal", "unknown parameter: " + name);
    return params_[it->second];
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Var>& params() const { return params_; }
  const std::vector<std::string>& names() const { return names_; }

  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_) {
      if (p->grad.size() == p->value.size()) s += p->grad.squaredNorm();
    }
    return std::sqrt(s);
  }

  double param_norm() const {
    double s = 0.0;
    for (const auto& p : params_) s += p->value.squaredNorm();
    return std::sqrt(s);
  }

private:
  std::vector<Var> params_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

inline void init_uniform(const Var& p, double lo, double hi, Rng& rng) {
  for (Eigen::Index i = 0; i < p->value.rows(); ++i)
    for (Eigen::Index j = 0; j < p->value.cols(); ++j) p->value(i, j) = rng.uniform(lo, hi);
}

// Affine layer with the usual fan-in uniform init U(-1/sqrt(in), 1/sqrt(in)).
class Linear {
public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         Rng& rng) {
    weight_ = store.create(name + ".weight", in, out);
    bias_ = store.create(name + ".bias", 1, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(weight_, -bound, bound, rng);
    init_uniform(bias_, -bound, bound, rng);
  }

  Var forward(const Var& x) const { return ad::add_rowvec(ad::matmul(x, weight_), bias_); }

  Eigen::Index in_features() const { return weight_->value.rows(); }
  Eigen::Index out_features() const { return weight_->value.cols(); }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

private:
  Var weight_;
  Var bias_;
};

class LayerNorm {
public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim) {
    gamma_ = store.create(name + ".gamma", 1, dim);
    beta_ = store.create(name + ".beta", 1, dim);
    gamma_->value.setOnes();
    beta_->value.setZero();
  }

  Var forward(const Var& x) const { return ad::layer_norm(x, gamma_, beta_); }

private:
  Var gamma_;
  Var beta_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a ParamStore. Moment buffers are keyed by parameter name so the
// full optimizer state can round-trip through checkpoints.
class Adam {
public:
  explicit Adam(const ParamStore& store, AdamConfig config = {})
      : store_(&store), config_(config) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& p = store.params()[i];
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store_->size(); ++i) {
      auto& p = store_->params()[i];
      if (p->grad.size() != p->value.size()) continue;
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p->grad;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p->grad.cwiseProduct(p->grad);
      const Matrix mhat = m_[i] / bc1;
      const Matrix vhat = v_[i] / bc2;
      p->value -= config_.lr * (mhat.array() / (vhat.array().sqrt() + config_.eps)).matrix();
    }
  }

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }

private:
  const ParamStore* store_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

}  // namespace layoutgraph::nn
