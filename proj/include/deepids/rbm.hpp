// Restricted Boltzmann machines: a Gaussian-visible variant (GRBM) for the
// real-valued input layer and the binary variant for the stacked layers.
// Both are trained by k-step contrastive divergence. Batches are row-major:
// V is (samples x visible units), hidden activations (samples x hidden).
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "deepids/error.hpp"

namespace deepids {

using Rng = std::mt19937_64;

namespace detail {

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Eigen::MatrixXd sigmoid(Eigen::MatrixXd m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = sigmoid(m(i, j));
  return m;
}

}  // namespace detail

// Gaussian-Bernoulli RBM. sigma holds the per-unit visible noise scale; it
// is fixed at construction (set from the training variances), never learned.
//
//   E(v, h) = sum_i (v_i - a_i)^2 / (2 sigma_i^2)
//           - sum_ij w_ij h_j v_i / sigma_i - sum_j b_j h_j
struct GrbmParams {
  Eigen::MatrixXd W;      // visible x hidden
  Eigen::VectorXd a;      // visible bias
  Eigen::VectorXd b;      // hidden bias
  Eigen::VectorXd sigma;  // visible noise scale, all > 0
};

// Binary RBM.  E(v, h) = -v^T W h - a^T v - b^T h.
struct RbmParams {
  Eigen::MatrixXd W;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
};

struct CdConfig {
  double learning_rate = 0.01;
  int k = 1;
  int batch_size = 128;
  int epochs = 0;
  std::uint64_t rng_seed = 42;
};

inline void validate(const CdConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    fail(errc::bad_config, "learning rate must be finite and >= 0");
  if (cfg.k < 1) fail(errc::bad_config, "cd steps k must be >= 1");
  if (cfg.batch_size < 1) fail(errc::bad_config, "batch size must be >= 1");
  if (cfg.epochs < 0) fail(errc::bad_config, "epochs must be >= 0");
}

inline GrbmParams init_grbm(int visible, int hidden, Rng& rng) {
  GrbmParams p;
  p.W.resize(visible, hidden);
  std::normal_distribution<double> weight(0.0, 0.01);
  for (Eigen::Index i = 0; i < p.W.rows(); ++i)
    for (Eigen::Index j = 0; j < p.W.cols(); ++j) p.W(i, j) = weight(rng);
  p.a = Eigen::VectorXd::Zero(visible);
  p.b = Eigen::VectorXd::Zero(hidden);
  p.sigma = Eigen::VectorXd::Ones(visible);
  return p;
}

inline RbmParams init_rbm(int visible, int hidden, Rng& rng) {
  RbmParams p;
  p.W.resize(visible, hidden);
  std::normal_distribution<double> weight(0.0, 0.01);
  for (Eigen::Index i = 0; i < p.W.rows(); ++i)
    for (Eigen::Index j = 0; j < p.W.cols(); ++j) p.W(i, j) = weight(rng);
  p.a = Eigen::VectorXd::Zero(visible);
  p.b = Eigen::VectorXd::Zero(hidden);
  return p;
}

inline double energy(const GrbmParams& p, const Eigen::VectorXd& v,
                     const Eigen::VectorXd& h) {
  const Eigen::VectorXd vs = v.cwiseQuotient(p.sigma);
  const Eigen::VectorXd dev = (v - p.a).cwiseQuotient(p.sigma);
  return 0.5 * dev.squaredNorm() - vs.dot(p.W * h) - p.b.dot(h);
}

inline double energy(const RbmParams& p, const Eigen::VectorXd& v,
                     const Eigen::VectorXd& h) {
  return -v.dot(p.W * h) - p.a.dot(v) - p.b.dot(h);
}

// p(h_j = 1 | v) = sigm(b_j + sum_i w_ij v_i / sigma_i)
inline Eigen::MatrixXd hidden_prob(const GrbmParams& p, const Eigen::MatrixXd& V) {
  if (V.cols() != p.W.rows())
    fail(errc::dimension_mismatch, "grbm: batch has " + std::to_string(V.cols()) +
                                       " visible units, expected " +
                                       std::to_string(p.W.rows()));
  Eigen::MatrixXd logits =
      (V.array().rowwise() / p.sigma.transpose().array()).matrix() * p.W;
  logits.rowwise() += p.b.transpose();
  return detail::sigmoid(std::move(logits));
}

inline Eigen::MatrixXd hidden_prob(const RbmParams& p, const Eigen::MatrixXd& V) {
  if (V.cols() != p.W.rows())
    fail(errc::dimension_mismatch, "rbm: batch has " + std::to_string(V.cols()) +
                                       " visible units, expected " +
                                       std::to_string(p.W.rows()));
  Eigen::MatrixXd logits = V * p.W;
  logits.rowwise() += p.b.transpose();
  return detail::sigmoid(std::move(logits));
}

// v | h is Gaussian with mean a_i + sigma_i sum_j w_ij h_j and variance
// sigma_i^2 (the standard form, written for unit sigma in most derivations).
inline Eigen::MatrixXd visible_mean(const GrbmParams& p, const Eigen::MatrixXd& H) {
  Eigen::MatrixXd mean =
      ((H * p.W.transpose()).array().rowwise() * p.sigma.transpose().array()).matrix();
  mean.rowwise() += p.a.transpose();
  return mean;
}

inline Eigen::MatrixXd visible_prob(const RbmParams& p, const Eigen::MatrixXd& H) {
  Eigen::MatrixXd logits = H * p.W.transpose();
  logits.rowwise() += p.a.transpose();
  return detail::sigmoid(std::move(logits));
}

inline Eigen::MatrixXd sample_bernoulli(const Eigen::MatrixXd& prob, Rng& rng) {
  Eigen::MatrixXd s(prob.rows(), prob.cols());
  for (Eigen::Index i = 0; i < prob.rows(); ++i)
    for (Eigen::Index j = 0; j < prob.cols(); ++j)
      s(i, j) = detail::uniform01(rng) < prob(i, j) ? 1.0 : 0.0;
  return s;
}

inline Eigen::MatrixXd sample_visible(const GrbmParams& p, const Eigen::MatrixXd& H,
                                      Rng& rng) {
  Eigen::MatrixXd v = visible_mean(p, H);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      v(i, j) += p.sigma[j] * unit(rng);
  return v;
}

inline Eigen::MatrixXd sample_visible(const RbmParams& p, const Eigen::MatrixXd& H,
                                      Rng& rng) {
  return sample_bernoulli(visible_prob(p, H), rng);
}

// One k-step alternating Gibbs chain started at the data. Hidden states are
// sampled inside the chain but the endpoints keep probabilities, which is
// what the CD statistics use; visible states are sampled throughout.
struct GibbsResult {
  Eigen::MatrixXd v_end;
  Eigen::MatrixXd h_data_prob;
  Eigen::MatrixXd h_end_prob;
};

template <class Params>
GibbsResult gibbs_chain(const Params& p, const Eigen::MatrixXd& V0, int k, Rng& rng) {
  if (k < 1) fail(errc::bad_config, "cd steps k must be >= 1");
  GibbsResult r;
  r.h_data_prob = hidden_prob(p, V0);
  Eigen::MatrixXd h_sample = sample_bernoulli(r.h_data_prob, rng);
  for (int step = 0; step < k; ++step) {
    r.v_end = sample_visible(p, h_sample, rng);
    r.h_end_prob = hidden_prob(p, r.v_end);
    if (step + 1 < k) h_sample = sample_bernoulli(r.h_end_prob, rng);
  }
  return r;
}

// Gradient-shaped accumulator, also used for the exact gradients the tests
// compare against.
struct RbmGradient {
  Eigen::MatrixXd W;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
};

// CD-k estimate of the per-sample log-likelihood gradient:
//   dW   <v h>_data - <v h>_chain end     (v scaled by 1/sigma for the GRBM)
//   da   <v>_data - <v>_end               (scaled by 1/sigma^2 for the GRBM)
//   db   <h>_data - <h>_end
inline RbmGradient cd_gradient(const RbmParams& p, const Eigen::MatrixXd& V0, int k,
                               Rng& rng) {
  const GibbsResult g = gibbs_chain(p, V0, k, rng);
  const double B = static_cast<double>(V0.rows());
  RbmGradient grad;
  grad.W = (V0.transpose() * g.h_data_prob - g.v_end.transpose() * g.h_end_prob) / B;
  grad.a = (V0 - g.v_end).colwise().mean();
  grad.b = (g.h_data_prob - g.h_end_prob).colwise().mean();
  return grad;
}

inline RbmGradient cd_gradient(const GrbmParams& p, const Eigen::MatrixXd& V0, int k,
                               Rng& rng) {
  const GibbsResult g = gibbs_chain(p, V0, k, rng);
  const double B = static_cast<double>(V0.rows());
  const auto inv_sigma = p.sigma.cwiseInverse().transpose().array();
  const Eigen::MatrixXd v0s = (V0.array().rowwise() * inv_sigma).matrix();
  const Eigen::MatrixXd vks = (g.v_end.array().rowwise() * inv_sigma).matrix();
  RbmGradient grad;
  grad.W = (v0s.transpose() * g.h_data_prob - vks.transpose() * g.h_end_prob) / B;
  grad.a = ((V0 - g.v_end).colwise().mean().transpose().array() /
            p.sigma.array().square())
               .matrix();
  grad.b = (g.h_data_prob - g.h_end_prob).colwise().mean();
  return grad;
}

namespace detail {

template <class Params>
double reconstruction_error(const Params& p, const Eigen::MatrixXd& V0,
                            const Eigen::MatrixXd& h_data_prob) {
  Eigen::MatrixXd recon;
  if constexpr (std::is_same_v<Params, GrbmParams>)
    recon = visible_mean(p, h_data_prob);
  else
    recon = visible_prob(p, h_data_prob);
  return (V0 - recon).rowwise().squaredNorm().mean();
}

template <class Params>
void apply_gradient(Params& p, const RbmGradient& g, double lr) {
  p.W += lr * g.W;
  p.a += lr * g.a;
  p.b += lr * g.b;
  if (!p.W.allFinite() || !p.a.allFinite() || !p.b.allFinite())
    fail(errc::non_finite_update, "rbm parameters became non-finite");
}

}  // namespace detail

// One minibatch step; returns the batch mean squared reconstruction error
// (mean-field reconstruction from the data-driven hidden probabilities).
template <class Params>
double cd_update(Params& p, const Eigen::MatrixXd& V0, double learning_rate, int k,
                 Rng& rng) {
  const double err = detail::reconstruction_error(p, V0, hidden_prob(p, V0));
  detail::apply_gradient(p, cd_gradient(p, V0, k, rng), learning_rate);
  return err;
}

// Full CD training loop: shuffled minibatches, one reconstruction-error
// figure per epoch (row-weighted mean over the epoch's batches).
template <class Params>
std::vector<double> train_cd(Params& p, const Eigen::MatrixXd& X, const CdConfig& cfg) {
  validate(cfg);
  if (X.rows() == 0) fail(errc::empty_input, "cd training: empty data matrix");
  Rng rng(cfg.rng_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<double> epoch_errors;
  epoch_errors.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double err_sum = 0.0;
    for (Eigen::Index start = 0; start < X.rows(); start += cfg.batch_size) {
      const Eigen::Index rows = std::min<Eigen::Index>(cfg.batch_size, X.rows() - start);
      Eigen::MatrixXd batch(rows, X.cols());
      for (Eigen::Index r = 0; r < rows; ++r)
        batch.row(r) = X.row(order[static_cast<std::size_t>(start + r)]);
      err_sum += cd_update(p, batch, cfg.learning_rate, cfg.k, rng) *
                 static_cast<double>(rows);
    }
    epoch_errors.push_back(err_sum / static_cast<double>(X.rows()));
  }
  return epoch_errors;
}

// Free energy of a binary RBM: F(v) = -a^T v - sum_j softplus(b_j + (W^T v)_j).
inline double free_energy(const RbmParams& p, const Eigen::VectorXd& v) {
  const Eigen::VectorXd x = p.W.transpose() * v + p.b;
  double softplus_sum = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j)
    softplus_sum += x[j] > 0.0 ? x[j] + std::log1p(std::exp(-x[j]))
                               : std::log1p(std::exp(x[j]));
  return -p.a.dot(v) - softplus_sum;
}

namespace detail {

inline void check_enumerable(const RbmParams& p) {
  if (p.W.rows() + p.W.cols() > 20)
    fail(errc::too_large_to_enumerate,
         "exact quantities need visible + hidden <= 20 units, got " +
             std::to_string(p.W.rows() + p.W.cols()));
}

inline Eigen::VectorXd bit_vector(std::uint32_t code, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = (code >> i) & 1u ? 1.0 : 0.0;
  return v;
}

inline double log_partition(const RbmParams& p) {
  const Eigen::Index D = p.W.rows();
  const auto states = std::uint64_t{1} << D;
  double max_neg_f = -std::numeric_limits<double>::infinity();
  std::vector<double> neg_f(states);
  for (std::uint64_t s = 0; s < states; ++s) {
    neg_f[s] = -free_energy(p, bit_vector(static_cast<std::uint32_t>(s), D));
    max_neg_f = std::max(max_neg_f, neg_f[s]);
  }
  double sum = 0.0;
  for (double x : neg_f) sum += std::exp(x - max_neg_f);
  return max_neg_f + std::log(sum);
}

}  // namespace detail

// Mean log p(v) over the rows of V, by brute-force enumeration of the
// visible states. Only valid for toy models (visible + hidden <= 20).
inline double exact_log_likelihood(const RbmParams& p, const Eigen::MatrixXd& V) {
  detail::check_enumerable(p);
  if (V.rows() == 0) fail(errc::empty_input, "log-likelihood of empty data");
  const double log_z = detail::log_partition(p);
  double ll = 0.0;
  for (Eigen::Index r = 0; r < V.rows(); ++r)
    ll += -free_energy(p, V.row(r).transpose()) - log_z;
  return ll / static_cast<double>(V.rows());
}

// Exact gradient of the mean log-likelihood, the yardstick the CD estimate
// is checked against. Same enumeration limit as exact_log_likelihood.
inline RbmGradient exact_gradient(const RbmParams& p, const Eigen::MatrixXd& V) {
  detail::check_enumerable(p);
  if (V.rows() == 0) fail(errc::empty_input, "gradient of empty data");
  const Eigen::Index D = p.W.rows();
  const double log_z = detail::log_partition(p);

  RbmGradient grad;
  grad.W = Eigen::MatrixXd::Zero(p.W.rows(), p.W.cols());
  grad.a = Eigen::VectorXd::Zero(p.a.size());
  grad.b = Eigen::VectorXd::Zero(p.b.size());

  const Eigen::MatrixXd h_data = hidden_prob(p, V);
  grad.W = V.transpose() * h_data / static_cast<double>(V.rows());
  grad.a = V.colwise().mean();
  grad.b = h_data.colwise().mean();

  const auto states = std::uint64_t{1} << D;
  for (std::uint64_t s = 0; s < states; ++s) {
    const Eigen::VectorXd v = detail::bit_vector(static_cast<std::uint32_t>(s), D);
    const double pv = std::exp(-free_energy(p, v) - log_z);
    const Eigen::MatrixXd h = hidden_prob(p, v.transpose());
    grad.W -= pv * (v * h);
    grad.a -= pv * v;
    grad.b -= pv * h.row(0).transpose();
  }
  return grad;
}

}  // namespace deepids
