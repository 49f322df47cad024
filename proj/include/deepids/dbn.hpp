// Deep belief network classifier: a GRBM input layer plus a stack of binary
// RBMs, pretrained greedily with contrastive divergence, then topped with a
// softmax head and fine-tuned end to end by backprop. The recognition pass
// is deterministic (mean-field probabilities, no sampling).
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "deepids/error.hpp"
#include "deepids/rbm.hpp"

namespace deepids {

struct DbnParams {
  GrbmParams grbm;
  std::vector<RbmParams> rbms;
  Eigen::MatrixXd head_W;  // classes x top hidden units
  Eigen::VectorXd head_b;

  int input_dim() const { return static_cast<int>(grbm.W.rows()); }
  int num_classes() const { return static_cast<int>(head_b.size()); }
  int top_dim() const {
    return static_cast<int>(rbms.empty() ? grbm.W.cols() : rbms.back().W.cols());
  }
  std::size_t num_hidden_layers() const { return rbms.size() + 1; }
};

// First index of the maximum, so ties resolve to the lowest class id.
inline int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

inline void softmax_into(const Eigen::VectorXd& logits, Eigen::VectorXd& out) {
  const double shift = logits.maxCoeff();
  out = (logits.array() - shift).exp();
  out /= out.sum();
}

// Per-row scratch space so the streaming path allocates nothing per record.
struct ForwardWorkspace {
  Eigen::VectorXd scaled;
  std::vector<Eigen::VectorXd> acts;
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;

  void resize_for(const DbnParams& net) {
    scaled.resize(net.grbm.W.rows());
    acts.resize(net.num_hidden_layers());
    acts[0].resize(net.grbm.W.cols());
    for (std::size_t l = 0; l < net.rbms.size(); ++l)
      acts[l + 1].resize(net.rbms[l].W.cols());
    logits.resize(net.head_b.size());
    probs.resize(net.head_b.size());
  }
};

// Mean-field recognition pass for one input row; fills ws.acts and ws.probs.
inline void forward_into(const DbnParams& net, const Eigen::Ref<const Eigen::VectorXd>& x,
                         ForwardWorkspace& ws) {
  if (x.size() != net.grbm.W.rows())
    fail(errc::dimension_mismatch,
         "forward: input has " + std::to_string(x.size()) + " units, network expects " +
             std::to_string(net.grbm.W.rows()));
  ws.scaled = x.cwiseQuotient(net.grbm.sigma);
  ws.acts[0].noalias() = net.grbm.W.transpose() * ws.scaled;
  ws.acts[0] += net.grbm.b;
  for (Eigen::Index j = 0; j < ws.acts[0].size(); ++j)
    ws.acts[0][j] = detail::sigmoid(ws.acts[0][j]);
  for (std::size_t l = 0; l < net.rbms.size(); ++l) {
    ws.acts[l + 1].noalias() = net.rbms[l].W.transpose() * ws.acts[l];
    ws.acts[l + 1] += net.rbms[l].b;
    for (Eigen::Index j = 0; j < ws.acts[l + 1].size(); ++j)
      ws.acts[l + 1][j] = detail::sigmoid(ws.acts[l + 1][j]);
  }
  ws.logits.noalias() = net.head_W * ws.acts.back();
  ws.logits += net.head_b;
  softmax_into(ws.logits, ws.probs);
}

inline int predict_row(const DbnParams& net, const Eigen::Ref<const Eigen::VectorXd>& x,
                       ForwardWorkspace& ws) {
  forward_into(net, x, ws);
  return argmax_lowest(ws.probs);
}

inline Eigen::VectorXi predict(const DbnParams& net, const Eigen::MatrixXd& X) {
  ForwardWorkspace ws;
  ws.resize_for(net);
  Eigen::VectorXi y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    y[i] = predict_row(net, X.row(i).transpose(), ws);
  return y;
}

// Greedy layer-wise pretraining. The GRBM learns the real-valued inputs
// (sigma fixed to the supplied scales); each binary RBM learns the previous
// layer's hidden probabilities. Per-layer reconstruction error curves are
// returned for the training report.
struct PretrainReport {
  std::vector<std::vector<double>> layer_recon;
};

inline DbnParams pretrain(const Eigen::MatrixXd& X, const std::vector<int>& hidden,
                          const Eigen::VectorXd& sigma, int num_classes,
                          const CdConfig& cfg, PretrainReport* report = nullptr) {
  if (hidden.empty()) fail(errc::invalid_spec, "network needs at least one hidden layer");
  for (int h : hidden)
    if (h < 1) fail(errc::invalid_spec, "hidden layer sizes must be >= 1");
  if (num_classes < 2) fail(errc::invalid_spec, "classification needs >= 2 classes");
  if (X.rows() == 0) fail(errc::empty_input, "pretrain: empty data matrix");
  if (sigma.size() != X.cols())
    fail(errc::dimension_mismatch, "pretrain: sigma length does not match input width");
  validate(cfg);

  Rng master(cfg.rng_seed);
  DbnParams net;
  net.grbm = init_grbm(static_cast<int>(X.cols()), hidden[0], master);
  net.grbm.sigma = sigma;

  CdConfig layer_cfg = cfg;
  layer_cfg.rng_seed = master();
  auto recon = train_cd(net.grbm, X, layer_cfg);
  if (report) report->layer_recon.push_back(std::move(recon));

  Eigen::MatrixXd H = hidden_prob(net.grbm, X);
  for (std::size_t l = 1; l < hidden.size(); ++l) {
    RbmParams rbm = init_rbm(static_cast<int>(H.cols()), hidden[l], master);
    layer_cfg.rng_seed = master();
    recon = train_cd(rbm, H, layer_cfg);
    if (report) report->layer_recon.push_back(std::move(recon));
    H = hidden_prob(rbm, H);
    net.rbms.push_back(std::move(rbm));
  }

  net.head_W = Eigen::MatrixXd::Zero(num_classes, hidden.back());
  net.head_b = Eigen::VectorXd::Zero(num_classes);
  return net;
}

// Gradient of the mean cross-entropy, in one-to-one correspondence with the
// trainable parameters (GRBM sigma and visible bias take no part in the
// recognition pass and are left alone).
struct DbnGradients {
  Eigen::MatrixXd grbm_W;
  Eigen::VectorXd grbm_b;
  std::vector<Eigen::MatrixXd> rbm_W;
  std::vector<Eigen::VectorXd> rbm_b;
  Eigen::MatrixXd head_W;
  Eigen::VectorXd head_b;

  static DbnGradients zeros_like(const DbnParams& net) {
    DbnGradients g;
    g.grbm_W = Eigen::MatrixXd::Zero(net.grbm.W.rows(), net.grbm.W.cols());
    g.grbm_b = Eigen::VectorXd::Zero(net.grbm.b.size());
    for (const auto& r : net.rbms) {
      g.rbm_W.emplace_back(Eigen::MatrixXd::Zero(r.W.rows(), r.W.cols()));
      g.rbm_b.emplace_back(Eigen::VectorXd::Zero(r.b.size()));
    }
    g.head_W = Eigen::MatrixXd::Zero(net.head_W.rows(), net.head_W.cols());
    g.head_b = Eigen::VectorXd::Zero(net.head_b.size());
    return g;
  }
};

// Mean cross-entropy over the batch and its gradient by backprop.
inline std::pair<double, DbnGradients> loss_and_gradient(const DbnParams& net,
                                                         const Eigen::MatrixXd& X,
                                                         const Eigen::VectorXi& y) {
  if (X.rows() != y.size())
    fail(errc::length_mismatch, "loss: " + std::to_string(X.rows()) + " rows but " +
                                    std::to_string(y.size()) + " labels");
  if (X.rows() == 0) fail(errc::empty_input, "loss of empty batch");

  DbnGradients grad = DbnGradients::zeros_like(net);
  ForwardWorkspace ws;
  ws.resize_for(net);
  const std::size_t L = net.num_hidden_layers();
  std::vector<Eigen::VectorXd> delta(L);
  Eigen::VectorXd dlogits;
  double loss = 0.0;

  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const int label = y[r];
    if (label < 0 || label >= net.num_classes())
      fail(errc::class_out_of_range, "label " + std::to_string(label) +
                                         " outside [0, " +
                                         std::to_string(net.num_classes()) + ")");
    forward_into(net, X.row(r).transpose(), ws);
    loss -= std::log(std::max(ws.probs[label], 1e-300));

    dlogits = ws.probs;
    dlogits[label] -= 1.0;
    grad.head_W.noalias() += dlogits * ws.acts.back().transpose();
    grad.head_b += dlogits;

    delta[L - 1].noalias() = net.head_W.transpose() * dlogits;
    delta[L - 1].array() *=
        ws.acts[L - 1].array() * (1.0 - ws.acts[L - 1].array());
    for (std::size_t l = L - 1; l >= 1; --l) {
      grad.rbm_W[l - 1].noalias() += ws.acts[l - 1] * delta[l].transpose();
      grad.rbm_b[l - 1] += delta[l];
      delta[l - 1].noalias() = net.rbms[l - 1].W * delta[l];
      delta[l - 1].array() *=
          ws.acts[l - 1].array() * (1.0 - ws.acts[l - 1].array());
    }
    grad.grbm_W.noalias() += ws.scaled * delta[0].transpose();
    grad.grbm_b += delta[0];
  }

  const double inv_n = 1.0 / static_cast<double>(X.rows());
  loss *= inv_n;
  grad.grbm_W *= inv_n;
  grad.grbm_b *= inv_n;
  for (std::size_t l = 0; l < grad.rbm_W.size(); ++l) {
    grad.rbm_W[l] *= inv_n;
    grad.rbm_b[l] *= inv_n;
  }
  grad.head_W *= inv_n;
  grad.head_b *= inv_n;
  return {loss, std::move(grad)};
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Row-wise full pass; the same forward path as prediction, so the reported
// accuracy matches a later evaluation of the stored model exactly.
inline EvalResult evaluate(const DbnParams& net, const Eigen::MatrixXd& X,
                           const Eigen::VectorXi& y) {
  if (X.rows() != y.size())
    fail(errc::length_mismatch, "evaluate: rows and labels differ");
  if (X.rows() == 0) fail(errc::empty_input, "evaluate on empty data");
  ForwardWorkspace ws;
  ws.resize_for(net);
  EvalResult res;
  Eigen::Index correct = 0;
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const int label = y[r];
    if (label < 0 || label >= net.num_classes())
      fail(errc::class_out_of_range, "label " + std::to_string(label) +
                                         " outside [0, " +
                                         std::to_string(net.num_classes()) + ")");
    forward_into(net, X.row(r).transpose(), ws);
    res.loss -= std::log(std::max(ws.probs[label], 1e-300));
    if (argmax_lowest(ws.probs) == label) ++correct;
  }
  res.loss /= static_cast<double>(X.rows());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(X.rows());
  return res;
}

struct FineTuneConfig {
  double learning_rate = 0.01;
  int epochs = 30;
  int batch_size = 128;
  std::uint64_t rng_seed = 42;
};

inline void validate(const FineTuneConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    fail(errc::bad_config, "learning rate must be finite and >= 0");
  if (cfg.batch_size < 1) fail(errc::bad_config, "batch size must be >= 1");
  if (cfg.epochs < 0) fail(errc::bad_config, "epochs must be >= 0");
}

struct FineTuneReport {
  std::vector<double> loss;      // full-pass mean cross-entropy after each epoch
  std::vector<double> accuracy;  // full-pass accuracy after each epoch
};

// Minibatch SGD on the cross-entropy through the whole stack.
inline FineTuneReport fine_tune(DbnParams& net, const Eigen::MatrixXd& X,
                                const Eigen::VectorXi& y, const FineTuneConfig& cfg) {
  validate(cfg);
  if (X.rows() != y.size())
    fail(errc::length_mismatch, "fine_tune: rows and labels differ");
  if (X.rows() == 0) fail(errc::empty_input, "fine_tune on empty data");

  Rng rng(cfg.rng_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  FineTuneReport report;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < X.rows(); start += cfg.batch_size) {
      const Eigen::Index rows = std::min<Eigen::Index>(cfg.batch_size, X.rows() - start);
      Eigen::MatrixXd batch(rows, X.cols());
      Eigen::VectorXi labels(rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        batch.row(r) = X.row(order[static_cast<std::size_t>(start + r)]);
        labels[r] = y[order[static_cast<std::size_t>(start + r)]];
      }
      auto [loss, grad] = loss_and_gradient(net, batch, labels);
      (void)loss;
      const double lr = cfg.learning_rate;
      net.grbm.W -= lr * grad.grbm_W;
      net.grbm.b -= lr * grad.grbm_b;
      for (std::size_t l = 0; l < net.rbms.size(); ++l) {
        net.rbms[l].W -= lr * grad.rbm_W[l];
        net.rbms[l].b -= lr * grad.rbm_b[l];
      }
      net.head_W -= lr * grad.head_W;
      net.head_b -= lr * grad.head_b;
      if (!net.grbm.W.allFinite() || !net.head_W.allFinite())
        fail(errc::non_finite_update, "network parameters became non-finite");
    }
    const EvalResult er = evaluate(net, X, y);
    report.loss.push_back(er.loss);
    report.accuracy.push_back(er.accuracy);
  }
  return report;
}

}  // namespace deepids
