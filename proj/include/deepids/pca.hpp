// Principal component analysis via thin SVD of the centered data matrix.
// The fitted loading matrix feeds the encoder output into the network's
// visible layer at a reduced dimension.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <string>

#include "deepids/error.hpp"

namespace deepids {
namespace pca {

// Eigenvalues this far below the largest one are numerical noise and are
// clamped to zero before rank selection.
inline constexpr double kSpectrumEpsilon = 1e-12;

struct PcaModel {
  Eigen::VectorXd mean;              // length n
  Eigen::MatrixXd loading;           // n x rank, orthonormal columns
  Eigen::VectorXd eigenvalues;       // length min(m-1, n), descending
  Eigen::VectorXd singular_values;   // same length, descending
  int rank = 0;
  double alpha = 0.0;
};

// Smallest r whose leading eigenvalues reach fraction alpha of the total
// variance. Zero eigenvalues can never be needed: the cumulative sum hits
// the full total at the last positive one.
inline int choose_rank(const Eigen::VectorXd& eigenvalues, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    fail(errc::alpha_out_of_range,
         "alpha must be in (0, 1], got " + std::to_string(alpha));
  const double total = eigenvalues.sum();
  if (!(total > 0.0))
    fail(errc::all_zero_spectrum, "variance spectrum is all zero");
  double cum = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    cum += eigenvalues[i];
    if (cum >= alpha * total) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(eigenvalues.size());
}

inline PcaModel fit(const Eigen::MatrixXd& X, double alpha) {
  const Eigen::Index m = X.rows(), n = X.cols();
  if (m < 2) fail(errc::too_few_rows, "pca fit needs at least 2 rows, got " +
                                          std::to_string(m));

  PcaModel model;
  model.alpha = alpha;
  model.mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Index k = std::min(m - 1, n);
  model.singular_values = svd.singularValues().head(k);
  model.eigenvalues =
      model.singular_values.array().square() / static_cast<double>(m - 1);

  // Clamp trailing noise so choose_rank never selects a numerically zero
  // direction.
  if (model.eigenvalues.size() > 0) {
    const double cutoff = kSpectrumEpsilon * model.eigenvalues[0];
    for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i)
      if (model.eigenvalues[i] < cutoff) {
        model.eigenvalues[i] = 0.0;
        model.singular_values[i] = 0.0;
      }
  }

  model.rank = choose_rank(model.eigenvalues, alpha);
  model.loading = svd.matrixV().leftCols(model.rank);

  // Sign convention: the largest-magnitude entry of each loading column is
  // positive, so refitting the same data reproduces the same basis.
  for (Eigen::Index j = 0; j < model.loading.cols(); ++j) {
    Eigen::Index imax = 0;
    model.loading.col(j).cwiseAbs().maxCoeff(&imax);
    if (model.loading(imax, j) < 0.0) model.loading.col(j) = -model.loading.col(j);
  }
  return model;
}

inline void transform_row(const PcaModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x,
                          Eigen::Ref<Eigen::VectorXd> out) {
  if (x.size() != model.mean.size())
    fail(errc::dimension_mismatch,
         "pca transform: row has " + std::to_string(x.size()) +
             " features, model expects " + std::to_string(model.mean.size()));
  out.noalias() = model.loading.transpose() * (x - model.mean);
}

// Row-by-row on purpose: eval and streaming detection transform single rows,
// and scores must be bit-identical between the batch and streaming paths.
inline Eigen::MatrixXd transform(const PcaModel& model, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out(X.rows(), model.rank);
  Eigen::VectorXd row(model.rank);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    transform_row(model, X.row(i).transpose(), row);
    out.row(i) = row.transpose();
  }
  return out;
}

// First three scores, for scatter-plot exports.
inline Eigen::Vector3d project3(const PcaModel& model,
                                const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (model.loading.cols() < 3)
    fail(errc::dimension_mismatch,
         "3-d projection needs rank >= 3, model has rank " +
             std::to_string(model.loading.cols()));
  Eigen::VectorXd full(model.rank);
  transform_row(model, x, full);
  return full.head<3>();
}

}  // namespace pca
}  // namespace deepids
