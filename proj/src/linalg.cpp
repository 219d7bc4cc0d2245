#include "subalign/linalg.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace subalign {

bool all_finite(const Matrix& m) { return m.allFinite(); }

FeatureMatrix::FeatureMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw InvalidArgument(fmt::format("feature matrix must be non-empty, got {}x{}",
                                      values_.rows(), values_.cols()));
  }
  if (!values_.allFinite()) {
    for (Index r = 0; r < values_.rows(); ++r) {
      if (!values_.row(r).allFinite()) {
        throw DataError(fmt::format("non-finite feature value at row {}", r));
      }
    }
  }
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw InvalidArgument("feature matrix must have at least one row");
  const auto cols = static_cast<Index>(rows.front().size());
  Matrix m(static_cast<Index>(rows.size()), cols);
  for (Index r = 0; r < m.rows(); ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<Index>(row.size()) != cols) {
      throw DimensionError(
          fmt::format("row {} has {} entries, expected {}", r, row.size(), cols));
    }
    for (Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return FeatureMatrix(std::move(m));
}

FeatureMatrix FeatureMatrix::stack(const std::vector<const FeatureMatrix*>& parts) {
  if (parts.empty()) throw InvalidArgument("nothing to stack");
  const Index cols = parts.front()->cols();
  Index rows = 0;
  for (const auto* p : parts) {
    if (p->cols() != cols) {
      throw DimensionError(fmt::format("cannot stack widths {} and {}", cols, p->cols()));
    }
    rows += p->rows();
  }
  Matrix m(rows, cols);
  Index at = 0;
  for (const auto* p : parts) {
    m.middleRows(at, p->rows()) = p->values();
    at += p->rows();
  }
  return FeatureMatrix(std::move(m));
}

NormalizationStats NormalizationStats::identity(Index dim) {
  return {Vector::Zero(dim), Vector::Ones(dim)};
}

NormalizedFeatures normalize(const FeatureMatrix& x) {
  const Index n = x.rows();
  NormalizationStats stats{x.values().colwise().mean().transpose(), Vector::Ones(x.cols())};
  if (n > 1) {
    const Matrix centered = x.values().rowwise() - stats.mean.transpose();
    for (Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
      stats.scale(j) = sd > 0.0 ? sd : 1.0;
    }
  }
  return normalize(x, stats);
}

NormalizedFeatures normalize(const FeatureMatrix& x, const NormalizationStats& stats) {
  if (stats.mean.size() != x.cols() || stats.scale.size() != x.cols()) {
    throw DimensionError(fmt::format("normalization stats have dimension {}, features have {}",
                                     stats.mean.size(), x.cols()));
  }
  if ((stats.scale.array() <= 0.0).any() || !stats.scale.allFinite() ||
      !stats.mean.allFinite()) {
    throw InvalidArgument("normalization scale must be finite and strictly positive");
  }
  Matrix out = (x.values().rowwise() - stats.mean.transpose()).array().rowwise() /
               stats.scale.transpose().array();
  return {FeatureMatrix(std::move(out)), stats};
}

void fix_column_signs(Matrix& basis) {
  for (Index c = 0; c < basis.cols(); ++c) {
    Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }
}

namespace {

// Eigenvalues below this are treated as zero when counting rank.
double rank_tolerance(double largest) { return std::max(1e-10 * largest, 1e-13); }

struct EigenPairs {
  Vector values;   // descending
  Matrix vectors;  // matching columns
};

EigenPairs descending_eigen(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return {solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
}

}  // namespace

Subspace pca(const FeatureMatrix& x, Index d, PcaMethod method) {
  const Index n = x.rows();
  const Index dim = x.cols();
  if (d < 1 || d > std::min(n - 1, dim)) {
    throw InvalidArgument(fmt::format(
        "subspace dimension {} outside [1, min(n-1, D)] = [1, {}] for {} samples of dimension {}",
        d, std::min(n - 1, dim), n, dim));
  }
  if (method == PcaMethod::Auto) method = dim <= n ? PcaMethod::Covariance : PcaMethod::Gram;

  const Matrix centered = x.values().rowwise() - x.values().colwise().mean();
  const double denom = static_cast<double>(n - 1);

  EigenPairs eig;
  if (method == PcaMethod::Covariance) {
    eig = descending_eigen((centered.transpose() * centered) / denom);
  } else {
    eig = descending_eigen((centered * centered.transpose()) / denom);
  }

  const double tol = rank_tolerance(std::max(eig.values(0), 0.0));
  const Index rank = (eig.values.array() > tol).count();
  if (rank < d) {
    throw NumericalError(
        fmt::format("data rank {} is below requested subspace dimension {}", rank, d), rank);
  }

  Subspace s;
  s.eigenvalues = eig.values.head(d).cwiseMax(0.0);
  if (method == PcaMethod::Covariance) {
    s.basis = eig.vectors.leftCols(d);
  } else {
    // v = X^T u / sqrt((n-1) lambda) maps Gram eigenvectors to covariance ones.
    s.basis = centered.transpose() * eig.vectors.leftCols(d);
    for (Index c = 0; c < d; ++c) s.basis.col(c) /= std::sqrt(denom * eig.values(c));
  }
  fix_column_signs(s.basis);
  s.stats = NormalizationStats::identity(dim);
  return s;
}

Subspace learn_subspace(const FeatureMatrix& raw, Index d, std::string id, PcaMethod method) {
  auto normalized = normalize(raw);
  Subspace s = pca(normalized.features, d, method);
  s.stats = std::move(normalized.stats);
  s.id = std::move(id);
  return s;
}

FeatureMatrix project(const FeatureMatrix& x, const Matrix& basis) {
  if (x.cols() != basis.rows()) {
    throw DimensionError(fmt::format("cannot project {}-dimensional features onto a basis with {} rows",
                                     x.cols(), basis.rows()));
  }
  return FeatureMatrix(x.values() * basis);
}

Vector principal_angle_cosines(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError(
        fmt::format("subspaces live in different ambient dimensions ({} vs {})", a.rows(), b.rows()));
  }
  const Matrix cross = a.transpose() * b;
  Eigen::JacobiSVD<Matrix> svd(cross);
  // JacobiSVD returns singular values sorted nonincreasing.
  return svd.singularValues().cwiseMax(0.0).cwiseMin(1.0);
}

Vector principal_angle_cosines(const Subspace& a, const Subspace& b) {
  return principal_angle_cosines(a.basis, b.basis);
}

double subspace_similarity(const Matrix& a, const Matrix& b) {
  return principal_angle_cosines(a, b).norm();
}

double subspace_similarity(const Subspace& a, const Subspace& b) {
  return subspace_similarity(a.basis, b.basis);
}

double orthonormality_error(const Matrix& basis) {
  const Matrix gram = basis.transpose() * basis;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).norm();
}

}  // namespace subalign
