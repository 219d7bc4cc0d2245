#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace subalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// n x D collection of feature vectors, one sample per row. Always non-empty
// and finite; every constructor validates.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(Matrix values);

  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows);

  Index rows() const noexcept { return values_.rows(); }
  Index cols() const noexcept { return values_.cols(); }
  const Matrix& values() const noexcept { return values_; }
  double operator()(Index r, Index c) const { return values_(r, c); }

  // Stacks matrices of equal width vertically.
  static FeatureMatrix stack(const std::vector<const FeatureMatrix*>& parts);

 private:
  Matrix values_;
};

// Per-dimension affine normalization: x' = (x - mean) / scale.
struct NormalizationStats {
  Vector mean;
  Vector scale;

  Index dim() const noexcept { return mean.size(); }
  static NormalizationStats identity(Index dim);
};

struct NormalizedFeatures {
  FeatureMatrix features;
  NormalizationStats stats;
};

// Z-scores each column with the sample standard deviation (divisor n-1).
// Zero-variance columns and n = 1 inputs get scale 1.
NormalizedFeatures normalize(const FeatureMatrix& x);

// Applies previously computed statistics unchanged.
NormalizedFeatures normalize(const FeatureMatrix& x, const NormalizationStats& stats);

// PCA basis plus the statistics that were applied before it was learned.
struct Subspace {
  std::string id;
  Matrix basis;        // D x d, orthonormal columns
  Vector eigenvalues;  // d, nonincreasing, >= 0
  NormalizationStats stats;

  Index dim() const noexcept { return basis.cols(); }
  Index ambient_dim() const noexcept { return basis.rows(); }
};

enum class PcaMethod {
  Auto,        // covariance when D <= n, Gram matrix otherwise
  Covariance,  // eigendecomposition of the D x D covariance
  Gram,        // eigendecomposition of the n x n Gram matrix
};

// Top-d principal directions of the covariance of x, which the caller is
// expected to have normalized. Each column is sign-fixed so that its entry
// of largest magnitude is nonnegative. Throws InvalidArgument when d is
// outside [1, min(n-1, D)] and NumericalError when rank(x) < d.
//
// The returned Subspace carries identity stats and an empty id; use
// learn_subspace to normalize and tag in one step.
Subspace pca(const FeatureMatrix& x, Index d, PcaMethod method = PcaMethod::Auto);

// normalize(raw) followed by pca, with stats and id attached.
Subspace learn_subspace(const FeatureMatrix& raw, Index d, std::string id,
                        PcaMethod method = PcaMethod::Auto);

// X * B.
FeatureMatrix project(const FeatureMatrix& x, const Matrix& basis);

// Singular values of A^T B, nonincreasing and clamped into [0, 1].
Vector principal_angle_cosines(const Matrix& a, const Matrix& b);
Vector principal_angle_cosines(const Subspace& a, const Subspace& b);

// ||cos(theta)||_2 over the principal angles.
double subspace_similarity(const Matrix& a, const Matrix& b);
double subspace_similarity(const Subspace& a, const Subspace& b);

// ||B^T B - I||_F.
double orthonormality_error(const Matrix& basis);

// Sign rule used by pca: largest-magnitude entry of each column nonnegative.
void fix_column_signs(Matrix& basis);

bool all_finite(const Matrix& m);

}  // namespace subalign
