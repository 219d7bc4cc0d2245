#pragma once

#include "subalign/linalg.hpp"

#include <string>

namespace subalign {

// d x d map taking the source basis towards the target basis, tagged with the
// ids of the two subspaces it was solved for.
struct AlignmentMap {
  Matrix m;
  std::string source_id;
  std::string target_id;

  Index source_dim() const noexcept { return m.rows(); }
};

// Target-aligned source basis Xa = X_S * M (D x d).
struct AlignedBasis {
  Matrix xa;
  std::string source_id;
  std::string target_id;
};

// ||X_S M - X_T||_F^2.
double alignment_objective(const Matrix& m, const Subspace& source, const Subspace& target);

// Gradient of alignment_objective with respect to M: 2 X_S^T (X_S M - X_T).
Matrix alignment_gradient(const Matrix& m, const Subspace& source, const Subspace& target);

// Closed-form minimizer M* = X_S^T X_T. Both subspaces must share their
// ambient dimension and their dimension d.
AlignmentMap solve_alignment(const Subspace& source, const Subspace& target);

// X_S M. Throws FrameError if the map was not solved for this source.
AlignedBasis aligned_source_basis(const Subspace& source, const AlignmentMap& map);

// Source features (already normalized with source.stats) in the aligned frame.
FeatureMatrix project_for_training(const FeatureMatrix& source_features, const Subspace& source,
                                   const AlignedBasis& aligned);

// Target features (already normalized with target.stats) projected onto the
// target basis. Test-time data never goes through Xa.
FeatureMatrix project_for_testing(const FeatureMatrix& target_features, const Subspace& target);

}  // namespace subalign
