#include "subalign/alignment.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>

namespace subalign {

namespace {

void check_pair(const Subspace& source, const Subspace& target) {
  if (source.ambient_dim() != target.ambient_dim()) {
    throw DimensionError(fmt::format("source and target ambient dimensions differ ({} vs {})",
                                     source.ambient_dim(), target.ambient_dim()));
  }
  if (source.dim() != target.dim()) {
    throw DimensionError(fmt::format("source and target subspace dimensions differ ({} vs {})",
                                     source.dim(), target.dim()));
  }
}

void check_map_shape(const Matrix& m, const Subspace& source) {
  if (m.rows() != source.dim() || m.cols() != source.dim()) {
    throw DimensionError(fmt::format("alignment map is {}x{}, expected {}x{}", m.rows(), m.cols(),
                                     source.dim(), source.dim()));
  }
}

}  // namespace

double alignment_objective(const Matrix& m, const Subspace& source, const Subspace& target) {
  check_pair(source, target);
  check_map_shape(m, source);
  return (source.basis * m - target.basis).squaredNorm();
}

Matrix alignment_gradient(const Matrix& m, const Subspace& source, const Subspace& target) {
  check_pair(source, target);
  check_map_shape(m, source);
  return 2.0 * source.basis.transpose() * (source.basis * m - target.basis);
}

AlignmentMap solve_alignment(const Subspace& source, const Subspace& target) {
  check_pair(source, target);
  return {source.basis.transpose() * target.basis, source.id, target.id};
}

AlignedBasis aligned_source_basis(const Subspace& source, const AlignmentMap& map) {
  if (map.source_id != source.id) {
    throw FrameError(fmt::format("alignment solved for source subspace '{}' applied to '{}'",
                                 map.source_id, source.id));
  }
  check_map_shape(map.m, source);
  return {source.basis * map.m, map.source_id, map.target_id};
}

FeatureMatrix project_for_training(const FeatureMatrix& source_features, const Subspace& source,
                                   const AlignedBasis& aligned) {
  if (aligned.source_id != source.id) {
    throw FrameError(fmt::format("aligned basis built from '{}' used with source subspace '{}'",
                                 aligned.source_id, source.id));
  }
  return project(source_features, aligned.xa);
}

FeatureMatrix project_for_testing(const FeatureMatrix& target_features, const Subspace& target) {
  return project(target_features, target.basis);
}

}  // namespace subalign
