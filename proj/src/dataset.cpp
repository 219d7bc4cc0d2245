#include "subalign/dataset.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace subalign {

bool Dataset::labeled() const {
  return !images.empty() &&
         std::all_of(images.begin(), images.end(),
                     [](const ImageRecord& im) { return im.ground_truth.has_value(); });
}

int Dataset::class_index(const std::string& name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

Index Dataset::proposal_count() const {
  Index total = 0;
  for (const auto& im : images) total += im.proposal_count();
  return total;
}

FeatureMatrix Dataset::all_features() const {
  Matrix m(proposal_count(), feature_dim);
  Index at = 0;
  for (const auto& im : images) {
    m.middleRows(at, im.proposal_count()) = im.features;
    at += im.proposal_count();
  }
  return FeatureMatrix(std::move(m));
}

void Dataset::validate() const {
  if (classes.empty()) throw DataError(fmt::format("dataset '{}' declares no classes", name));
  if (std::set<std::string>(classes.begin(), classes.end()).size() != classes.size()) {
    throw DataError(fmt::format("dataset '{}' has duplicate class names", name));
  }
  if (feature_dim < 1) throw DataError(fmt::format("dataset '{}' has feature_dim < 1", name));
  if (images.empty()) throw DataError(fmt::format("dataset '{}' has no images", name));

  std::set<ImageId> seen;
  for (const auto& im : images) {
    if (!seen.insert(im.id).second) {
      throw DataError(fmt::format("dataset '{}': duplicate image_id {}", name, im.id));
    }
    if (im.features.cols() != feature_dim) {
      throw DataError(fmt::format("image {}: features have {} columns, manifest says {}", im.id,
                                  im.features.cols(), feature_dim));
    }
    if (im.features.rows() < 1) {
      throw DataError(fmt::format("image {}: no proposals", im.id));
    }
    if (static_cast<std::size_t>(im.features.rows()) != im.boxes.size()) {
      throw DataError(fmt::format("image {}: {} proposal boxes but {} feature rows", im.id,
                                  im.boxes.size(), im.features.rows()));
    }
    for (Index r = 0; r < im.features.rows(); ++r) {
      if (!im.features.row(r).allFinite()) {
        throw DataError(fmt::format("image {}: non-finite feature at row {}", im.id, r));
      }
    }
    for (std::size_t r = 0; r < im.boxes.size(); ++r) {
      if (!im.boxes[r].valid()) {
        throw DataError(fmt::format("image {}: invalid proposal box at row {}", im.id, r));
      }
    }
    if (im.ground_truth) {
      for (std::size_t g = 0; g < im.ground_truth->size(); ++g) {
        const auto& gt = (*im.ground_truth)[g];
        if (gt.class_id < 0 || gt.class_id >= static_cast<int>(classes.size())) {
          throw DataError(fmt::format("image {}: ground truth row {} has unknown class {}", im.id,
                                      g, gt.class_id));
        }
        if (!gt.box.valid()) {
          throw DataError(fmt::format("image {}: invalid ground-truth box at row {}", im.id, g));
        }
        if (gt.image_id != im.id) {
          throw DataError(fmt::format("image {}: ground truth row {} refers to image {}", im.id, g,
                                      gt.image_id));
        }
      }
    }
  }
}

std::vector<GroundTruth> ground_truth_for_class(const Dataset& ds, int class_id) {
  std::vector<GroundTruth> out;
  for (const auto& im : ds.images) {
    if (!im.ground_truth) continue;
    for (const auto& gt : *im.ground_truth) {
      if (gt.class_id == class_id) out.push_back(gt);
    }
  }
  return out;
}

Dataset strip_labels(const Dataset& ds) {
  Dataset out = ds;
  for (auto& im : out.images) im.ground_truth.reset();
  return out;
}

}  // namespace subalign
