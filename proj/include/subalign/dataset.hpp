#pragma once

#include "subalign/detection.hpp"
#include "subalign/linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace subalign {

struct GroundTruth {
  ImageId image_id = 0;
  BBox box;
  int class_id = 0;

  bool operator==(const GroundTruth&) const = default;
};

// One image: its proposal boxes, their features (row i belongs to box i) and,
// for labeled datasets, its ground-truth objects.
struct ImageRecord {
  ImageId id = 0;
  Matrix features;
  std::vector<BBox> boxes;
  std::optional<std::vector<GroundTruth>> ground_truth;

  Index proposal_count() const noexcept { return features.rows(); }
};

struct Dataset {
  std::string name;
  std::vector<std::string> classes;
  Index feature_dim = 0;
  std::vector<ImageRecord> images;

  // True when every image carries ground truth.
  bool labeled() const;
  int class_index(const std::string& name) const;  // -1 when unknown
  Index proposal_count() const;

  // Every proposal feature row in image order.
  FeatureMatrix all_features() const;

  // Throws DataError on the first violated invariant.
  void validate() const;
};

// Ground truth of one class across the dataset.
std::vector<GroundTruth> ground_truth_for_class(const Dataset& ds, int class_id);

// Returns a copy with ground truth removed, as an unlabeled target would be.
Dataset strip_labels(const Dataset& ds);

}  // namespace subalign
