#pragma once

#include "subalign/linalg.hpp"

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace subalign {

using ImageId = std::int64_t;

struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept;

  auto operator<=>(const BBox&) const = default;
};

// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

struct Proposal {
  ImageId image_id = 0;
  BBox box;
  Index feature_row = 0;
};

struct Detection {
  ImageId image_id = 0;
  BBox box;
  int class_id = 0;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

// Ranking used by NMS and AP: score descending, then image id ascending,
// then box coordinates lexicographically ascending.
bool ranks_before(const Detection& a, const Detection& b);

enum class FrameKind { Raw, SourcePca, TargetAligned };

// Coordinate frame a detector was trained in. `key` pins the concrete basis
// (for aligned frames, the source/target subspace pair).
struct Frame {
  FrameKind kind = FrameKind::Raw;
  std::string key;

  static Frame raw() { return {}; }
  static Frame aligned(const std::string& source_id, const std::string& target_id);

  std::string to_string() const;
  static Frame parse(const std::string& text);

  bool operator==(const Frame&) const = default;
};

struct LinearDetector {
  int class_id = 0;
  Vector weights;
  double bias = 0.0;
  Frame frame;
};

struct TrainConfig {
  double lambda_reg = 1e-2;
  int max_rounds = 10;
  int iterations = 2000;
  std::uint64_t seed = 0;
  // Size of the seeded random negative subset the first round trains on.
  Index initial_negatives = 256;
};

struct TrainingTrace {
  int rounds = 0;
  std::vector<Index> cache_sizes;  // negatives in the cache at each round
  // Regularized hinge objective on pos + final cache:
  double first_round_objective = 0.0;  // of the round-1 model
  double final_objective = 0.0;        // of the returned model
};

struct TrainingResult {
  LinearDetector detector;
  TrainingTrace trace;
};

// L2-regularized hinge loss averaged over the training set:
// lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b))).
double hinge_objective(const Vector& weights, double bias, const Matrix& pos,
                       const Matrix& neg, double lambda_reg);

// Full-batch subgradient descent on hinge_objective for a fixed set of
// examples. Step 1/(lambda t) on the weights, R^2/(lambda t) on the bias
// (R^2 = mean squared row norm), ball projection, tail averaging.
LinearDetector fit_hinge(const Matrix& pos, const Matrix& neg, const TrainConfig& cfg);

// Hard-negative mining around fit_hinge: train on positives plus a negative
// cache, add every pool negative with score > -1, repeat until no new
// violators or cfg.max_rounds.
TrainingResult train_detector_traced(const FeatureMatrix& pos, const FeatureMatrix& neg,
                                     const TrainConfig& cfg, int class_id = 0,
                                     const Frame& frame = Frame::raw());

LinearDetector train_detector(const FeatureMatrix& pos, const FeatureMatrix& neg,
                              const TrainConfig& cfg, int class_id = 0,
                              const Frame& frame = Frame::raw());

// w.x_i + b for every row. `frame` declares the frame x lives in and must
// equal det.frame.
std::vector<double> score_proposals(const LinearDetector& det, const FeatureMatrix& x,
                                    const Frame& frame);

// Greedy NMS. Detections are visited in ranks_before order; a detection is
// suppressed when its IoU with an already-kept detection of the same image
// exceeds overlap_thresh.
std::vector<Detection> greedy_nms(std::vector<Detection> dets, double overlap_thresh);

}  // namespace subalign
