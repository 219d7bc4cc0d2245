#pragma once

#include "subalign/dataset.hpp"
#include "subalign/pipeline.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace subalign {

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;  // score of the detection that produced the point
};

struct MatchResult {
  std::vector<Detection> ranked;  // detections of the class in ranking order
  std::vector<bool> true_positive;
  std::size_t n_gt = 0;
};

// Greedy VOC-style matching: each ranked detection takes the highest-IoU
// unmatched ground truth of its image with IoU >= iou_thresh.
MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                             int class_id, double iou_thresh = 0.5);

std::vector<PRPoint> precision_recall_curve(const MatchResult& match);

// All-points interpolated AP. std::nullopt when the class has no ground truth.
std::optional<double> average_precision(const std::vector<Detection>& dets,
                                        const std::vector<GroundTruth>& gts, int class_id,
                                        double iou_thresh = 0.5);

// Unweighted mean over classes with a defined AP. Throws InvalidArgument if
// none is defined.
double mean_ap(const std::map<std::string, std::optional<double>>& per_class_ap);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;
};

// Uniform bins over [lo, hi], each left-closed right-open except the last,
// which is closed.
Histogram score_histogram(std::span<const double> scores, std::size_t bins, double lo, double hi);

struct SimilarityMatrix {
  std::vector<std::string> labels;
  std::vector<int> class_ids;
  Matrix values;  // (i, j): source subspace of class i vs target subspace of class j
};

// Cross-class similarity over every state carrying both subspaces.
SimilarityMatrix similarity_matrix(const std::vector<ClassAdaptationState>& states);

// Per-class AP of `dets` against the labeled dataset, keyed by class name.
std::map<std::string, std::optional<double>> per_class_ap(const std::vector<Detection>& dets,
                                                          const Dataset& labeled,
                                                          double iou_thresh = 0.5);

}  // namespace subalign
