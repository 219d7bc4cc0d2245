#pragma once

#include "subalign/alignment.hpp"
#include "subalign/dataset.hpp"
#include "subalign/detection.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace subalign {

enum class AdaptationMode { ClassSpecific, FullImage, None };

std::string to_string(AdaptationMode mode);
AdaptationMode parse_mode(const std::string& text);

struct AdaptationConfig {
  double gamma = 0.7;   // source positive IoU threshold
  double sigma = 0.4;   // target mining score threshold
  Index d = 100;        // subspace dimension
  AdaptationMode mode = AdaptationMode::ClassSpecific;
  double nms_thresh = 0.3;
  double neg_lambda = 0.3;     // negatives: max IoU with same-class GT below this
  double detect_thresh = 0.0;  // detection-time score cut, separate from sigma
  TrainConfig train;

  // Throws InvalidArgument on any out-of-domain field.
  void validate() const;
};

struct Diagnostic {
  int class_id = -1;  // -1 for dataset-wide records
  std::string stage;
  std::string message;
};

// Source proposals split by IoU with ground truth of one class. Proposals
// with IoU in [neg_lambda, gamma) are left out of both.
struct TrainingExamples {
  Matrix positives;
  Matrix negatives;
};

TrainingExamples mine_training_examples(const Dataset& source, int class_id, double gamma,
                                        double neg_lambda);

// Features of every source proposal with IoU >= gamma against a ground-truth
// box of the class. Throws DataError naming the class when nothing qualifies.
FeatureMatrix mine_source_positives(const Dataset& source, int class_id, double gamma);

// Features of every target proposal the raw-frame detector scores >= sigma.
// No NMS at this stage. Throws DataError naming the class when empty.
FeatureMatrix mine_target_positives(const Dataset& target, const LinearDetector& initial,
                                    double sigma);

struct InitialDetectors {
  std::map<int, LinearDetector> detectors;  // keyed by class id
  std::vector<Diagnostic> warnings;         // classes skipped for lack of positives
};

InitialDetectors train_initial_detectors(const Dataset& source, const AdaptationConfig& cfg);

enum class ClassStatus {
  Adapted,      // retrained in an aligned frame
  PassThrough,  // mode none: initial detector kept
  Downgraded,   // subspace construction failed; initial detector kept
  Skipped,      // no initial detector
};

std::string to_string(ClassStatus status);
ClassStatus parse_status(const std::string& text);

struct ClassDiagnostics {
  Index n_pos_src = 0;
  Index n_pos_tgt = 0;
  ClassStatus status = ClassStatus::PassThrough;
  std::string reason;
};

struct ClassAdaptationState {
  int class_id = 0;
  std::string class_name;
  std::optional<Subspace> source_subspace;
  std::optional<Subspace> target_subspace;
  std::optional<AlignmentMap> map;
  std::optional<LinearDetector> detector;
  ClassDiagnostics diagnostics;

  bool aligned() const { return map.has_value(); }
  // Frame test-time features are expressed in for this state's detector.
  Frame frame() const;
};

struct AdaptationResult {
  AdaptationMode mode = AdaptationMode::ClassSpecific;
  std::vector<ClassAdaptationState> states;  // one per class, in class order
  std::vector<Diagnostic> diagnostics;
};

// Runs the alignment stage for every class (or once, dataset wide, in
// full-image mode) and retrains the detectors in the aligned frames. A class
// whose subspaces cannot be built falls back to its initial detector.
AdaptationResult adapt(const Dataset& source, const Dataset& target,
                       const InitialDetectors& initial, const AdaptationConfig& cfg);

// Target features, one row per proposal in dataset order, expressed in the
// state's test frame.
FeatureMatrix target_features_in_frame(const Dataset& target, const ClassAdaptationState& state);

// Scores target proposals per class, keeps scores >= detect_thresh, applies
// greedy NMS per class, and returns the union in class order.
std::vector<Detection> detect(const Dataset& target, const AdaptationResult& adaptation,
                              const AdaptationConfig& cfg);

// Raw scores of every proposal under the initial detector of a class.
std::vector<double> raw_scores(const Dataset& ds, const LinearDetector& det);

// Wraps initial detectors as pass-through states (mode none).
AdaptationResult pass_through(const Dataset& source, const InitialDetectors& initial);

}  // namespace subalign
