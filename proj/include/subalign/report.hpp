#pragma once

#include "subalign/config.hpp"
#include "subalign/evaluation.hpp"
#include "subalign/pipeline.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace subalign {

inline constexpr const char* kApConvention = "all-points interpolated AP, VOC greedy matching";

struct ClassReport {
  int class_id = 0;
  std::string name;
  std::optional<double> ap;
  std::optional<double> baseline_ap;
  Index n_pos_src = 0;
  Index n_pos_tgt = 0;
  std::optional<double> similarity_diag;
  std::optional<ClassStatus> status;  // absent when no adaptation states were supplied
  std::string reason;
  bool weak = false;
};

struct RunReport {
  std::optional<AdaptationMode> mode;
  std::vector<ClassReport> classes;
  std::optional<double> mean_ap;
  std::optional<double> baseline_mean_ap;
  std::vector<std::string> weak_classes;
  std::vector<Diagnostic> diagnostics;
  std::map<std::string, std::string> config;
};

// Class ids whose diagonal similarity falls below `ratio` times the mean
// diagonal of the other classes in the matrix. Needs at least two classes.
std::vector<int> weak_class_ids(const SimilarityMatrix& sim, double ratio);

// Assembles the report. `labeled_target` supplies ground truth; when it has
// none, AP fields stay empty. `adaptation` may be null, in which case the
// per-class diagnostics stay empty. `baseline` holds no-adaptation detections.
RunReport build_report(const Dataset& labeled_target, const AdaptationResult* adaptation,
                       const std::vector<Detection>& detections,
                       const std::vector<Detection>* baseline, const RunConfig& cfg);

nlohmann::json to_json(const RunReport& report);
nlohmann::json to_json(const Histogram& h);
nlohmann::json to_json(const SimilarityMatrix& m);

// Raw initial-detector score histograms of one dataset: all classes pooled
// under "all", and one entry per class name.
nlohmann::json score_histograms(const Dataset& ds, const InitialDetectors& initial,
                                const RunConfig& cfg);

std::string histogram_svg(const Histogram& h, const std::string& title);
std::string similarity_svg(const SimilarityMatrix& m, Index d);

}  // namespace subalign
