#include "subalign/pipeline.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace subalign {

std::string to_string(AdaptationMode mode) {
  switch (mode) {
    case AdaptationMode::ClassSpecific:
      return "class-specific";
    case AdaptationMode::FullImage:
      return "full-image";
    case AdaptationMode::None:
      return "none";
  }
  return "none";
}

AdaptationMode parse_mode(const std::string& text) {
  if (text == "class-specific") return AdaptationMode::ClassSpecific;
  if (text == "full-image") return AdaptationMode::FullImage;
  if (text == "none") return AdaptationMode::None;
  throw InvalidArgument(
      fmt::format("mode must be class-specific, full-image or none, got '{}'", text));
}

std::string to_string(ClassStatus status) {
  switch (status) {
    case ClassStatus::Adapted:
      return "adapted";
    case ClassStatus::PassThrough:
      return "pass-through";
    case ClassStatus::Downgraded:
      return "downgraded";
    case ClassStatus::Skipped:
      return "skipped";
  }
  return "skipped";
}

ClassStatus parse_status(const std::string& text) {
  if (text == "adapted") return ClassStatus::Adapted;
  if (text == "pass-through") return ClassStatus::PassThrough;
  if (text == "downgraded") return ClassStatus::Downgraded;
  if (text == "skipped") return ClassStatus::Skipped;
  throw DataError(fmt::format("unknown class status '{}'", text));
}

void AdaptationConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidArgument(fmt::format("gamma must lie in (0, 1], got {}", gamma));
  }
  if (!std::isfinite(sigma)) throw InvalidArgument("sigma must be finite");
  if (d < 1) throw InvalidArgument(fmt::format("d must be at least 1, got {}", d));
  if (!(nms_thresh >= 0.0 && nms_thresh <= 1.0)) {
    throw InvalidArgument(fmt::format("nms_thresh must lie in [0, 1], got {}", nms_thresh));
  }
  if (!(neg_lambda >= 0.0 && neg_lambda <= gamma)) {
    throw InvalidArgument(fmt::format("neg_lambda must lie in [0, gamma], got {}", neg_lambda));
  }
  if (!std::isfinite(detect_thresh)) throw InvalidArgument("detect_thresh must be finite");
  if (!(train.lambda_reg > 0.0) || !std::isfinite(train.lambda_reg)) {
    throw InvalidArgument("lambda_reg must be positive");
  }
  if (train.max_rounds < 1 || train.iterations < 1 || train.initial_negatives < 1) {
    throw InvalidArgument("max_rounds, iterations and initial_negatives must be positive");
  }
}

namespace {

Eigen::RowVectorXd row_of(const Matrix& m, Index r) { return m.row(r); }

double max_iou_with(const BBox& box, const std::vector<GroundTruth>& gts, int class_id) {
  double best = 0.0;
  for (const auto& gt : gts) {
    if (gt.class_id == class_id) best = std::max(best, iou(box, gt.box));
  }
  return best;
}

TrainConfig class_train_config(const AdaptationConfig& cfg, int class_id) {
  TrainConfig t = cfg.train;
  t.seed = cfg.train.seed + static_cast<std::uint64_t>(class_id);
  return t;
}

const std::string& class_name(const Dataset& ds, int class_id) {
  return ds.classes.at(static_cast<std::size_t>(class_id));
}

}  // namespace

TrainingExamples mine_training_examples(const Dataset& source, int class_id, double gamma,
                                        double neg_lambda) {
  if (!source.labeled()) throw DataError(fmt::format("dataset '{}' has no ground truth", source.name));
  std::vector<Eigen::RowVectorXd> pos;
  std::vector<Eigen::RowVectorXd> neg;
  for (const auto& im : source.images) {
    for (Index r = 0; r < im.proposal_count(); ++r) {
      const double ov = max_iou_with(im.boxes[static_cast<std::size_t>(r)], *im.ground_truth, class_id);
      if (ov >= gamma) {
        pos.push_back(row_of(im.features, r));
      } else if (ov < neg_lambda) {
        neg.push_back(row_of(im.features, r));
      }
    }
  }
  TrainingExamples out{Matrix(static_cast<Index>(pos.size()), source.feature_dim),
                       Matrix(static_cast<Index>(neg.size()), source.feature_dim)};
  for (std::size_t i = 0; i < pos.size(); ++i) out.positives.row(static_cast<Index>(i)) = pos[i];
  for (std::size_t i = 0; i < neg.size(); ++i) out.negatives.row(static_cast<Index>(i)) = neg[i];
  return out;
}

FeatureMatrix mine_source_positives(const Dataset& source, int class_id, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidArgument(fmt::format("gamma must lie in (0, 1], got {}", gamma));
  }
  // neg_lambda = 0 keeps the negative set empty; only positives matter here.
  TrainingExamples ex = mine_training_examples(source, class_id, gamma, 0.0);
  if (ex.positives.rows() == 0) {
    throw DataError(fmt::format("class '{}': no source proposal reaches IoU {}",
                                class_name(source, class_id), gamma));
  }
  return FeatureMatrix(std::move(ex.positives));
}

std::vector<double> raw_scores(const Dataset& ds, const LinearDetector& det) {
  return score_proposals(det, ds.all_features(), Frame::raw());
}

FeatureMatrix mine_target_positives(const Dataset& target, const LinearDetector& initial,
                                    double sigma) {
  if (initial.frame.kind != FrameKind::Raw) {
    throw FrameError("target mining requires a raw-frame detector");
  }
  const FeatureMatrix all = target.all_features();
  const std::vector<double> scores = score_proposals(initial, all, Frame::raw());
  std::vector<Index> keep;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= sigma) keep.push_back(static_cast<Index>(i));
  }
  if (keep.empty()) {
    const std::string name = initial.class_id >= 0 &&
                                     initial.class_id < static_cast<int>(target.classes.size())
                                 ? class_name(target, initial.class_id)
                                 : std::to_string(initial.class_id);
    throw DataError(
        fmt::format("class '{}': no target proposal scores at or above sigma = {}", name, sigma));
  }
  Matrix m(static_cast<Index>(keep.size()), all.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) m.row(static_cast<Index>(i)) = all.values().row(keep[i]);
  return FeatureMatrix(std::move(m));
}

InitialDetectors train_initial_detectors(const Dataset& source, const AdaptationConfig& cfg) {
  cfg.validate();
  InitialDetectors out;
  for (int c = 0; c < static_cast<int>(source.classes.size()); ++c) {
    TrainingExamples ex = mine_training_examples(source, c, cfg.gamma, cfg.neg_lambda);
    if (ex.positives.rows() == 0 || ex.negatives.rows() == 0) {
      const std::string msg = fmt::format("{} positives and {} negatives; class skipped",
                                          ex.positives.rows(), ex.negatives.rows());
      spdlog::warn("class '{}': {}", class_name(source, c), msg);
      out.warnings.push_back({c, "train", msg});
      continue;
    }
    spdlog::debug("class '{}': training on {} positives, {} negatives", class_name(source, c),
                  ex.positives.rows(), ex.negatives.rows());
    out.detectors.emplace(c, train_detector(FeatureMatrix(std::move(ex.positives)),
                                            FeatureMatrix(std::move(ex.negatives)),
                                            class_train_config(cfg, c), c, Frame::raw()));
  }
  return out;
}

Frame ClassAdaptationState::frame() const {
  if (map) return Frame::aligned(map->source_id, map->target_id);
  return Frame::raw();
}

AdaptationResult pass_through(const Dataset& source, const InitialDetectors& initial) {
  AdaptationResult result;
  result.mode = AdaptationMode::None;
  for (int c = 0; c < static_cast<int>(source.classes.size()); ++c) {
    ClassAdaptationState st;
    st.class_id = c;
    st.class_name = class_name(source, c);
    const auto it = initial.detectors.find(c);
    if (it != initial.detectors.end()) {
      st.detector = it->second;
      st.diagnostics.status = ClassStatus::PassThrough;
    } else {
      st.diagnostics.status = ClassStatus::Skipped;
      st.diagnostics.reason = "no initial detector";
    }
    result.states.push_back(std::move(st));
  }
  return result;
}

namespace {

void downgrade(ClassAdaptationState& st, const LinearDetector& initial, std::string reason,
               std::vector<Diagnostic>& diags) {
  spdlog::warn("class '{}' downgraded: {}", st.class_name, reason);
  st.source_subspace.reset();
  st.target_subspace.reset();
  st.map.reset();
  st.detector = initial;
  st.diagnostics.status = ClassStatus::Downgraded;
  st.diagnostics.reason = reason;
  diags.push_back({st.class_id, "adapt", std::move(reason)});
}

// Retrains a class in the frame of (source, target): both example sets are
// normalized with the source stats and projected through Xa.
LinearDetector retrain_aligned(const TrainingExamples& ex, const Subspace& source,
                               const AlignmentMap& map, const TrainConfig& train, int class_id) {
  const AlignedBasis xa = aligned_source_basis(source, map);
  const auto to_frame = [&](const Matrix& raw) {
    return project_for_training(normalize(FeatureMatrix(raw), source.stats).features, source, xa);
  };
  return train_detector(to_frame(ex.positives), to_frame(ex.negatives), train, class_id,
                        Frame::aligned(map.source_id, map.target_id));
}

// Builds a subspace, reporting failures as a reason string instead of throwing.
std::optional<Subspace> try_subspace(const FeatureMatrix& raw, Index d, const std::string& id,
                                     std::string& reason) {
  if (raw.rows() < d + 1) {
    reason = fmt::format("{} has {} samples, needs at least d + 1 = {}", id, raw.rows(), d + 1);
    return std::nullopt;
  }
  if (raw.cols() < d) {
    reason = fmt::format("{}: d = {} exceeds feature dimension {}", id, d, raw.cols());
    return std::nullopt;
  }
  try {
    return learn_subspace(raw, d, id);
  } catch (const NumericalError& e) {
    reason = fmt::format("{}: {}", id, e.what());
  } catch (const InvalidArgument& e) {
    reason = fmt::format("{}: {}", id, e.what());
  }
  return std::nullopt;
}

}  // namespace

AdaptationResult adapt(const Dataset& source, const Dataset& target,
                       const InitialDetectors& initial, const AdaptationConfig& cfg) {
  cfg.validate();
  if (source.classes != target.classes) {
    throw DataError("source and target datasets declare different class lists");
  }
  if (source.feature_dim != target.feature_dim) {
    throw DataError(fmt::format("source features are {}-dimensional, target {}",
                                source.feature_dim, target.feature_dim));
  }
  if (cfg.mode == AdaptationMode::None) return pass_through(source, initial);

  AdaptationResult result;
  result.mode = cfg.mode;

  std::optional<Subspace> shared_source;
  std::optional<Subspace> shared_target;
  std::string shared_failure;
  if (cfg.mode == AdaptationMode::FullImage) {
    shared_source = try_subspace(source.all_features(), cfg.d, "full/source", shared_failure);
    if (shared_source) {
      shared_target = try_subspace(target.all_features(), cfg.d, "full/target", shared_failure);
    }
  }

  for (int c = 0; c < static_cast<int>(source.classes.size()); ++c) {
    ClassAdaptationState st;
    st.class_id = c;
    st.class_name = class_name(source, c);
    const auto it = initial.detectors.find(c);
    if (it == initial.detectors.end()) {
      st.diagnostics.status = ClassStatus::Skipped;
      st.diagnostics.reason = "no initial detector";
      result.states.push_back(std::move(st));
      continue;
    }
    const LinearDetector& init = it->second;
    const TrainingExamples ex = mine_training_examples(source, c, cfg.gamma, cfg.neg_lambda);
    st.diagnostics.n_pos_src = ex.positives.rows();

    std::optional<FeatureMatrix> tgt_pos;
    std::string tgt_failure;
    try {
      tgt_pos = mine_target_positives(target, init, cfg.sigma);
      st.diagnostics.n_pos_tgt = tgt_pos->rows();
    } catch (const DataError& e) {
      tgt_failure = e.what();
    }

    if (cfg.mode == AdaptationMode::ClassSpecific) {
      if (!tgt_pos) {
        downgrade(st, init, tgt_failure, result.diagnostics);
        result.states.push_back(std::move(st));
        continue;
      }
      std::string reason;
      const std::string prefix = "class:" + st.class_name;
      auto s = try_subspace(FeatureMatrix(ex.positives), cfg.d, prefix + "/source", reason);
      std::optional<Subspace> t;
      if (s) t = try_subspace(*tgt_pos, cfg.d, prefix + "/target", reason);
      if (!s || !t) {
        downgrade(st, init, reason, result.diagnostics);
        result.states.push_back(std::move(st));
        continue;
      }
      st.source_subspace = std::move(s);
      st.target_subspace = std::move(t);
    } else {
      if (!shared_source || !shared_target) {
        downgrade(st, init, shared_failure, result.diagnostics);
        result.states.push_back(std::move(st));
        continue;
      }
      st.source_subspace = shared_source;
      st.target_subspace = shared_target;
    }

    st.map = solve_alignment(*st.source_subspace, *st.target_subspace);
    st.detector = retrain_aligned(ex, *st.source_subspace, *st.map, class_train_config(cfg, c), c);
    st.diagnostics.status = ClassStatus::Adapted;
    spdlog::debug("class '{}': adapted, similarity {:.4f}", st.class_name,
                  subspace_similarity(*st.source_subspace, *st.target_subspace));
    result.states.push_back(std::move(st));
  }
  return result;
}

FeatureMatrix target_features_in_frame(const Dataset& target, const ClassAdaptationState& state) {
  FeatureMatrix all = target.all_features();
  if (!state.aligned()) return all;
  const Subspace& t = *state.target_subspace;
  return project_for_testing(normalize(all, t.stats).features, t);
}

std::vector<Detection> detect(const Dataset& target, const AdaptationResult& adaptation,
                              const AdaptationConfig& cfg) {
  std::vector<Detection> out;
  for (const auto& st : adaptation.states) {
    if (!st.detector) continue;
    const FeatureMatrix x = target_features_in_frame(target, st);
    const std::vector<double> scores = score_proposals(*st.detector, x, st.frame());
    std::vector<Detection> candidates;
    std::size_t row = 0;
    for (const auto& im : target.images) {
      for (const auto& box : im.boxes) {
        const double s = scores[row++];
        if (s >= cfg.detect_thresh) candidates.push_back({im.id, box, st.class_id, s});
      }
    }
    auto kept = greedy_nms(std::move(candidates), cfg.nms_thresh);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

}  // namespace subalign
