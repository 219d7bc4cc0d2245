#include "subalign/evaluation.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace subalign {

MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                             int class_id, double iou_thresh) {
  MatchResult out;
  for (const auto& d : dets) {
    if (d.class_id == class_id) out.ranked.push_back(d);
  }
  std::sort(out.ranked.begin(), out.ranked.end(), ranks_before);

  std::vector<const GroundTruth*> cls_gts;
  for (const auto& g : gts) {
    if (g.class_id == class_id) cls_gts.push_back(&g);
  }
  out.n_gt = cls_gts.size();
  std::vector<char> matched(cls_gts.size(), 0);

  out.true_positive.reserve(out.ranked.size());
  for (const auto& d : out.ranked) {
    double best = -1.0;
    std::size_t best_idx = cls_gts.size();
    for (std::size_t g = 0; g < cls_gts.size(); ++g) {
      if (matched[g] || cls_gts[g]->image_id != d.image_id) continue;
      const double ov = iou(d.box, cls_gts[g]->box);
      if (ov >= iou_thresh && ov > best) {
        best = ov;
        best_idx = g;
      }
    }
    if (best_idx < cls_gts.size()) {
      matched[best_idx] = 1;
      out.true_positive.push_back(true);
    } else {
      out.true_positive.push_back(false);
    }
  }
  return out;
}

std::vector<PRPoint> precision_recall_curve(const MatchResult& match) {
  std::vector<PRPoint> curve;
  curve.reserve(match.ranked.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < match.ranked.size(); ++i) {
    if (match.true_positive[i]) ++tp;
    const double recall = match.n_gt ? static_cast<double>(tp) / static_cast<double>(match.n_gt) : 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(i + 1);
    curve.push_back({recall, precision, match.ranked[i].score});
  }
  return curve;
}

std::optional<double> average_precision(const std::vector<Detection>& dets,
                                        const std::vector<GroundTruth>& gts, int class_id,
                                        double iou_thresh) {
  const MatchResult match = match_detections(dets, gts, class_id, iou_thresh);
  if (match.n_gt == 0) return std::nullopt;
  const auto curve = precision_recall_curve(match);

  // Envelope: precision at recall r is the best precision at any recall >= r.
  std::vector<double> rec{0.0};
  std::vector<double> prec{0.0};
  for (const auto& p : curve) {
    rec.push_back(p.recall);
    prec.push_back(p.precision);
  }
  for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);

  double ap = 0.0;
  for (std::size_t i = 1; i < rec.size(); ++i) ap += (rec[i] - rec[i - 1]) * prec[i];
  return std::clamp(ap, 0.0, 1.0);
}

double mean_ap(const std::map<std::string, std::optional<double>>& per_class_ap) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [name, ap] : per_class_ap) {
    if (ap) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("mean AP undefined: no class has ground truth");
  return sum / static_cast<double>(n);
}

Histogram score_histogram(std::span<const double> scores, std::size_t bins, double lo, double hi) {
  if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw InvalidArgument(fmt::format("invalid histogram range [{}, {}]", lo, hi));
  }
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0), 0, 0};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double s : scores) {
    if (std::isnan(s)) throw InvalidArgument("histogram input contains NaN");
    if (s < lo) {
      ++h.underflow;
    } else if (s > hi) {
      ++h.overflow;
    } else {
      auto idx = static_cast<std::size_t>(std::floor((s - lo) / width));
      h.counts[std::min(idx, bins - 1)] += 1;
    }
  }
  return h;
}

SimilarityMatrix similarity_matrix(const std::vector<ClassAdaptationState>& states) {
  std::vector<const ClassAdaptationState*> usable;
  for (const auto& st : states) {
    if (st.source_subspace && st.target_subspace) usable.push_back(&st);
  }
  SimilarityMatrix sm;
  const auto n = static_cast<Index>(usable.size());
  sm.values = Matrix::Zero(n, n);
  for (const auto* st : usable) {
    sm.labels.push_back(st->class_name);
    sm.class_ids.push_back(st->class_id);
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const Subspace& s = *usable[static_cast<std::size_t>(i)]->source_subspace;
      const Subspace& t = *usable[static_cast<std::size_t>(j)]->target_subspace;
      if (s.ambient_dim() != t.ambient_dim() || s.dim() != t.dim()) {
        throw DimensionError(fmt::format("subspaces of '{}' and '{}' have different shapes",
                                         sm.labels[static_cast<std::size_t>(i)],
                                         sm.labels[static_cast<std::size_t>(j)]));
      }
      sm.values(i, j) = subspace_similarity(s, t);
    }
  }
  return sm;
}

std::map<std::string, std::optional<double>> per_class_ap(const std::vector<Detection>& dets,
                                                          const Dataset& labeled,
                                                          double iou_thresh) {
  if (!labeled.labeled()) {
    throw DataError(fmt::format("dataset '{}' has no ground truth to evaluate against", labeled.name));
  }
  std::map<std::string, std::optional<double>> out;
  for (int c = 0; c < static_cast<int>(labeled.classes.size()); ++c) {
    out[labeled.classes[static_cast<std::size_t>(c)]] =
        average_precision(dets, ground_truth_for_class(labeled, c), c, iou_thresh);
  }
  return out;
}

}  // namespace subalign
