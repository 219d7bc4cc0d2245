#include "subalign/detection.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace subalign {

bool BBox::valid() const noexcept {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_max >= x_min && y_max >= y_min;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = iw > 0.0 && ih > 0.0 ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  return a.box < b.box;
}

Frame Frame::aligned(const std::string& source_id, const std::string& target_id) {
  return {FrameKind::TargetAligned, source_id + "->" + target_id};
}

std::string Frame::to_string() const {
  switch (kind) {
    case FrameKind::Raw:
      return "raw";
    case FrameKind::SourcePca:
      return "source-pca:" + key;
    case FrameKind::TargetAligned:
      return "target-aligned:" + key;
  }
  return "raw";
}

Frame Frame::parse(const std::string& text) {
  if (text == "raw") return raw();
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string key = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "source-pca") return {FrameKind::SourcePca, key};
  if (kind == "target-aligned") return {FrameKind::TargetAligned, key};
  throw DataError(fmt::format("unknown frame '{}'", text));
}

double hinge_objective(const Vector& weights, double bias, const Matrix& pos, const Matrix& neg,
                       double lambda_reg) {
  const double n = static_cast<double>(pos.rows() + neg.rows());
  const Vector sp = (pos * weights).array() + bias;
  const Vector sn = (neg * weights).array() + bias;
  const double loss = (1.0 - sp.array()).cwiseMax(0.0).sum() + (1.0 + sn.array()).cwiseMax(0.0).sum();
  return 0.5 * lambda_reg * weights.squaredNorm() + loss / n;
}

LinearDetector fit_hinge(const Matrix& pos, const Matrix& neg, const TrainConfig& cfg) {
  if (pos.cols() != neg.cols()) {
    throw DimensionError(fmt::format("positive features are {}-dimensional, negatives {}",
                                     pos.cols(), neg.cols()));
  }
  if (cfg.lambda_reg <= 0.0 || cfg.iterations < 1) {
    throw InvalidArgument("lambda_reg must be positive and iterations at least 1");
  }
  const Index np = pos.rows();
  const Index n = np + neg.rows();
  const Index k = pos.cols();

  Matrix x(n, k);
  x.topRows(np) = pos;
  x.bottomRows(neg.rows()) = neg;
  Vector y(n);
  y.head(np).setOnes();
  y.tail(neg.rows()).setConstant(-1.0);

  const Vector row_norms = x.rowwise().squaredNorm();
  const double mean_sq = row_norms.mean();
  const double lambda = cfg.lambda_reg;
  const double radius = std::sqrt(2.0 / lambda);
  const double bias_bound = radius * std::sqrt(row_norms.maxCoeff()) + 1.0;
  const double inv_n = 1.0 / static_cast<double>(n);

  Vector w = Vector::Zero(k);
  double b = 0.0;
  Vector w_sum = Vector::Zero(k);
  double b_sum = 0.0;
  const int tail_start = cfg.iterations / 2;
  Vector coef(n);

  for (int t = 1; t <= cfg.iterations; ++t) {
    const Vector margins = y.cwiseProduct((x * w).array().matrix() + Vector::Constant(n, b));
    double grad_b = 0.0;
    for (Index i = 0; i < n; ++i) {
      const bool violates = margins(i) < 1.0;
      coef(i) = violates ? y(i) : 0.0;
      if (violates) grad_b -= y(i);
    }
    grad_b *= inv_n;
    const Vector grad_w = lambda * w - inv_n * (x.transpose() * coef);

    const double eta = 1.0 / (lambda * static_cast<double>(t));
    w -= eta * grad_w;
    b -= eta * mean_sq * grad_b;

    const double norm = w.norm();
    if (norm > radius) w *= radius / norm;
    b = std::clamp(b, -bias_bound, bias_bound);

    if (t > tail_start) {
      w_sum += w;
      b_sum += b;
    }
  }
  const double count = static_cast<double>(cfg.iterations - tail_start);
  LinearDetector det;
  det.weights = w_sum / count;
  det.bias = b_sum / count;
  return det;
}

namespace {

// Portable seeded permutation prefix (std::shuffle is implementation defined).
std::vector<Index> seeded_subset(Index pool, Index count, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(pool));
  for (Index i = 0; i < pool; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < std::min(count, pool); ++i) {
    const auto span = static_cast<std::uint64_t>(pool - i);
    const auto j = i + static_cast<Index>(rng() % span);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(std::min(count, pool)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

TrainingResult train_detector_traced(const FeatureMatrix& pos, const FeatureMatrix& neg,
                                     const TrainConfig& cfg, int class_id, const Frame& frame) {
  if (pos.cols() != neg.cols()) {
    throw DimensionError(fmt::format("positive features are {}-dimensional, negatives {}",
                                     pos.cols(), neg.cols()));
  }
  if (cfg.max_rounds < 1) throw InvalidArgument("max_rounds must be at least 1");

  const Matrix& pool = neg.values();
  const Index initial = std::max<Index>(cfg.initial_negatives, 1);
  std::vector<Index> cache = seeded_subset(pool.rows(), initial, cfg.seed);
  std::vector<char> in_cache(static_cast<std::size_t>(pool.rows()), 0);
  for (Index i : cache) in_cache[static_cast<std::size_t>(i)] = 1;

  TrainingResult result;
  LinearDetector first;
  LinearDetector current;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    result.trace.cache_sizes.push_back(static_cast<Index>(cache.size()));
    current = fit_hinge(pos.values(), gather_rows(pool, cache), cfg);
    result.trace.rounds = round;
    if (round == 1) first = current;
    if (round == cfg.max_rounds) break;

    const Vector scores = (pool * current.weights).array() + current.bias;
    std::size_t added = 0;
    for (Index i = 0; i < pool.rows(); ++i) {
      if (!in_cache[static_cast<std::size_t>(i)] && scores(i) > -1.0) {
        in_cache[static_cast<std::size_t>(i)] = 1;
        cache.push_back(i);
        ++added;
      }
    }
    if (added == 0) break;
    std::sort(cache.begin(), cache.end());
  }

  const Matrix final_neg = gather_rows(pool, cache);
  result.trace.first_round_objective =
      hinge_objective(first.weights, first.bias, pos.values(), final_neg, cfg.lambda_reg);
  result.trace.final_objective =
      hinge_objective(current.weights, current.bias, pos.values(), final_neg, cfg.lambda_reg);

  current.class_id = class_id;
  current.frame = frame;
  result.detector = std::move(current);
  return result;
}

LinearDetector train_detector(const FeatureMatrix& pos, const FeatureMatrix& neg,
                              const TrainConfig& cfg, int class_id, const Frame& frame) {
  return train_detector_traced(pos, neg, cfg, class_id, frame).detector;
}

std::vector<double> score_proposals(const LinearDetector& det, const FeatureMatrix& x,
                                    const Frame& frame) {
  if (!(frame == det.frame)) {
    throw FrameError(fmt::format("detector for class {} was trained in frame '{}' but scored in '{}'",
                                 det.class_id, det.frame.to_string(), frame.to_string()));
  }
  if (x.cols() != det.weights.size()) {
    throw DimensionError(fmt::format("detector expects {}-dimensional features, got {}",
                                     det.weights.size(), x.cols()));
  }
  const Vector s = (x.values() * det.weights).array() + det.bias;
  return {s.data(), s.data() + s.size()};
}

std::vector<Detection> greedy_nms(std::vector<Detection> dets, double overlap_thresh) {
  std::sort(dets.begin(), dets.end(), ranks_before);
  std::vector<Detection> kept;
  std::vector<char> suppressed(dets.size(), 0);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      if (!suppressed[j] && dets[j].image_id == dets[i].image_id &&
          iou(dets[i].box, dets[j].box) > overlap_thresh) {
        suppressed[j] = 1;
      }
    }
  }
  return kept;
}

}  // namespace subalign
