#include "support/oracles.hpp"

#include "subalign/detection.hpp"
#include "subalign/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace subalign;

namespace {

Matrix blob(std::mt19937_64& rng, Index n, double cx, double cy) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(n, 2);
  for (Index i = 0; i < n; ++i) {
    m(i, 0) = cx + 0.5 * n01(rng);
    m(i, 1) = cy + 0.5 * n01(rng);
  }
  return m;
}

BBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 20.0);
  std::uniform_real_distribution<double> size(2.0, 10.0);
  const double x = pos(rng);
  const double y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

}  // namespace

TEST(Iou, RectangleArithmetic) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {5, 5, 6, 6}), 0.0);
  EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(iou({1, 1, 1, 1}, {1, 1, 1, 1}), 0.0);
}

TEST(Iou, SymmetricBoundedAndMatchesOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 2000; ++t) {
    const BBox a = random_box(rng);
    const BBox b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_DOUBLE_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, oracle::box_iou(a, b), 1e-14);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  }
}

TEST(BBox, Validity) {
  EXPECT_TRUE((BBox{0, 0, 1, 1}).valid());
  EXPECT_TRUE((BBox{1, 1, 1, 1}).valid());
  EXPECT_FALSE((BBox{2, 0, 1, 1}).valid());
  EXPECT_FALSE((BBox{0, 0, std::nan(""), 1}).valid());
}

TEST(Frame, TextRoundTrip) {
  for (const Frame& f : {Frame::raw(), Frame::aligned("class:a/source", "class:a/target")}) {
    EXPECT_EQ(Frame::parse(f.to_string()), f);
  }
  EXPECT_THROW(Frame::parse("sideways"), DataError);
}

TEST(TrainDetector, SeparableBlobsGeneralize) {
  std::mt19937_64 rng(2);
  const FeatureMatrix pos(blob(rng, 200, 2, 0));
  const FeatureMatrix neg(blob(rng, 200, -2, 0));
  const auto det = train_detector(pos, neg, TrainConfig{});
  const auto sp = score_proposals(det, FeatureMatrix(blob(rng, 500, 2, 0)), Frame::raw());
  const auto sn = score_proposals(det, FeatureMatrix(blob(rng, 500, -2, 0)), Frame::raw());
  int correct = 0;
  for (double s : sp) correct += s > 0;
  for (double s : sn) correct += s < 0;
  EXPECT_GE(correct, 990);
}

TEST(TrainDetector, IdenticalPointsScoreEqually) {
  const FeatureMatrix p(Matrix::Constant(1, 3, 0.7));
  const auto det = train_detector(p, p, TrainConfig{});
  const auto s = score_proposals(det, p, Frame::raw());
  EXPECT_EQ(s[0] - s[0], 0.0);
  EXPECT_TRUE(det.weights.allFinite());
}

TEST(TrainDetector, ScaleCovariantWithRescaledRegularization) {
  std::mt19937_64 rng(3);
  const Matrix pos = blob(rng, 80, 1, 0.5);
  const Matrix neg = blob(rng, 120, -1, -0.5);
  TrainConfig cfg;
  const auto det = train_detector(FeatureMatrix(pos), FeatureMatrix(neg), cfg);
  TrainConfig scaled = cfg;
  scaled.lambda_reg = cfg.lambda_reg * 100.0;
  const auto det10 = train_detector(FeatureMatrix(Matrix(pos * 10.0)), FeatureMatrix(Matrix(neg * 10.0)), scaled);

  const Matrix test = blob(rng, 400, 0, 0);
  const auto s = score_proposals(det, FeatureMatrix(test), Frame::raw());
  const auto s10 = score_proposals(det10, FeatureMatrix(Matrix(test * 10.0)), Frame::raw());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(s[i], s10[i], 1e-8);
    if (std::abs(s[i]) > 1e-6) EXPECT_EQ(s[i] > 0, s10[i] > 0);
  }
}

TEST(TrainDetector, DeterministicBitwise) {
  std::mt19937_64 rng(4);
  const FeatureMatrix pos(oracle::gaussian_matrix(rng, 40, 6));
  const FeatureMatrix neg(oracle::gaussian_matrix(rng, 600, 6));
  TrainConfig cfg;
  cfg.seed = 42;
  const auto a = train_detector(pos, neg, cfg);
  const auto b = train_detector(pos, neg, cfg);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(TrainDetector, HardNegativeRoundsDoNotIncreaseObjective) {
  std::mt19937_64 rng(5);
  Matrix pos = oracle::gaussian_matrix(rng, 60, 5);
  pos.col(0).array() += 1.5;
  const Matrix neg = oracle::gaussian_matrix(rng, 2000, 5);
  TrainConfig cfg;
  cfg.initial_negatives = 64;
  const auto r = train_detector_traced(FeatureMatrix(pos), FeatureMatrix(neg), cfg);
  ASSERT_GE(r.trace.rounds, 2);
  EXPECT_LE(r.trace.final_objective, r.trace.first_round_objective);
  for (std::size_t i = 1; i < r.trace.cache_sizes.size(); ++i)
    EXPECT_GT(r.trace.cache_sizes[i], r.trace.cache_sizes[i - 1]);
  EXPECT_LE(r.trace.rounds, cfg.max_rounds);
}

TEST(TrainDetector, DimensionMismatchThrows) {
  EXPECT_THROW(train_detector(FeatureMatrix(Matrix::Ones(2, 3)), FeatureMatrix(Matrix::Ones(2, 4)), TrainConfig{}),
               DimensionError);
}

TEST(HingeObjective, MatchesHandComputation) {
  Matrix pos(1, 2), neg(1, 2);
  pos << 1, 0;
  neg << 0, 1;
  Vector w(2);
  w << 0.5, 0.5;
  // pos margin 0.5 (loss 0.5), neg score 0.5 (loss 1.5), |w|^2 = 0.5.
  EXPECT_NEAR(hinge_objective(w, 0.0, pos, neg, 0.1), 0.05 * 0.5 + 1.0, 1e-15);
}

TEST(ScoreProposals, HandCasesAndDoubleLoop) {
  LinearDetector e1;
  e1.weights = Vector::Unit(4, 0);
  Matrix x = Matrix::Zero(1, 4);
  x(0, 0) = 3.0;
  EXPECT_EQ(score_proposals(e1, FeatureMatrix(x), Frame::raw())[0], 3.0);

  LinearDetector bias_only;
  bias_only.weights = Vector::Zero(4);
  bias_only.bias = -0.25;
  for (double s : score_proposals(bias_only, FeatureMatrix(Matrix::Random(5, 4)), Frame::raw())) EXPECT_EQ(s, -0.25);

  std::mt19937_64 rng(6);
  LinearDetector det;
  det.weights = oracle::gaussian_matrix(rng, 7, 1).col(0);
  det.bias = 0.3;
  const Matrix m = oracle::gaussian_matrix(rng, 25, 7);
  const auto s = score_proposals(det, FeatureMatrix(m), Frame::raw());
  for (Index i = 0; i < m.rows(); ++i) {
    double ref = det.bias;
    for (Index j = 0; j < m.cols(); ++j) ref += det.weights(j) * m(i, j);
    EXPECT_NEAR(s[static_cast<std::size_t>(i)], ref, 1e-12);
  }
}

TEST(ScoreProposals, FrameAndShapeEnforced) {
  LinearDetector det;
  det.weights = Vector::Ones(3);
  EXPECT_THROW(score_proposals(det, FeatureMatrix(Matrix::Ones(2, 3)), Frame::aligned("s", "t")), FrameError);
  EXPECT_THROW(score_proposals(det, FeatureMatrix(Matrix::Ones(2, 4)), Frame::raw()), DimensionError);
}

TEST(Ranking, ScoreThenImageThenBox) {
  const Detection a{1, {0, 0, 1, 1}, 0, 0.9};
  const Detection b{0, {0, 0, 1, 1}, 0, 0.8};
  const Detection c{0, {1, 0, 2, 1}, 0, 0.8};
  const Detection d{1, {0, 0, 1, 1}, 0, 0.8};
  EXPECT_TRUE(ranks_before(a, b));
  EXPECT_TRUE(ranks_before(b, c));
  EXPECT_TRUE(ranks_before(b, d));
  EXPECT_FALSE(ranks_before(b, b));
}

TEST(Nms, HandCases) {
  const auto one = greedy_nms({{0, {0, 0, 10, 10}, 0, 0.8}, {0, {0, 0, 10, 10}, 0, 0.9}}, 0.5);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].score, 0.9);
  EXPECT_EQ(greedy_nms({{0, {0, 0, 1, 1}, 0, 0.8}, {0, {5, 5, 6, 6}, 0, 0.9}}, 0.5).size(), 2u);
  // Identical boxes in different images never suppress each other.
  EXPECT_EQ(greedy_nms({{0, {0, 0, 1, 1}, 0, 0.8}, {1, {0, 0, 1, 1}, 0, 0.9}}, 0.5).size(), 2u);
  EXPECT_TRUE(greedy_nms({}, 0.3).empty());
}

TEST(Nms, MatchesExhaustiveReference) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> coarse(0, 4);
  for (int t = 0; t < 1000; ++t) {
    std::vector<Detection> dets;
    for (int i = 0; i < 10; ++i) {
      // Coarse scores force ties so the tie-break path is exercised too.
      const double score = t % 2 ? coarse(rng) * 0.25 : std::uniform_real_distribution<double>(0, 1)(rng);
      dets.push_back({static_cast<ImageId>(rng() % 2), random_box(rng), 0, score});
    }
    EXPECT_EQ(greedy_nms(dets, 0.3), oracle::exhaustive_nms(dets, 0.3)) << "instance " << t;
  }
}

TEST(Nms, OutputProperties) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<Detection> dets;
    for (int i = 0; i < 15; ++i)
      dets.push_back({0, random_box(rng), 0, std::uniform_real_distribution<double>(0, 1)(rng)});
    const double thresh = 0.1 * static_cast<double>(t % 8);
    const auto kept = greedy_nms(dets, thresh);
    for (std::size_t i = 1; i < kept.size(); ++i) EXPECT_GE(kept[i - 1].score, kept[i].score);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LE(iou(kept[i].box, kept[j].box), thresh);
    for (const auto& d : dets) {
      if (std::find(kept.begin(), kept.end(), d) != kept.end()) continue;
      bool covered = false;
      for (const auto& k : kept) covered |= ranks_before(k, d) && iou(k.box, d.box) > thresh;
      EXPECT_TRUE(covered);
    }
    EXPECT_EQ(greedy_nms(kept, thresh), kept);
  }
}
