#include "support/oracles.hpp"

#include "subalign/error.hpp"
#include "subalign/evaluation.hpp"
#include "subalign/pipeline.hpp"
#include "subalign/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace subalign;

namespace {

SynthShiftSpec small_spec() {
  SynthShiftSpec s;
  s.n_classes = 3;
  s.dim = 12;
  s.samples_per_class = 60;
  s.seed = 21;
  return s;
}

AdaptationConfig small_config() {
  AdaptationConfig c;
  c.d = 4;
  return c;
}

const SynthResult& small_scenario() {
  static const SynthResult r = generate_synthetic(small_spec());
  return r;
}

// Classes far apart, no partial overlaps: score >= sigma then picks out the
// same proposals as IoU >= gamma.
SynthShiftSpec clean_spec() {
  SynthShiftSpec s = small_spec();
  s.class_separation = 12.0;
  s.ambiguous_per_image = 0;
  s.cue_dropout = 0.0;
  return s;
}

Dataset one_image(std::vector<BBox> boxes, Matrix features, std::vector<GroundTruth> gts) {
  Dataset ds;
  ds.name = "tiny";
  ds.classes = {"a"};
  ds.feature_dim = features.cols();
  ImageRecord im;
  im.id = 0;
  im.boxes = std::move(boxes);
  im.features = std::move(features);
  im.ground_truth = std::move(gts);
  ds.images.push_back(std::move(im));
  return ds;
}

Dataset subset(const Dataset& ds, std::size_t begin, std::size_t end) {
  Dataset out = ds;
  out.images.assign(ds.images.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.images.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

double map_of(const std::vector<Detection>& dets, const Dataset& labeled) {
  return mean_ap(per_class_ap(dets, labeled));
}

}  // namespace

TEST(Config, Defaults) {
  const AdaptationConfig c;
  EXPECT_EQ(c.gamma, 0.7);
  EXPECT_EQ(c.sigma, 0.4);
  EXPECT_EQ(c.d, 100);
  EXPECT_EQ(c.detect_thresh, 0.0);
}

TEST(Config, ValidationRejectsOutOfDomain) {
  AdaptationConfig c;
  c.gamma = 1.0 + 1e-9;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = AdaptationConfig{};
  c.d = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = AdaptationConfig{};
  c.sigma = INFINITY;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_EQ(parse_mode("full-image"), AdaptationMode::FullImage);
  EXPECT_THROW(parse_mode("global"), InvalidArgument);
}

TEST(MineSourcePositives, GridMatchesRectangleArithmetic) {
  const BBox truth{0, 0, 10, 10};
  std::vector<BBox> boxes;
  for (int dx = -4; dx <= 4; ++dx)
    for (int dy = -4; dy <= 4; ++dy) boxes.push_back({0.0 + dx, 0.0 + dy, 10.0 + dx, 10.0 + dy});
  Matrix features(static_cast<Index>(boxes.size()), 1);
  for (Index i = 0; i < features.rows(); ++i) features(i, 0) = static_cast<double>(i);
  const Dataset ds = one_image(boxes, features, {{0, truth, 0}});

  // Shift (dx, dy) overlaps (10-|dx|)(10-|dy|) of the 100-unit box.
  std::vector<double> expected;
  for (int dx = -4; dx <= 4; ++dx) {
    for (int dy = -4; dy <= 4; ++dy) {
      const double inter = (10.0 - std::abs(dx)) * (10.0 - std::abs(dy));
      if (inter / (200.0 - inter) >= 0.7) expected.push_back(static_cast<double>((dx + 4) * 9 + (dy + 4)));
    }
  }
  const FeatureMatrix got = mine_source_positives(ds, 0, 0.7);
  ASSERT_EQ(got.rows(), static_cast<Index>(expected.size()));
  for (Index i = 0; i < got.rows(); ++i) EXPECT_EQ(got(i, 0), expected[static_cast<std::size_t>(i)]);

  const FeatureMatrix exact = mine_source_positives(ds, 0, 1.0);
  ASSERT_EQ(exact.rows(), 1);
  EXPECT_EQ(exact(0, 0), 4.0 * 9 + 4);
}

TEST(MineSourcePositives, SingleExactProposalIsSolePositive) {
  Matrix f(3, 2);
  f << 1, 0, 0, 1, 2, 2;
  const Dataset ds = one_image({{0, 0, 5, 5}, {10, 10, 20, 20}, {30, 0, 40, 9}}, f, {{0, {10, 10, 20, 20}, 0}});
  const FeatureMatrix p = mine_source_positives(ds, 0, 0.7);
  ASSERT_EQ(p.rows(), 1);
  EXPECT_EQ(p.values().row(0), f.row(1));
  EXPECT_THROW(mine_source_positives(one_image({{0, 0, 5, 5}}, Matrix::Ones(1, 2), {{0, {50, 50, 60, 60}, 0}}), 0, 0.7),
               DataError);
  EXPECT_THROW(mine_source_positives(ds, 0, 0.0), InvalidArgument);
}

TEST(MineTargetPositives, BiasOnlyBelowSigmaNamesClass) {
  const Dataset& tgt = small_scenario().target;
  LinearDetector det;
  det.class_id = 1;
  det.weights = Vector::Zero(tgt.feature_dim);
  det.bias = 0.1;
  try {
    mine_target_positives(tgt, det, 0.4);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(tgt.classes[1]), std::string::npos);
  }
}

TEST(MineTargetPositives, EqualsDirectFilterOfScores) {
  const auto& sc = small_scenario();
  const auto initial = train_initial_detectors(sc.source, small_config());
  for (const auto& [c, det] : initial.detectors) {
    const FeatureMatrix all = sc.target.all_features();
    std::vector<Index> rows;
    for (Index i = 0; i < all.rows(); ++i) {
      double s = det.bias;
      for (Index j = 0; j < all.cols(); ++j) s += det.weights(j) * all(i, j);
      if (s >= 0.4) rows.push_back(i);
    }
    const FeatureMatrix mined = mine_target_positives(sc.target, det, 0.4);
    ASSERT_EQ(mined.rows(), static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k)
      EXPECT_EQ(mined.values().row(static_cast<Index>(k)), all.values().row(rows[k]));
  }
}

TEST(TrainInitialDetectors, SeparatedClassesClassifyHeldOutSource) {
  SynthShiftSpec spec = small_spec();
  spec.samples_per_class = 120;
  const Dataset src = generate_synthetic(spec).source;
  // Images are laid out class by class; interleave a split by parity.
  Dataset train = src;
  Dataset held = src;
  train.images.clear();
  held.images.clear();
  for (std::size_t i = 0; i < src.images.size(); ++i) (i % 2 ? held : train).images.push_back(src.images[i]);

  const AdaptationConfig cfg = small_config();
  const auto initial = train_initial_detectors(train, cfg);
  ASSERT_EQ(initial.detectors.size(), 3u);
  for (const auto& [c, det] : initial.detectors) {
    const TrainingExamples ex = mine_training_examples(held, c, cfg.gamma, cfg.neg_lambda);
    const auto sp = score_proposals(det, FeatureMatrix(ex.positives), Frame::raw());
    const auto sn = score_proposals(det, FeatureMatrix(ex.negatives), Frame::raw());
    std::size_t correct = 0;
    for (double s : sp) correct += s > 0;
    for (double s : sn) correct += s < 0;
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(sp.size() + sn.size()), 0.95) << "class " << c;
  }
}

TEST(TrainInitialDetectors, ClassWithoutPositivesIsSkippedWithWarning) {
  Dataset ds = one_image({{0, 0, 5, 5}, {10, 10, 20, 20}}, Matrix::Identity(2, 2), {{0, {10, 10, 20, 20}, 0}});
  ds.classes = {"a", "b"};
  const auto initial = train_initial_detectors(ds, small_config());
  EXPECT_EQ(initial.detectors.count(0), 1u);
  EXPECT_EQ(initial.detectors.count(1), 0u);
  ASSERT_EQ(initial.warnings.size(), 1u);
  EXPECT_EQ(initial.warnings[0].class_id, 1);
}

TEST(Adapt, FixedPointWhenTargetIsSource) {
  const SynthResult sc = generate_synthetic(clean_spec());
  const AdaptationConfig cfg = small_config();
  const auto initial = train_initial_detectors(sc.source, cfg);
  const Dataset target = strip_labels(sc.source);
  const auto adapted = adapt(sc.source, target, initial, cfg);
  for (const auto& st : adapted.states) {
    ASSERT_EQ(st.diagnostics.status, ClassStatus::Adapted) << st.diagnostics.reason;
    EXPECT_EQ(st.diagnostics.n_pos_src, st.diagnostics.n_pos_tgt);
    EXPECT_LT((st.map->m - Matrix::Identity(cfg.d, cfg.d)).norm(), 1e-6);
    EXPECT_NEAR(subspace_similarity(*st.source_subspace, *st.target_subspace), std::sqrt(double(cfg.d)), 1e-6);
  }
  const double a = map_of(detect(target, adapted, cfg), sc.source);
  const double n = map_of(detect(target, pass_through(sc.source, initial), cfg), sc.source);
  EXPECT_LT(std::abs(a - n), 0.005);
}

TEST(Adapt, ModeNoneIsPassThrough) {
  const auto& sc = small_scenario();
  AdaptationConfig cfg = small_config();
  cfg.mode = AdaptationMode::None;
  const auto initial = train_initial_detectors(sc.source, cfg);
  const auto r = adapt(sc.source, strip_labels(sc.target), initial, cfg);
  for (const auto& st : r.states) {
    EXPECT_EQ(st.diagnostics.status, ClassStatus::PassThrough);
    EXPECT_FALSE(st.aligned());
  }
  // Same as scoring the initial detectors and running NMS by hand.
  std::vector<Detection> manual;
  for (const auto& [c, det] : initial.detectors) {
    const auto s = raw_scores(sc.target, det);
    std::vector<Detection> cand;
    std::size_t k = 0;
    for (const auto& im : sc.target.images)
      for (const auto& b : im.boxes) {
        if (s[k] >= cfg.detect_thresh) cand.push_back({im.id, b, c, s[k]});
        ++k;
      }
    const auto kept = oracle::exhaustive_nms(cand, cfg.nms_thresh);
    manual.insert(manual.end(), kept.begin(), kept.end());
  }
  EXPECT_EQ(detect(sc.target, r, cfg), manual);
}

TEST(Adapt, SubspacesBuiltFromEnoughSamples) {
  const auto& sc = small_scenario();
  const AdaptationConfig cfg = small_config();
  const auto r = adapt(sc.source, strip_labels(sc.target), train_initial_detectors(sc.source, cfg), cfg);
  for (const auto& st : r.states) {
    if (st.diagnostics.status != ClassStatus::Adapted) continue;
    EXPECT_GE(st.diagnostics.n_pos_src, cfg.d + 1);
    EXPECT_GE(st.diagnostics.n_pos_tgt, cfg.d + 1);
    EXPECT_EQ(st.map->source_id, st.source_subspace->id);
    EXPECT_EQ(st.map->target_id, st.target_subspace->id);
    EXPECT_EQ(st.detector->frame, st.frame());
  }
}

TEST(Adapt, TooFewSamplesDowngradesWithDiagnostic) {
  SynthShiftSpec spec = small_spec();
  spec.samples_per_class = 2;
  const SynthResult sc = generate_synthetic(spec);
  AdaptationConfig cfg = small_config();
  cfg.d = 10;
  const auto initial = train_initial_detectors(sc.source, cfg);
  const auto r = adapt(sc.source, strip_labels(sc.target), initial, cfg);
  ASSERT_FALSE(r.diagnostics.empty());
  for (const auto& st : r.states) {
    EXPECT_EQ(st.diagnostics.status, ClassStatus::Downgraded);
    EXPECT_FALSE(st.diagnostics.reason.empty());
    EXPECT_EQ(st.detector->frame, Frame::raw());
  }
  EXPECT_FALSE(detect(sc.target, r, cfg).empty());
}

TEST(Adapt, FullImageSharesOneSubspacePair) {
  const auto& sc = small_scenario();
  AdaptationConfig cfg = small_config();
  cfg.mode = AdaptationMode::FullImage;
  const auto r = adapt(sc.source, strip_labels(sc.target), train_initial_detectors(sc.source, cfg), cfg);
  ASSERT_EQ(r.states.size(), 3u);
  for (const auto& st : r.states) {
    ASSERT_EQ(st.diagnostics.status, ClassStatus::Adapted);
    EXPECT_EQ(st.source_subspace->basis, r.states[0].source_subspace->basis);
    EXPECT_EQ(st.target_subspace->basis, r.states[0].target_subspace->basis);
    EXPECT_EQ(st.map->m, r.states[0].map->m);
  }
  const auto z = oracle::zscore_stats(sc.target.all_features().values());
  EXPECT_LT((r.states[0].target_subspace->stats.mean - z.mean).norm(), 1e-10);
}

TEST(Adapt, MismatchedClassListsRejected) {
  const auto& sc = small_scenario();
  Dataset other = strip_labels(sc.target);
  other.classes.back() = "renamed";
  EXPECT_THROW(adapt(sc.source, other, train_initial_detectors(sc.source, small_config()), small_config()), DataError);
}

TEST(Detect, SingleProposalPerImage) {
  Dataset ds;
  ds.name = "single";
  ds.classes = {"a"};
  ds.feature_dim = 1;
  for (int i = 0; i < 4; ++i) {
    ImageRecord im;
    im.id = i;
    im.boxes = {{0, 0, 10, 10}};
    im.features = Matrix::Constant(1, 1, 1.0 + i);
    ds.images.push_back(im);
  }
  InitialDetectors init;
  LinearDetector det;
  det.weights = Vector::Ones(1);
  init.detectors.emplace(0, det);
  const auto dets = detect(ds, pass_through(ds, init), small_config());
  ASSERT_EQ(dets.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(dets[static_cast<std::size_t>(i)].image_id, 3 - i);
}

TEST(Detect, DeterministicAcrossRuns) {
  const auto run = [] {
    const SynthResult sc = generate_synthetic(small_spec());
    const AdaptationConfig cfg = small_config();
    const Dataset tgt = strip_labels(sc.target);
    return detect(tgt, adapt(sc.source, tgt, train_initial_detectors(sc.source, cfg), cfg), cfg);
  };
  EXPECT_EQ(run(), run());
}

TEST(Mining, MonotoneInThresholds) {
  const auto& sc = small_scenario();
  const auto initial = train_initial_detectors(sc.source, small_config());
  for (const auto& [c, det] : initial.detectors) {
    Index prev = std::numeric_limits<Index>::max();
    for (int k = 0; k <= 8; ++k) {
      Index n = 0;
      try {
        n = mine_target_positives(sc.target, det, 0.1 * k).rows();
      } catch (const DataError&) {
      }
      EXPECT_LE(n, prev);
      prev = n;
    }
    prev = std::numeric_limits<Index>::max();
    for (int k = 1; k <= 10; ++k) {
      Index n = 0;
      try {
        n = mine_source_positives(sc.source, c, 0.1 * k).rows();
      } catch (const DataError&) {
      }
      EXPECT_LE(n, prev);
      prev = n;
    }
  }
}

TEST(TargetFeaturesInFrame, UsesTargetStatsAndBasis) {
  const auto& sc = small_scenario();
  const AdaptationConfig cfg = small_config();
  const Dataset tgt = strip_labels(sc.target);
  const auto r = adapt(sc.source, tgt, train_initial_detectors(sc.source, cfg), cfg);
  const auto& st = r.states[0];
  ASSERT_TRUE(st.aligned());
  const Matrix all = tgt.all_features().values();
  oracle::ZScore z{st.target_subspace->stats.mean, st.target_subspace->stats.scale};
  const Matrix expected = oracle::zscore_apply(all, z) * st.target_subspace->basis;
  EXPECT_LT((target_features_in_frame(tgt, st).values() - expected).norm(), 1e-10);
}
