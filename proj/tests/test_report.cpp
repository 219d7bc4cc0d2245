#include "subalign/report.hpp"
#include "subalign/synth.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace subalign;

namespace {

SimilarityMatrix diagonal(const std::vector<double>& diag) {
  SimilarityMatrix s;
  const Index n = static_cast<Index>(diag.size());
  s.values = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    s.values(i, i) = diag[static_cast<std::size_t>(i)];
    s.class_ids.push_back(static_cast<int>(i) + 10);
    s.labels.push_back("c" + std::to_string(i));
  }
  return s;
}

struct Outcome {
  SynthResult data;
  AdaptationResult adaptation;
  RunReport report;
};

Outcome run_once(const RunConfig& cfg) {
  Outcome r{generate_synthetic(cfg.synth), {}, {}};
  const auto initial = train_initial_detectors(r.data.source, cfg.adaptation);
  r.adaptation = adapt(r.data.source, strip_labels(r.data.target), initial, cfg.adaptation);
  const auto dets = detect(r.data.target, r.adaptation, cfg.adaptation);
  const auto base = detect(r.data.target, pass_through(r.data.source, initial), cfg.adaptation);
  r.report = build_report(r.data.target, &r.adaptation, dets, &base, cfg);
  return r;
}

}  // namespace

TEST(WeakClasses, LeaveOneOutRule) {
  EXPECT_TRUE(weak_class_ids(diagonal({2.0}), 0.75).empty());
  EXPECT_TRUE(weak_class_ids(diagonal({2.0, 2.0, 2.0}), 0.75).empty());
  // 1.4 < 0.75 * 2.0; 1.6 is not.
  EXPECT_EQ(weak_class_ids(diagonal({2.0, 1.4, 2.0}), 0.75), (std::vector<int>{11}));
  EXPECT_TRUE(weak_class_ids(diagonal({2.0, 1.6, 2.0}), 0.75).empty());
  EXPECT_EQ(weak_class_ids(diagonal({0.0, 0.0, 1.0}), 0.75), (std::vector<int>{10, 11}));
}

TEST(Report, JsonLayout) {
  RunConfig cfg;
  cfg.adaptation.d = 3;
  cfg.synth.n_classes = 3;
  cfg.synth.dim = 10;
  cfg.synth.samples_per_class = 20;
  const Outcome r = run_once(cfg);
  const auto j = to_json(r.report);
  for (const char* key : {"mode", "ap_convention", "per_class", "mean_ap", "baseline", "weak_classes", "diagnostics",
                          "config"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["mode"], "class-specific");
  EXPECT_EQ(j["ap_convention"], kApConvention);
  EXPECT_EQ(j["baseline"]["mode"], "none");
  EXPECT_EQ(j["config"]["d"], "3");
  for (const char* name : {"class0", "class1", "class2"}) {
    ASSERT_TRUE(j["per_class"].contains(name)) << name;
    const auto& c = j["per_class"][name];
    for (const char* key : {"class_id", "ap", "baseline_ap", "n_pos_src", "n_pos_tgt", "similarity_diag", "status",
                            "reason", "weak"})
      EXPECT_TRUE(c.contains(key)) << name << "." << key;
    EXPECT_EQ(c["status"], "adapted");
    EXPECT_GT(c["similarity_diag"].template get<double>(), 0.0);
  }
}

TEST(Report, MeanApIsMeanOfClassAps) {
  RunConfig cfg;
  cfg.adaptation.d = 4;
  cfg.synth.n_classes = 20;
  cfg.synth.samples_per_class = 30;
  const Outcome r = run_once(cfg);
  const auto j = to_json(r.report);
  double sum = 0.0;
  double base_sum = 0.0;
  int n = 0;
  for (const auto& [name, c] : j["per_class"].items()) {
    sum += c["ap"].template get<double>();
    base_sum += c["baseline_ap"].template get<double>();
    ++n;
  }
  ASSERT_EQ(n, 20);
  EXPECT_NEAR(j["mean_ap"].template get<double>(), sum / n, 1e-12);
  EXPECT_NEAR(j["baseline"]["mean_ap"].template get<double>(), base_sum / n, 1e-12);
}

TEST(Report, NoiseClassIsFlaggedWeak) {
  RunConfig cfg;
  cfg.adaptation.d = 4;
  cfg.synth.n_classes = 4;
  cfg.synth.dim = 20;
  cfg.synth.samples_per_class = 60;
  cfg.synth.noise_classes = {1};
  cfg.adaptation.sigma = -0.5;
  const Outcome r = run_once(cfg);
  ASSERT_EQ(r.report.classes.size(), 4u);
  EXPECT_TRUE(r.report.classes[1].weak);
  EXPECT_EQ(r.report.weak_classes, (std::vector<std::string>{"class1"}));
  double healthy = 0.0;
  for (int c : {0, 2, 3}) healthy += *r.report.classes[static_cast<std::size_t>(c)].similarity_diag / 3.0;
  EXPECT_LT(*r.report.classes[1].similarity_diag, healthy);
}

TEST(Report, UnlabeledTargetLeavesApEmpty) {
  RunConfig cfg;
  cfg.adaptation.d = 3;
  cfg.synth.n_classes = 2;
  cfg.synth.dim = 10;
  cfg.synth.samples_per_class = 15;
  const auto data = generate_synthetic(cfg.synth);
  const auto initial = train_initial_detectors(data.source, cfg.adaptation);
  const auto unlabeled = strip_labels(data.target);
  const auto a = adapt(data.source, unlabeled, initial, cfg.adaptation);
  const RunReport rep = build_report(unlabeled, &a, detect(unlabeled, a, cfg.adaptation), nullptr, cfg);
  EXPECT_FALSE(rep.mean_ap.has_value());
  for (const auto& c : rep.classes) EXPECT_FALSE(c.ap.has_value());
  EXPECT_TRUE(to_json(rep)["mean_ap"].is_null());
}
