#include "subalign/synth.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace subalign {

double SeededRng::uniform() {
  // 53 random bits -> [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

Vector SeededRng::normal_vector(Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Matrix random_orthonormal(SeededRng& rng, Index rows, Index cols) {
  Matrix g(rows, cols);
  for (Index c = 0; c < cols; ++c) g.col(c) = rng.normal_vector(rows);
  return orthonormalize(g);
}

Matrix orthonormalize(const Matrix& g) {
  const Index cols = g.cols();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), cols);
  // Fix signs against R's diagonal so the result is a function of g alone.
  const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Index c = 0; c < cols; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  return q;
}

void SynthShiftSpec::validate() const {
  if (n_classes < 1 || dim < 1 || samples_per_class < 1) {
    throw InvalidArgument("n_classes, dim and samples_per_class must be at least 1");
  }
  if (positives_per_image < 1) throw InvalidArgument("positives_per_image must be at least 1");
  if (ambiguous_per_image < 0 || background_per_image < 0) {
    throw InvalidArgument("proposal counts must be nonnegative");
  }
  if (class_rank < 1 || class_rank >= dim) {
    throw InvalidArgument(fmt::format("class_rank {} must lie in [1, D - 1 = {}]", class_rank, dim - 1));
  }
  if (background_rank < 1 || background_rank > dim) {
    throw InvalidArgument(fmt::format("background_rank {} must lie in [1, D = {}]", background_rank, dim));
  }
  if (strength_scale < 0.0 || structure_scale < 0.0 || background_scale < 0.0 || cue_strength < 0.0) {
    throw InvalidArgument("class and background scales must be nonnegative");
  }
  if (!(cue_dropout >= 0.0 && cue_dropout <= 1.0)) {
    throw InvalidArgument(fmt::format("cue_dropout {} outside [0, 1]", cue_dropout));
  }
  if (noise_scale < 0.0 || feature_noise < 0.0 || mean_drift < 0.0 || class_separation < 0.0 ||
      rotation_budget < 0.0 || positive_jitter < 0.0) {
    throw InvalidArgument("scales, drift, separation, jitter and rotation budget must be nonnegative");
  }
  for (int c : noise_classes) {
    if (c < 0 || c >= n_classes) {
      throw InvalidArgument(fmt::format("noise class {} outside [0, {})", c, n_classes));
    }
  }
}

namespace {

constexpr double kImageSize = 200.0;
constexpr int kMaxTries = 200;

BBox random_gt_box(SeededRng& rng) {
  const double w = rng.uniform(40.0, 100.0);
  const double h = rng.uniform(40.0, 100.0);
  const double x = rng.uniform(0.0, kImageSize - w);
  const double y = rng.uniform(0.0, kImageSize - h);
  return {x, y, x + w, y + h};
}

BBox jitter(const BBox& gt, double rel, SeededRng& rng) {
  const double w = gt.width();
  const double h = gt.height();
  BBox b{gt.x_min + rel * w * rng.uniform(-1.0, 1.0), gt.y_min + rel * h * rng.uniform(-1.0, 1.0),
         gt.x_max + rel * w * rng.uniform(-1.0, 1.0), gt.y_max + rel * h * rng.uniform(-1.0, 1.0)};
  if (b.x_max < b.x_min) std::swap(b.x_min, b.x_max);
  if (b.y_max < b.y_min) std::swap(b.y_min, b.y_max);
  return b;
}

BBox positive_box(const BBox& gt, double rel, SeededRng& rng) {
  if (rel == 0.0) return gt;
  for (int i = 0; i < kMaxTries; ++i) {
    BBox b = jitter(gt, rel, rng);
    if (iou(b, gt) >= 0.72) return b;
  }
  return gt;
}

BBox ambiguous_box(const BBox& gt, SeededRng& rng) {
  for (int i = 0; i < kMaxTries; ++i) {
    const double dx = gt.width() * rng.uniform(-0.5, 0.5);
    const double dy = gt.height() * rng.uniform(-0.5, 0.5);
    const double s = rng.uniform(0.8, 1.25);
    const double cx = 0.5 * (gt.x_min + gt.x_max) + dx;
    const double cy = 0.5 * (gt.y_min + gt.y_max) + dy;
    const BBox b{cx - 0.5 * s * gt.width(), cy - 0.5 * s * gt.height(), cx + 0.5 * s * gt.width(),
                 cy + 0.5 * s * gt.height()};
    const double ov = iou(b, gt);
    if (ov >= 0.35 && ov <= 0.65) return b;
  }
  // Half-width shift: IoU = 1/3.
  return {gt.x_min + 0.5 * gt.width(), gt.y_min, gt.x_max + 0.5 * gt.width(), gt.y_max};
}

BBox background_box(const BBox& gt, SeededRng& rng) {
  for (int i = 0; i < kMaxTries; ++i) {
    const double w = rng.uniform(20.0, 100.0);
    const double h = rng.uniform(20.0, 100.0);
    const double x = rng.uniform(0.0, kImageSize - w);
    const double y = rng.uniform(0.0, kImageSize - h);
    const BBox b{x, y, x + w, y + h};
    if (iou(b, gt) < 0.2) return b;
  }
  return {kImageSize, kImageSize, kImageSize + 10.0, kImageSize + 10.0};
}

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

struct ClassModel {
  Vector mean;
  Vector cue;
  Matrix basis;
  Vector scales;
};

Vector sample_structured(const ClassModel& m, SeededRng& rng) {
  const Vector z = rng.normal_vector(m.basis.cols());
  return m.mean + m.basis * m.scales.cwiseProduct(z);
}

enum class Domain { Source, Target };

Dataset generate_domain(const SynthShiftSpec& spec, const SynthOracle& oracle,
                        const std::vector<ClassModel>& classes, const ClassModel& background,
                        Domain domain, SeededRng& rng) {
  Dataset ds;
  ds.name = domain == Domain::Source ? "synthetic-source" : "synthetic-target";
  for (int c = 0; c < spec.n_classes; ++c) ds.classes.push_back(fmt::format("class{}", c));
  ds.feature_dim = spec.dim;

  const Index dim = spec.dim;
  const int per_image = spec.positives_per_image + spec.ambiguous_per_image + spec.background_per_image;
  const int n_images = spec.samples_per_class * spec.n_classes;
  const bool target = domain == Domain::Target;

  for (int i = 0; i < n_images; ++i) {
    const int c = i % spec.n_classes;
    ImageRecord im;
    im.id = i;
    const BBox gt = random_gt_box(rng);
    im.ground_truth = std::vector<GroundTruth>{{i, gt, c}};

    Vector object;
    const bool pure_noise =
        target && std::find(spec.noise_classes.begin(), spec.noise_classes.end(), c) !=
                      spec.noise_classes.end();
    if (pure_noise) {
      object = rng.normal_vector(dim);
    } else {
      const ClassModel& model = classes[static_cast<std::size_t>(c)];
      if (target) {
        const Vector z = rng.normal_vector(model.basis.cols());
        object = model.mean + oracle.drifts[static_cast<std::size_t>(c)] +
                 model.basis * model.scales.cwiseProduct(z);
        if (rng.uniform() < spec.cue_dropout) object -= spec.cue_strength * model.cue;
      } else {
        object = sample_structured(model, rng);
      }
    }

    im.features.resize(per_image, dim);
    for (int p = 0; p < per_image; ++p) {
      BBox box;
      if (p < spec.positives_per_image) {
        box = positive_box(gt, spec.positive_jitter, rng);
      } else if (p < spec.positives_per_image + spec.ambiguous_per_image) {
        box = ambiguous_box(gt, rng);
      } else {
        box = background_box(gt, rng);
      }
      const double alpha = iou(box, gt);
      Vector f = alpha * object;
      if (alpha < 1.0) f += (1.0 - alpha) * sample_structured(background, rng);
      if (spec.feature_noise > 0.0) f += spec.feature_noise * rng.normal_vector(dim);
      if (target) {
        f = oracle.rotation * f;
        if (spec.noise_scale > 0.0) f += spec.noise_scale * rng.normal_vector(dim);
      }
      for (Index j = 0; j < dim; ++j) im.features(p, j) = as_float(f(j));
      im.boxes.push_back(box);
    }
    ds.images.push_back(std::move(im));
  }
  return ds;
}

Vector decaying_scales(Index n, double first) {
  Vector s(n);
  for (Index k = 0; k < n; ++k) s(k) = first * std::pow(0.8, static_cast<double>(k));
  return s;
}

}  // namespace

SynthResult generate_synthetic(const SynthShiftSpec& spec) {
  spec.validate();
  SeededRng structure(spec.seed);
  const Index dim = spec.dim;

  SynthResult out;
  SynthOracle& oracle = out.oracle;

  std::vector<ClassModel> classes;
  for (int c = 0; c < spec.n_classes; ++c) {
    ClassModel m;
    // First basis column is the mean direction: instances vary in strength
    // along it. The remaining columns are random and orthogonal to it.
    const Vector dir = structure.normal_vector(dim).normalized();
    Matrix seed_cols(dim, spec.class_rank + 1);
    seed_cols.col(0) = dir;
    for (Index k = 1; k <= spec.class_rank; ++k) seed_cols.col(k) = structure.normal_vector(dim);
    const Matrix q = orthonormalize(seed_cols);
    m.basis = q.leftCols(spec.class_rank);
    m.cue = q.col(spec.class_rank);
    m.mean = spec.class_separation * dir + spec.cue_strength * m.cue;
    m.scales.resize(spec.class_rank);
    m.scales(0) = spec.strength_scale;
    if (spec.class_rank > 1) m.scales.tail(spec.class_rank - 1) = decaying_scales(spec.class_rank - 1, spec.structure_scale);
    oracle.class_means.push_back(m.mean);
    oracle.class_bases.push_back(m.basis);
    oracle.drifts.push_back(spec.mean_drift * structure.normal_vector(dim).normalized());
    oracle.cues.push_back(m.cue);
    classes.push_back(std::move(m));
  }
  ClassModel background;
  background.mean = Vector::Zero(dim);
  background.basis = random_orthonormal(structure, dim, std::min<Index>(spec.background_rank, dim));
  background.scales = decaying_scales(background.basis.cols(), spec.background_scale);
  oracle.background_mean = background.mean;
  oracle.background_basis = background.basis;

  // Rotation: independent plane rotations in a random orthonormal frame.
  const Matrix frame = random_orthonormal(structure, dim, dim);
  Matrix blocks = Matrix::Identity(dim, dim);
  for (Index k = 0; k + 1 < dim; k += 2) {
    const double angle = spec.rotation_budget * structure.uniform(0.5, 1.0);
    oracle.plane_angles.push_back(angle);
    blocks(k, k) = std::cos(angle);
    blocks(k, k + 1) = -std::sin(angle);
    blocks(k + 1, k) = std::sin(angle);
    blocks(k + 1, k + 1) = std::cos(angle);
  }
  oracle.rotation = spec.rotation_budget == 0.0 ? Matrix::Identity(dim, dim)
                                                : Matrix(frame * blocks * frame.transpose());

  for (const ClassModel& m : classes) oracle.target_class_bases.push_back(oracle.rotation * m.basis);

  SeededRng source_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 1);
  SeededRng target_rng(spec.seed * 0x9E3779B97F4A7C15ULL + 2);
  out.source = generate_domain(spec, oracle, classes, background, Domain::Source, source_rng);
  out.target = generate_domain(spec, oracle, classes, background, Domain::Target, target_rng);
  return out;
}

}  // namespace subalign
