#pragma once

#include "subalign/dataset.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace subalign {

// Seeded generator for a desk-scale source/target pair with a controlled
// domain shift. Every image holds one object; its proposals are jittered
// copies of the ground-truth box (IoU >= 0.72), partial overlaps
// (IoU in [0.35, 0.65]) and background boxes (IoU < 0.2). A proposal's
// feature mixes the object instance and a background sample in proportion to
// its IoU.
//
// A class instance is mean + basis * (scales .* z). Basis column 0 is the mean
// direction, so instances vary in strength along it. The source mean also
// carries a cue offset orthogonal to the basis. Target instances get a
// per-class drift and lose the cue with probability cue_dropout; every target
// feature is then rotated and receives extra noise.
struct SynthShiftSpec {
  int n_classes = 5;
  Index dim = 30;
  int samples_per_class = 200;    // images per class per domain
  double class_separation = 4.0;  // mean length along the class mean direction
  double rotation_budget = 0.5;   // max plane-rotation angle applied to the target (radians)
  double mean_drift = 1.5;        // norm of each class's target mean drift
  double noise_scale = 0.3;       // extra isotropic noise on target features
  double feature_noise = 0.3;     // isotropic noise on every proposal, both domains
  int class_rank = 4;             // dimensions of per-class structured variation
  double strength_scale = 1.0;    // instance spread along the class mean direction
  double structure_scale = 2.0;   // leading spread of the remaining class directions
  double background_scale = 1.5;  // leading spread of background structure
  int background_rank = 6;
  double cue_strength = 3.0;      // source mean offset along a direction the class never varies in
  double cue_dropout = 0.4;       // fraction of target instances that lack the cue
  int positives_per_image = 3;
  int ambiguous_per_image = 2;
  int background_per_image = 5;
  double positive_jitter = 0.06;  // relative box jitter of positive proposals
  std::vector<int> noise_classes;  // classes whose target objects are pure noise
  std::uint64_t seed = 7;

  // Throws InvalidArgument when the spec cannot be generated.
  void validate() const;
};

struct SynthOracle {
  Matrix rotation;                  // D x D, orthogonal, applied to every target feature
  std::vector<double> plane_angles;  // rotation angle of each invariant plane
  std::vector<Vector> class_means;   // source object means
  std::vector<Vector> drifts;        // per-class target drift, before rotation
  std::vector<Matrix> class_bases;   // D x class_rank orthonormal; column 0 is the mean direction
  std::vector<Matrix> target_class_bases;  // rotation * class_bases: the target class planes
  std::vector<Vector> cues;          // unit cue direction per class, orthogonal to its basis
  Vector background_mean;
  Matrix background_basis;
};

struct SynthResult {
  Dataset source;
  Dataset target;  // carries ground truth for evaluation only
  SynthOracle oracle;
};

SynthResult generate_synthetic(const SynthShiftSpec& spec);

// mt19937_64 with hand-rolled uniform/normal transforms, so generated data
// does not depend on the standard library's distribution implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();   // standard normal, Box-Muller
  Vector normal_vector(Index n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Haar-ish random orthonormal D x k matrix (QR of a Gaussian matrix).
Matrix random_orthonormal(SeededRng& rng, Index rows, Index cols);

// Q factor of g with the sign of each column chosen so that R has a
// nonnegative diagonal; column k spans the same flag as g's first k+1.
Matrix orthonormalize(const Matrix& g);

}  // namespace subalign
