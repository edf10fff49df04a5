#pragma once

#include "relboltz/causal.hpp"
#include "relboltz/collision.hpp"
#include "relboltz/geodesics.hpp"
#include "relboltz/kinetic.hpp"
#include "relboltz/source.hpp"
#include "relboltz/spacetime.hpp"
#include "relboltz/types.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace relboltz {

// Beam and detector geometry of one probe run.
struct ProbeScenario {
  ObserverFamily family;
  CausalDiamond diamond;
  Vec source_observer;             // observer parameter of the second beam (must differ from 0)
  Vec detector_observer;           // observer receiving the return signal; empty means a = 0
  double source_time = 0.25;       // slice x0 of both beam sources
  double tilt = 0.05;              // radians between each null leg and its timelike beam
  double beam_energy = 1.0;        // p0 of the beams at w
  double section_energy = 0.3;     // p0 of the return geodesic at z1
  int detector_count = 17;         // detector grid nodes per axis
  double detector_spacing = 0.02;
  double aim_tolerance = 1e-6;     // forward re-shoot miss allowed for both beams
  double step = 2e-3;              // RK4 parameter step on curved metrics
  CausalOptions causal;
  NullConnectOptions connect;
  FlowoutOptions flowout;
};

// Regular grid on an affine slice: centre + sum_k (i_k - (counts_k - 1) / 2) * spacing * axes_k.
// Axes are Euclidean-orthonormal; the last axis runs fastest in the flat index.
struct DetectorGrid {
  Vec centre;
  std::vector<Vec> axes;
  std::vector<int> counts;
  double spacing = 0.0;

  static DetectorGrid plane(const Vec& centre, const Vec& u, const Vec& v, int count, double spacing);
  static DetectorGrid line(const Vec& centre, const Vec& u, int count, double spacing);

  int rank() const { return static_cast<int>(axes.size()); }
  std::size_t size() const;
  std::vector<int> unflatten(std::size_t index) const;
  std::size_t flatten(const std::vector<int>& index) const;
  Vec node(std::size_t index) const;
  // Fractional grid indices of the orthogonal projection of x onto the slice.
  std::vector<double> coordinates(const Vec& x) const;
  // Euclidean distance from x to the slice.
  double offset(const Vec& x) const;
};

struct NullLeg {
  Vec observer;   // observer parameter a
  double start;   // f_a^-(w)
  Vec origin;     // mu_a(start)
  Vec direction;  // null tangent at w, direction[0] = 1
};

struct ReturnGeodesic {
  Vec z;           // start event
  Vec momentum;    // null initial vector at z
  Vec e;           // detector event on the receiving observer
  double T = 0.0;  // affine parameter at e
  Vec velocity;    // gamma'(T)
  double null_defect = 0.0;  // |g(gamma', gamma')| at e
};

struct ProbePlan {
  Vec w;
  NullLeg leg_hat;    // from the distinguished observer
  NullLeg leg_other;  // from the source observer
  PhaseState beam_point;  // (x_hat, p_hat)
  PhaseState beam_patch;  // (y_hat, q_hat), centre of the patch
  SourcePatch s1;     // patch around the second beam
  SourcePatch s2;     // point source of the first beam
  double aim_residual = 0.0;           // forward re-shoot miss at w
  double transversality = 0.0;         // sine of the crossing angle of beam_point with G_S1
  std::vector<Vec> intersections;      // flowout crossings inside the kernel support, sorted by x0
  Vec z1;
  double intersection_residual = 0.0;  // |z1 - w|
  ReturnGeodesic gamma;
  DetectorGrid detector;
  std::vector<Vec> section;            // P_e at each detector node
};

// Beams aimed at w with mollification eps and patch extent R; kernel_support bounds the
// intersection search. DomainError when w is outside the diamond, TangencyError for
// parallel or degenerate legs, TransversalityError below the flowout threshold.
ProbePlan build_probe_plan(const MetricSpec& spec, const ProbeScenario& scenario, const Vec& w, double eps,
                           double R, const Box& kernel_support);

// Null geodesic congruence through a neighbourhood of gamma: members start on the slice
// x0 = z0 at z + (0, xi) with the spatial momentum of gamma, null-completed.
class LightlikeSection {
 public:
  LightlikeSection(const MetricSpec& spec, const Vec& z, const Vec& momentum, double step = 2e-3);

  struct Member {
    Vec xi;        // spatial offset of the start event
    Vec velocity;  // P(x)
    double jacobian = 0.0;  // det of d(position at time x0) / d(xi)
  };

  // Member through x; CausticError when Newton fails to converge.
  Member member(const Vec& x) const;
  Vec at(const Vec& x) const { return member(x).velocity; }

 private:
  std::optional<TimeArrival> follow(const Vec& xi, double t) const;

  MetricSpec spec_;
  Vec z_;
  Vec spatial_;
  double step_;
};

// P_e on every grid node. CausticError when the congruence Jacobian changes sign or
// degenerates inside the grid.
std::vector<Vec> lightlike_section(const MetricSpec& spec, const LightlikeSection& section,
                                   const DetectorGrid& grid);

struct MeasureOptions {
  CollisionOptions collision{4, 12, false};
  VlasovOptions beams{{}, 2, 6};   // transport of the two beams
  VlasovOptions outer{{}, 24, 6};  // transport of the collision source to the detector
  bool swap_sources = false;
  int loss_samples = 24;           // backward-ray samples per node for the Q_loss audit
};

struct Measurement {
  DetectorGrid grid;
  std::vector<double> values;
  std::vector<Vec> momenta;
  double epsilon = 0.0;
  double extent = 0.0;
  KernelParams kernel;
  double loss_sup = 0.0;  // sup |Q_loss| over the audited backward rays
};

// S(x) = Phi''(0; h1, h2)(x, P(x)) on the grid with the given section.
Measurement measure_on(const MetricSpec& spec, const CollisionKernel& A, const ProbePlan& plan,
                       const DetectorGrid& grid, const std::vector<Vec>& section, const MeasureOptions& opts = {});

inline Measurement measure(const MetricSpec& spec, const CollisionKernel& A, const ProbePlan& plan,
                           const MeasureOptions& opts = {}) {
  return measure_on(spec, A, plan, plan.detector, plan.section, opts);
}

// Radius around z1 of the region where both transported beams may be nonzero, from their
// support envelopes sampled on a lattice of spacing eps / 2. Every nonzero sample of S is
// fed by collisions inside this ball.
double interaction_radius(const MetricSpec& spec, const ProbePlan& plan, const MeasureOptions& opts = {});

// Smallest coordinate-time shift d >= 0 with x + d e0 in J+(z), by bisection on [0, 2].
double causal_deficit(const MetricSpec& spec, const Vec& z, const Vec& x, const CausalOptions& opts = {});

struct Detection {
  std::vector<std::size_t> cells;  // flat indices into the measurement grid
  std::vector<double> laplacian;   // 0 on boundary nodes
  double max_laplacian = 0.0;
};

// Crest nodes where the undivided discrete Laplacian (sum of second differences over the
// non-trivial axes) has the opposite sign to S and magnitude above kappa * max |S|. Needs
// at least 16 cells along every non-trivial axis; EmptyDetection when all values are zero.
Detection detect_singular_support(const Measurement& m, double kappa = 0.5);

// Samples of gamma inside the detector slice as fractional grid coordinates: the
// predicted singular support.
std::vector<std::vector<double>> predicted_ridge(const MetricSpec& spec, const ProbePlan& plan, int samples = 401);

// Euclidean distance in cells from grid coordinates c to the nearest ridge sample.
double ridge_distance(const std::vector<std::vector<double>>& ridge, const std::vector<double>& c);

struct RecoveredObservation {
  Vec a;
  double recovered = 1.0;  // earliest detected s, or 1 without detection
  double truth = 1.0;      // observation_time_plus
  bool detected = false;
  double step = 0.0;
  double delta_steps() const { return std::abs(recovered - truth) / step; }
};

struct RecoveryOptions {
  Interval window{0.55, 0.99};  // s-range of the detectors on each observer
  double spacing = 0.02;
  double kappa = 0.5;
  MeasureOptions measure;
};

// Measurements on a line detector along every observer, with the section of the null
// geodesic from z1 to that observer. Observers without a connection get an all-zero line.
std::vector<Measurement> measure_observers(const MetricSpec& spec, const CollisionKernel& A, const ProbePlan& plan,
                                           const ProbeScenario& scenario, const RecoveryOptions& opts = {});

std::vector<RecoveredObservation> recover_observation_times(const MetricSpec& spec, const ProbeScenario& scenario,
                                                            const Vec& w, const std::vector<Measurement>& lines,
                                                            const RecoveryOptions& opts = {});

struct ConformalReport {
  std::vector<double> residual;    // max distance to the best monotone match, per direction
  std::vector<double> length;      // Euclidean length of the reference path
  std::vector<double> per_length;
  bool monotone = true;
  double max_residual = 0.0;
  double max_per_length = 0.0;
};

// Geodesics of spec and spec_prime from (w, p_j) compared as unparametrised paths.
ConformalReport conformal_consistency_check(const MetricSpec& spec, const MetricSpec& spec_prime, const Vec& w,
                                            const std::vector<Vec>& directions, double duration = 0.5,
                                            double step = 1e-3);

}  // namespace relboltz
