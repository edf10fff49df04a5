#pragma once

#include "relboltz/source.hpp"
#include "relboltz/spacetime.hpp"
#include "relboltz/types.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace relboltz {

struct GeodesicSample {
  double s;
  Vec x;
  Vec p;
  Vec accel;  // dp/ds, kept for cubic Hermite dense output
};

// Fixed-step RK4 solution; the parameter runs forward (step > 0) or backward (step < 0).
struct GeodesicPath {
  std::vector<GeodesicSample> samples;
  double step = 0;
  double mass_shell_drift = 0;
  bool left_chart = false;

  double s_first() const { return samples.front().s; }
  double s_last() const { return samples.back().s; }

  // Cubic Hermite interpolation between samples; s is clamped to the sampled range.
  PhaseState at(double s) const;
};

PhaseState rk4_step(const MetricSpec& spec, const Vec& x, const Vec& p, double h);

// Integrates for parameter length |duration| in the direction of its sign.
// Stops early (left_chart) when the base point leaves the chart box.
GeodesicPath geodesic_flow(const MetricSpec& spec, const Vec& x, const Vec& p, double duration, double step);

// Endpoint of geodesic_flow without storing samples.
PhaseState flow_to(const MetricSpec& spec, const Vec& x, const Vec& p, double duration, double step);

struct TimeArrival {
  PhaseState state;
  double s;  // affine parameter elapsed (negative when integrating backwards)
};

// Follows the geodesic forwards (t > x0) or backwards (t < x0) until the base point reaches
// coordinate time t, with RK4 parameter steps of at most `step`; the last step is cut by
// bisection. Empty when the chart is left or p0 stops being positive first.
std::optional<TimeArrival> flow_to_time(const MetricSpec& spec, const Vec& x, const Vec& p, double t, double step);

struct TraceOptions {
  // Euclidean length of one base-point step; the parameter step is this over |p|_e so that
  // traces of (x, p) and (x, lambda p) visit identical base points.
  double step_length = 0.02;
  std::size_t max_steps = 1'000'000;
};

// Backward geodesic from (x, p) through a coordinate box K. The backward parameter s >= 0
// refers to the state at geodesic parameter -s. Tracing stops once x0 drops below K,
// or when the chart is left.
class BackwardTrace {
 public:
  BackwardTrace(const MetricSpec& spec, const Vec& x, const Vec& p, const Box& region, const TraceOptions& opts = {});

  PhaseState at(double s) const;

  // Maximal parameter intervals with base point in K, ascending.
  const std::vector<Interval>& inside() const { return inside_; }

  // Ascending parameters of the integration steps over [0, resolved()].
  std::vector<double> knots() const;

  // Panel breakpoints covering iv: step boundaries inside iv, refined to at least min_panels panels.
  std::vector<double> breakpoints(const Interval& iv, int min_panels) const;

  // max{s : base point at -s in K}, 0 if never inside.
  double exit_time() const { return inside_.empty() ? 0.0 : inside_.back().hi; }

  // True when the chart was left while a later visit to K could not be ruled out.
  bool unresolved() const { return unresolved_; }
  double resolved() const { return resolved_; }

 private:
  void trace_straight(const MetricSpec& spec, const Box& region);
  void trace_curved(const MetricSpec& spec, const Box& region, const TraceOptions& opts);

  Vec x_, p_;
  bool straight_ = false;
  double knot_spacing_ = 0;
  GeodesicPath path_;
  std::vector<Interval> inside_;
  bool unresolved_ = false;
  double resolved_ = 0;
};

// Largest backward parameter at which the base point lies in K. Throws ChartExitError
// (with the best lower bound so far) when the chart is left before this is settled.
double exit_time(const MetricSpec& spec, const Vec& x, const Vec& p, const Box& region, const TraceOptions& opts = {});

// Observer curve parametrised by coordinate time: at(t)[0] == t.
struct Worldline {
  std::function<Vec(double)> at;
  Interval window;
};

struct NullConnectOptions {
  int directions_per_angle = 64;
  int refinements = 2;
  int time_samples = 256;
  double step = 2e-3;  // RK4 step for curved metrics
  double miss_tolerance = 1e-8;
};

struct NullConnection {
  Vec direction;   // future null, normalised to direction[0] = 1 at the start event
  double arrival;  // worldline time of the hit
  double miss;     // Euclidean spatial miss at arrival
};

// Earliest future null geodesic from x to the worldline.
// Throws DegenerateTargetError when x is on the worldline, NoConnection when nothing arrives.
NullConnection null_connect(const MetricSpec& spec, const Vec& x, const Worldline& worldline,
                            const NullConnectOptions& opts = {});

// Unit spatial direction on the sphere S^{n-2} for angles theta (n-2 of them; n = 2 uses sign).
Vec sphere_direction(int n, const Vec& angles);

// Crossing geodesic whose transversality to G_S is checked at flow parameter s of member sigma.
struct CrossingEvent {
  Vec sigma;
  double s;
  Vec direction;
};

struct FlowoutOptions {
  int samples_per_parameter = 9;
  int time_samples = 41;
  double step = 1e-3;
  double threshold = 1e-4;
};

struct FlowoutSample {
  std::vector<Vec> sigmas;
  std::vector<double> times;
  std::vector<std::vector<PhaseState>> states;  // [sigma][time]; base points give G_S
  std::vector<double> transversality;           // one per requested event
};

// Tangent directions of G_S at member sigma, parameter s: the geodesic velocity followed
// by one central difference per patch parameter.
std::vector<Vec> flowout_tangents(const MetricSpec& spec, const SourcePatch& source, const Vec& sigma, double s,
                                  double step);

// Sine of the angle between a direction and the span of the given tangents.
double transversality_metric(std::span<const Vec> tangents, const Vec& direction);

// Throws TransversalityError when any event falls below opts.threshold.
FlowoutSample flowout(const MetricSpec& spec, const SourcePatch& source, const Interval& time_window,
                      std::span<const CrossingEvent> events = {}, const FlowoutOptions& opts = {});

}  // namespace relboltz
