#pragma once

#include "relboltz/spacetime.hpp"
#include "relboltz/types.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace relboltz {

enum class TauBackend { Auto, Analytic, FanShooting };

struct FanOptions {
  int directions = 128;   // initial velocities per fan
  int refinements = 2;    // zoomed fans around each candidate
  int candidates = 3;     // well-separated fan minima polished by Newton
  int steps = 200;        // RK4 steps per shot over the time gap
  double max_rapidity = 6.0;
  double miss_tolerance = 1e-10;
};

struct CausalOptions {
  TauBackend backend = TauBackend::Auto;
  FanOptions fan;
  double tau_tol = 1e-9;
  double s_resolution = 1e-6;
};

struct TimeSeparation {
  double value = 0.0;
  // Set when the search could not connect x to y; value is then only a lower bound.
  bool lower_bound = false;
  double miss = 0.0;  // spatial miss of the polished geodesic (fan backend)
  // Fan backend: values at or below this are reported as 0 (null-separated within tolerance).
  double resolution = 0.0;
};

enum class CausalRelation { None, Null, Chronological };

// Exact causal relation of y to x where the conformal structure is known in closed form
// (conformally flat metrics and warped products); empty for custom metrics.
std::optional<CausalRelation> causal_relation(const MetricSpec& spec, const Vec& x, const Vec& y);

// Lorentzian distance tau(x, y), zero unless y is in the chronological future of x.
TimeSeparation measure_time_separation(const MetricSpec& spec, const Vec& x, const Vec& y,
                                       const CausalOptions& opts = {});

inline double time_separation(const MetricSpec& spec, const Vec& x, const Vec& y, const CausalOptions& opts = {}) {
  return measure_time_separation(spec, x, y, opts).value;
}

// tau(x, y) > tau_tol, taking the exact relation when it is available.
bool chronological(const MetricSpec& spec, const Vec& x, const Vec& y, const CausalOptions& opts = {});

// Coordinate observers mu_a(s) = (s, a), s in [-1, 1], sampled on a parameter grid.
class ObserverFamily {
 public:
  // Tensor grid over a_box (dimension n-1); counts of 1 pin an axis to its midpoint.
  // The grid must contain a = 0, which becomes the distinguished observer.
  static ObserverFamily grid(int n, const Box& a_box, const std::vector<int>& counts);

  // per_axis points on [-half_width, half_width] along the first n-2 spatial axes, the
  // last axis pinned at 0: per_axis^(n-2) observers.
  static ObserverFamily standard(int n, double half_width = 0.5, int per_axis = 33);

  // Explicit parameter list; one entry must be 0.
  static ObserverFamily from_params(int n, std::vector<Vec> params);

  int dim() const { return n_; }
  std::size_t size() const { return params_.size(); }
  const Vec& param(std::size_t i) const { return params_[i]; }
  std::size_t hat() const { return hat_; }

  Vec at(std::size_t i, double s) const { return event(params_[i], s); }
  static Vec event(const Vec& a, double s);

 private:
  int n_ = 0;
  std::vector<Vec> params_;
  std::size_t hat_ = 0;
};

struct CausalDiamond {
  double s_minus = -0.5;
  double s_plus = 0.5;
  Vec x_minus;
  Vec x_plus;

  // Diamond between mu_hat(s_minus) and mu_hat(s_plus); DomainError unless -1 < s- < s+ < 1.
  static CausalDiamond on(const ObserverFamily& family, double s_minus, double s_plus);

  // w in I^-(x+) and I^+(x-).
  bool contains(const MetricSpec& spec, const Vec& w, const CausalOptions& opts = {}) const;
};

// Observers timelike and future-directed at sampled s; mu_a(-1) << x- and x+ << mu_a(1)
// for every a. Throws DomainError naming the first failing observer.
void validate_observers(const MetricSpec& spec, const ObserverFamily& family, const CausalDiamond& diamond,
                        const CausalOptions& opts = {});

// inf({s in (-1,1) : tau(x, mu_a(s)) > 0} u {1}) by bisection.
double observation_time_plus(const MetricSpec& spec, const Vec& a, const Vec& x, const CausalOptions& opts = {});

// sup({s in (-1,1) : tau(mu_a(s), x) > 0} u {-1}).
double observation_time_minus(const MetricSpec& spec, const Vec& a, const Vec& x, const CausalOptions& opts = {});

struct ObservationEvent {
  Vec a;
  double f_plus;
  Vec event;  // mu_a(f_plus)
};

// Earliest light observation set of w: one event per observer.
std::vector<ObservationEvent> earliest_obs_set(const MetricSpec& spec, const ObserverFamily& family, const Vec& w,
                                               const CausalOptions& opts = {});

// For future null segments x -> y -> z: true when tau(x, z) > tau_tol, i.e. the broken
// path can be shortcut by a timelike geodesic. DegenerateInput when y coincides with x or z;
// DomainError when a segment is not null.
bool shortcut_check(const MetricSpec& spec, const Vec& x, const Vec& y, const Vec& z, const CausalOptions& opts = {});

}  // namespace relboltz
