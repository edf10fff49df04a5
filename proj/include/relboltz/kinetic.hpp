#pragma once

#include "relboltz/geodesics.hpp"
#include "relboltz/source.hpp"
#include "relboltz/spacetime.hpp"
#include "relboltz/types.hpp"

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace relboltz {

enum class DensityRep { Analytic, MollifiedSource, Transported, GridCached, LinearCombination, CollisionSource };

// Evaluation backend; called only for (x, p) inside the declared support.
class DensityImpl {
 public:
  virtual ~DensityImpl() = default;
  virtual double eval(const Vec& x, const Vec& p) const = 0;
  // Cheap necessary condition for any nonzero value over base point x.
  virtual bool may_be_nonzero_at(const Vec&) const { return true; }
};

// Scalar field on phase space; an immutable value type sharing its backend.
class PhaseDensity {
 public:
  PhaseDensity() = default;
  PhaseDensity(int dim, DensityRep rep, std::shared_ptr<const DensityImpl> impl, PhaseBox support, bool nonneg,
               std::optional<double> sup_bound = {});

  static PhaseDensity zero(int dim);
  static PhaseDensity analytic(int dim, std::function<double(const Vec&, const Vec&)> fn, PhaseBox support,
                               bool nonneg, std::optional<double> sup_bound = {});

  // Exactly 0 outside the support box.
  double operator()(const Vec& x, const Vec& p) const;

  bool may_be_nonzero_at(const Vec& x) const;
  bool is_zero() const { return impl_ == nullptr; }

  int dim() const { return dim_; }
  DensityRep rep() const { return rep_; }
  const PhaseBox& support() const { return support_; }
  bool nonneg() const { return nonneg_; }
  std::optional<double> sup_bound() const { return sup_bound_; }
  const DensityImpl* impl() const { return impl_.get(); }

 private:
  int dim_ = 0;
  DensityRep rep_ = DensityRep::Analytic;
  std::shared_ptr<const DensityImpl> impl_;
  PhaseBox support_;
  bool nonneg_ = true;
  std::optional<double> sup_bound_;
};

// sum_k coeffs[k] * terms[k]
PhaseDensity linear_combination(std::span<const double> coeffs, std::span<const PhaseDensity> terms);
PhaseDensity scaled(const PhaseDensity& f, double alpha);
PhaseDensity sum(const PhaseDensity& f, const PhaseDensity& g);

// Tensor-product bump mollification of the cut-off delta density of S.
PhaseDensity mollified_delta_source(const SourcePatch& source);

struct VlasovOptions {
  TraceOptions trace;
  int min_panels = 4;
  int order = 8;
};

// Backward-flow integral u(x,p) = int_0^l f(gamma(-s), gamma'(-s)) ds with l the exit time
// from the base support of f. Returns 0 for momenta that are not future causal.
PhaseDensity vlasov_solve(const MetricSpec& spec, const PhaseDensity& f, const VlasovOptions& opts = {});

// Central difference of u along the flow minus f.
double flow_derivative_residual(const MetricSpec& spec, const PhaseDensity& u, const PhaseDensity& f, const Vec& x,
                                const Vec& p, double h);

// Sup over momenta in mom of the parameter length of a geodesic segment inside region
// (closed form for straight geodesics; sampled otherwise).
double transport_constant(const MetricSpec& spec, const Box& region, const Box& mom, std::uint64_t seed = 7);

// Regular tensor grid over base x momentum boxes; axis order x0..x{n-1}, p0..p{n-1}, last fastest.
struct PhaseGrid {
  Box base;
  Box mom;
  std::array<int, 2 * kMaxDim> counts{};

  static PhaseGrid uniform(const Box& base, const Box& mom, int per_axis);

  int dim() const { return base.dim(); }
  int axes() const { return 2 * base.dim(); }
  std::size_t size() const;
  const Interval& side(int axis) const { return axis < dim() ? base[axis] : mom[axis - dim()]; }
  double spacing(int axis) const { return side(axis).width() / (counts[axis] - 1); }
  double coordinate(int axis, int i) const { return side(axis).lo + spacing(axis) * i; }
  std::array<int, 2 * kMaxDim> unflatten(std::size_t index) const;
  PhaseState node(std::size_t index) const;
  PhaseBox box() const { return {base, mom}; }
};

struct GridValues {
  PhaseGrid grid;
  std::vector<double> values;
};

// Multilinear interpolant of node values, exactly 0 outside the grid box.
PhaseDensity grid_cached(const PhaseGrid& grid, std::vector<double> values, bool nonneg);

// Node data of a GridCached density, or null for other representations.
const GridValues* grid_values(const PhaseDensity& f);

// Evaluates f at every node, in parallel.
std::vector<double> sample_on_grid(const PhaseDensity& f, const PhaseGrid& grid);

}  // namespace relboltz
