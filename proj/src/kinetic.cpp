#include "relboltz/kinetic.hpp"

#include "relboltz/errors.hpp"
#include "relboltz/numerics.hpp"
#include "relboltz/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace relboltz {

namespace {

Box empty_box(int n) {
  Box b(n);
  for (int i = 0; i < n; ++i) b[i] = {1.0, 0.0};
  return b;
}

class AnalyticImpl final : public DensityImpl {
 public:
  explicit AnalyticImpl(std::function<double(const Vec&, const Vec&)> fn) : fn_(std::move(fn)) {}
  double eval(const Vec& x, const Vec& p) const override { return fn_(x, p); }

 private:
  std::function<double(const Vec&, const Vec&)> fn_;
};

class CombinationImpl final : public DensityImpl {
 public:
  CombinationImpl(std::vector<double> coeffs, std::vector<PhaseDensity> terms)
      : coeffs_(std::move(coeffs)), terms_(std::move(terms)) {}

  double eval(const Vec& x, const Vec& p) const override {
    double v = 0.0;
    for (std::size_t k = 0; k < terms_.size(); ++k) v += coeffs_[k] * terms_[k](x, p);
    return v;
  }

  bool may_be_nonzero_at(const Vec& x) const override {
    return std::any_of(terms_.begin(), terms_.end(), [&](const PhaseDensity& t) { return t.may_be_nonzero_at(x); });
  }

 private:
  std::vector<double> coeffs_;
  std::vector<PhaseDensity> terms_;
};

// Per-parameter window on which every coordinate of c + E sigma stays within eps of z.
// Only the listed rows of the frame take part. Returns an empty interval when impossible.
Interval sigma_window(const SourcePatch& s, const double* z, int row_begin, int row_end) {
  const int n = s.dim();
  Interval w{-s.extent, s.extent};
  for (int i = row_begin; i < row_end; ++i) {
    double c = i < n ? s.x[i] : s.p[i - n];
    double e = s.frame(i, 0);
    double d = z[i - row_begin] - c;
    if (std::abs(e) < 1e-14) {
      if (std::abs(d) >= s.epsilon) return {1.0, 0.0};
      continue;
    }
    double a = (d - s.epsilon) / e;
    double b = (d + s.epsilon) / e;
    if (a > b) std::swap(a, b);
    w.lo = std::max(w.lo, a);
    w.hi = std::min(w.hi, b);
    if (w.lo >= w.hi) return {1.0, 0.0};
  }
  return w;
}

class MollifiedImpl final : public DensityImpl {
 public:
  explicit MollifiedImpl(SourcePatch s) : s_(std::move(s)) {}

  double eval(const Vec& x, const Vec& p) const override {
    const int n = s_.dim();
    if (s_.kind == SourcePatch::Kind::Point) {
      double v = 1.0;
      for (int i = 0; i < n && v != 0.0; ++i) v *= mollifier(x[i] - s_.x[i], s_.epsilon);
      for (int i = 0; i < n && v != 0.0; ++i) v *= mollifier(p[i] - s_.p[i], s_.epsilon);
      return v;
    }
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2 * kMaxDim, 1> z(2 * n);
    z << x, p;
    auto integrand = [&](const Vec& sigma) {
      double cut = s_.cutoff(sigma);
      if (cut == 0.0) return 0.0;
      PhaseState st = s_.at(sigma);
      double v = cut;
      for (int i = 0; i < n && v != 0.0; ++i) v *= mollifier(x[i] - st.x[i], s_.epsilon);
      for (int i = 0; i < n && v != 0.0; ++i) v *= mollifier(p[i] - st.p[i], s_.epsilon);
      return v;
    };
    const int m = s_.parameters();
    if (m == 1) {
      Interval w = sigma_window(s_, z.data(), 0, 2 * n);
      if (w.empty()) return 0.0;
      Vec sigma(1);
      return integrate([&](double t) { sigma[0] = t; return integrand(sigma); }, w.lo, w.hi, 4, 8);
    }
    // Orthonormal frame: |sigma - E^T (z - c)| <= sqrt(2n) eps on the support.
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2 * kMaxDim, 1> c(2 * n);
    c << s_.x, s_.p;
    Eigen::VectorXd centre = s_.frame.transpose() * (z - c);
    double radius = std::sqrt(2.0 * n) * s_.epsilon;
    Box window(m);
    for (int k = 0; k < m; ++k) {
      window[k] = {std::max(-s_.extent, centre[k] - radius), std::min(s_.extent, centre[k] + radius)};
      if (window[k].empty()) return 0.0;
    }
    double total = 0.0;
    for (int panel = 0; panel < (1 << m); ++panel) {
      Box sub(m);
      for (int k = 0; k < m; ++k) {
        double mid = window[k].mid();
        sub[k] = (panel >> k) & 1 ? Interval{mid, window[k].hi} : Interval{window[k].lo, mid};
      }
      TensorRule rule = tensor_gauss(sub, 8);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) total += rule.weights[q] * integrand(rule.nodes[q]);
    }
    return total;
  }

  bool may_be_nonzero_at(const Vec& x) const override {
    if (s_.kind != SourcePatch::Kind::Patch || s_.parameters() != 1) return true;
    return !sigma_window(s_, x.data(), 0, s_.dim()).empty();
  }

 private:
  SourcePatch s_;
};

class TransportedImpl final : public DensityImpl {
 public:
  TransportedImpl(MetricSpec spec, PhaseDensity f, VlasovOptions opts)
      : spec_(std::move(spec)), f_(std::move(f)), opts_(opts), straight_(spec_.flat_coordinates()) {
    const Box& mom = f_.support().mom;
    const int n = spec_.dim();
    // Velocity box of straight rays: corner extremes of p_i / p0 over the momentum support.
    envelope_ = straight_ && mom.bounded() && mom[0].lo > 0.0;
    if (envelope_) {
      velocity_ = Box(n);
      for (int i = 1; i < n; ++i) {
        double r[4] = {mom[i].lo / mom[0].lo, mom[i].lo / mom[0].hi, mom[i].hi / mom[0].lo, mom[i].hi / mom[0].hi};
        velocity_[i] = {*std::min_element(r, r + 4), *std::max_element(r, r + 4)};
      }
    }
  }

  double eval(const Vec& x, const Vec& p) const override {
    const Box& region = f_.support().base;
    if (x[0] < region[0].lo) return 0.0;
    if (!future_causal(spec_, x, p)) return 0.0;
    if (straight_ && !f_.support().mom.contains(p)) return 0.0;
    if (!may_be_nonzero_at(x)) return 0.0;
    BackwardTrace trace(spec_, x, p, region, opts_.trace);
    const GaussRule& rule = gauss_legendre(opts_.order);
    double total = 0.0;
    for (const Interval& iv : trace.inside()) {
      std::vector<double> bps = trace.breakpoints(iv, opts_.min_panels);
      for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
        double mid = 0.5 * (bps[k] + bps[k + 1]);
        double half = 0.5 * (bps[k + 1] - bps[k]);
        double panel = 0.0;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
          PhaseState st = trace.at(mid + half * rule.nodes[q]);
          if (!f_.may_be_nonzero_at(st.x)) continue;
          panel += rule.weights[q] * f_(st.x, st.p);
        }
        total += half * panel;
      }
    }
    return total;
  }

  bool may_be_nonzero_at(const Vec& x) const override {
    const Box& region = f_.support().base;
    if (x[0] < region[0].lo) return false;
    if (!envelope_) return true;
    // x - d v must meet the base support for some d in the elapsed-time range, v in the velocity box.
    Interval d{std::max(0.0, x[0] - region[0].hi), x[0] - region[0].lo};
    for (int i = 1; i < x.size(); ++i) {
      double c[4] = {d.lo * velocity_[i].lo, d.lo * velocity_[i].hi, d.hi * velocity_[i].lo, d.hi * velocity_[i].hi};
      double lo = x[i] - *std::max_element(c, c + 4);
      double hi = x[i] - *std::min_element(c, c + 4);
      if (hi < region[i].lo || lo > region[i].hi) return false;
    }
    return true;
  }

 private:
  MetricSpec spec_;
  PhaseDensity f_;
  VlasovOptions opts_;
  bool straight_;
  bool envelope_ = false;
  Box velocity_;
};

class GridImpl final : public DensityImpl {
 public:
  explicit GridImpl(GridValues data) : data_(std::move(data)) {
    const int axes = data_.grid.axes();
    std::size_t stride = 1;
    for (int a = axes - 1; a >= 0; --a) {
      strides_[a] = stride;
      stride *= static_cast<std::size_t>(data_.grid.counts[a]);
    }
  }

  double eval(const Vec& x, const Vec& p) const override {
    const PhaseGrid& g = data_.grid;
    const int n = g.dim();
    const int axes = 2 * n;
    std::array<std::size_t, 2 * kMaxDim> cell{};
    std::array<double, 2 * kMaxDim> frac{};
    std::size_t base = 0;
    for (int a = 0; a < axes; ++a) {
      double v = a < n ? x[a] : p[a - n];
      const Interval& side = g.side(a);
      double t = (v - side.lo) / g.spacing(a);
      int last = g.counts[a] - 2;
      int i = std::clamp(static_cast<int>(std::floor(t)), 0, last);
      cell[a] = static_cast<std::size_t>(i);
      frac[a] = std::clamp(t - i, 0.0, 1.0);
      base += cell[a] * strides_[a];
    }
    double total = 0.0;
    for (int corner = 0; corner < (1 << axes); ++corner) {
      double w = 1.0;
      std::size_t idx = base;
      for (int a = 0; a < axes; ++a) {
        if ((corner >> a) & 1) {
          w *= frac[a];
          idx += strides_[a];
        } else {
          w *= 1.0 - frac[a];
        }
      }
      if (w != 0.0) total += w * data_.values[idx];
    }
    return total;
  }

  const GridValues& data() const { return data_; }

 private:
  GridValues data_;
  std::array<std::size_t, 2 * kMaxDim> strides_{};
};

}  // namespace

PhaseDensity::PhaseDensity(int dim, DensityRep rep, std::shared_ptr<const DensityImpl> impl, PhaseBox support,
                           bool nonneg, std::optional<double> sup_bound)
    : dim_(dim), rep_(rep), impl_(std::move(impl)), support_(support), nonneg_(nonneg), sup_bound_(sup_bound) {}

PhaseDensity PhaseDensity::zero(int dim) {
  PhaseDensity f;
  f.dim_ = dim;
  f.support_ = {empty_box(dim), empty_box(dim)};
  f.sup_bound_ = 0.0;
  return f;
}

PhaseDensity PhaseDensity::analytic(int dim, std::function<double(const Vec&, const Vec&)> fn, PhaseBox support,
                                    bool nonneg, std::optional<double> sup_bound) {
  return {dim, DensityRep::Analytic, std::make_shared<AnalyticImpl>(std::move(fn)), support, nonneg, sup_bound};
}

double PhaseDensity::operator()(const Vec& x, const Vec& p) const {
  if (!impl_ || !support_.contains(x, p)) return 0.0;
  return impl_->eval(x, p);
}

bool PhaseDensity::may_be_nonzero_at(const Vec& x) const {
  return impl_ && support_.base.contains(x) && impl_->may_be_nonzero_at(x);
}

PhaseDensity linear_combination(std::span<const double> coeffs, std::span<const PhaseDensity> terms) {
  if (coeffs.size() != terms.size()) throw DomainError("linear_combination: size mismatch");
  std::vector<double> c;
  std::vector<PhaseDensity> t;
  int dim = terms.empty() ? 0 : terms.front().dim();
  std::optional<PhaseBox> support;
  bool nonneg = true;
  std::optional<double> sup = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (coeffs[k] == 0.0 || terms[k].is_zero()) continue;
    c.push_back(coeffs[k]);
    t.push_back(terms[k]);
    support = support ? support->hull(terms[k].support()) : terms[k].support();
    nonneg = nonneg && coeffs[k] > 0.0 && terms[k].nonneg();
    if (sup && terms[k].sup_bound())
      *sup += std::abs(coeffs[k]) * *terms[k].sup_bound();
    else
      sup.reset();
  }
  if (t.empty()) return PhaseDensity::zero(dim);
  return {dim, DensityRep::LinearCombination, std::make_shared<CombinationImpl>(std::move(c), std::move(t)), *support,
          nonneg, sup};
}

PhaseDensity scaled(const PhaseDensity& f, double alpha) {
  double c[1] = {alpha};
  PhaseDensity t[1] = {f};
  return linear_combination(c, t);
}

PhaseDensity sum(const PhaseDensity& f, const PhaseDensity& g) {
  double c[2] = {1.0, 1.0};
  PhaseDensity t[2] = {f, g};
  return linear_combination(c, t);
}

PhaseDensity mollified_delta_source(const SourcePatch& source) {
  if (source.kind == SourcePatch::Kind::Patch && !(source.epsilon < source.extent))
    throw MollificationError("mollified_delta_source: width must be below the patch extent");
  if (!(source.epsilon > 0.0)) throw MollificationError("mollified_delta_source: width must be positive");
  const int n = source.dim();
  double peak = std::pow(mollifier(0.0, source.epsilon), 2 * n);
  std::optional<double> sup = peak;
  if (source.kind == SourcePatch::Kind::Patch)
    sup = peak * std::pow(2.0 * std::sqrt(2.0 * n) * source.epsilon, source.parameters());
  return {n, DensityRep::MollifiedSource, std::make_shared<MollifiedImpl>(source), source.support(), true, sup};
}

PhaseDensity vlasov_solve(const MetricSpec& spec, const PhaseDensity& f, const VlasovOptions& opts) {
  const int n = spec.dim();
  if (f.is_zero()) return PhaseDensity::zero(n);
  const Box& region = f.support().base;
  if (!std::isfinite(region[0].lo)) throw DomainError("vlasov_solve: source must start after a Cauchy slice");
  Box base = spec.chart();
  base[0].lo = std::max(base[0].lo, region[0].lo);
  Box mom = spec.flat_coordinates() ? f.support().mom : Box::unbounded(n);
  return {n, DensityRep::Transported, std::make_shared<TransportedImpl>(spec, f, opts), {base, mom}, f.nonneg()};
}

double flow_derivative_residual(const MetricSpec& spec, const PhaseDensity& u, const PhaseDensity& f, const Vec& x,
                                const Vec& p, double h) {
  PhaseState fwd = rk4_step(spec, x, p, h);
  PhaseState bwd = rk4_step(spec, x, p, -h);
  return (u(fwd.x, fwd.p) - u(bwd.x, bwd.p)) / (2.0 * h) - f(x, p);
}

double transport_constant(const MetricSpec& spec, const Box& region, const Box& mom, std::uint64_t seed) {
  const int n = spec.dim();
  if (spec.flat_coordinates()) {
    // Longest chord of a box along p is min_i width_i / |p_i|.
    double best = kInf;
    for (int i = 0; i < n; ++i) {
      double inf_abs = (mom[i].lo <= 0.0 && mom[i].hi >= 0.0) ? 0.0 : std::min(std::abs(mom[i].lo), std::abs(mom[i].hi));
      if (inf_abs > 0.0) best = std::min(best, region[i].width() / inf_abs);
    }
    return best;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double best = 0.0;
  for (int k = 0; k < 2000; ++k) {
    Vec x(n), p(n);
    for (int i = 0; i < n; ++i) {
      x[i] = region[i].lo + region[i].width() * unit(rng);
      p[i] = mom[i].lo + mom[i].width() * unit(rng);
    }
    if (k % 2 == 0) x[0] = region[0].hi;
    if (!future_causal(spec, x, p)) continue;
    BackwardTrace trace(spec, x, p, region);
    double len = 0.0;
    for (const Interval& iv : trace.inside()) len += iv.width();
    best = std::max(best, len);
  }
  return 1.05 * best;
}

PhaseGrid PhaseGrid::uniform(const Box& base, const Box& mom, int per_axis) {
  if (per_axis < 2) throw DomainError("phase grid needs at least two nodes per axis");
  PhaseGrid g{base, mom, {}};
  for (int a = 0; a < g.axes(); ++a) g.counts[a] = per_axis;
  return g;
}

std::size_t PhaseGrid::size() const {
  std::size_t total = 1;
  for (int a = 0; a < axes(); ++a) total *= static_cast<std::size_t>(counts[a]);
  return total;
}

std::array<int, 2 * kMaxDim> PhaseGrid::unflatten(std::size_t index) const {
  std::array<int, 2 * kMaxDim> idx{};
  for (int a = axes() - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(index % static_cast<std::size_t>(counts[a]));
    index /= static_cast<std::size_t>(counts[a]);
  }
  return idx;
}

PhaseState PhaseGrid::node(std::size_t index) const {
  const int n = dim();
  auto idx = unflatten(index);
  PhaseState st{Vec(n), Vec(n)};
  for (int i = 0; i < n; ++i) {
    st.x[i] = coordinate(i, idx[i]);
    st.p[i] = coordinate(n + i, idx[n + i]);
  }
  return st;
}

PhaseDensity grid_cached(const PhaseGrid& grid, std::vector<double> values, bool nonneg) {
  if (values.size() != grid.size()) throw DomainError("grid_cached: value count does not match the grid");
  double sup = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw EvaluationError("grid_cached: non-finite node value");
    sup = std::max(sup, std::abs(v));
  }
  auto impl = std::make_shared<GridImpl>(GridValues{grid, std::move(values)});
  return {grid.dim(), DensityRep::GridCached, impl, grid.box(), nonneg, sup};
}

const GridValues* grid_values(const PhaseDensity& f) {
  if (f.rep() != DensityRep::GridCached) return nullptr;
  return &static_cast<const GridImpl*>(f.impl())->data();
}

std::vector<double> sample_on_grid(const PhaseDensity& f, const PhaseGrid& grid) {
  std::vector<double> out(grid.size(), 0.0);
  if (f.is_zero()) return out;
  parallel_for(out.size(), [&](std::size_t k) {
    PhaseState st = grid.node(k);
    out[k] = f(st.x, st.p);
  });
  return out;
}

}  // namespace relboltz
