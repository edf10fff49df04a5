#include "relboltz/source.hpp"

#include "relboltz/errors.hpp"
#include "relboltz/numerics.hpp"

#include <cmath>

namespace relboltz {

SourcePatch SourcePatch::point(const Vec& x, const Vec& p, double epsilon) {
  SourcePatch s;
  s.kind = Kind::Point;
  s.x = x;
  s.p = p;
  s.frame = Frame(2 * x.size(), 0);
  s.epsilon = epsilon;
  return s;
}

SourcePatch SourcePatch::patch(const Vec& x, const Vec& p, const Frame& frame, double extent, double epsilon) {
  SourcePatch s;
  s.kind = Kind::Patch;
  s.x = x;
  s.p = p;
  s.frame = frame;
  s.extent = extent;
  s.epsilon = epsilon;
  return s;
}

PhaseState SourcePatch::at(const Vec& sigma) const {
  const int n = dim();
  PhaseState st{x, p};
  for (int c = 0; c < parameters(); ++c) {
    st.x += sigma[c] * frame.col(c).head(n);
    st.p += sigma[c] * frame.col(c).tail(n);
  }
  return st;
}

double SourcePatch::cutoff(const Vec& sigma) const {
  if (kind == Kind::Point) return 1.0;
  double r = sigma.norm() / extent;
  if (r <= 0.5) return 1.0;
  if (r >= 1.0) return 0.0;
  return smooth_step((1.0 - r) / 0.5);
}

PhaseBox SourcePatch::support() const {
  const int n = dim();
  PhaseBox box{Box::cube(x, epsilon), Box::cube(p, epsilon)};
  for (int c = 0; c < parameters(); ++c) {
    for (int i = 0; i < n; ++i) {
      double dx = extent * std::abs(frame(i, c));
      double dp = extent * std::abs(frame(n + i, c));
      box.base[i] = {box.base[i].lo - dx, box.base[i].hi + dx};
      box.mom[i] = {box.mom[i].lo - dp, box.mom[i].hi + dp};
    }
  }
  return box;
}

void SourcePatch::validate(const MetricSpec& spec) const {
  const int n = dim();
  if (n != spec.dim() || p.size() != n) throw DomainError("source: dimension mismatch with metric");
  if (!(epsilon > 0.0)) throw MollificationError("source: mollification width must be positive");
  if (kind == Kind::Patch) {
    if (frame.rows() != 2 * n || frame.cols() != n - 2)
      throw DomainError("source: patch frame must have 2n rows and n-2 columns");
    if (!(epsilon < extent)) throw MollificationError("source: mollification width must be smaller than the extent");
    Eigen::MatrixXd gram = frame.transpose() * frame;
    if ((gram - Eigen::MatrixXd::Identity(n - 2, n - 2)).cwiseAbs().maxCoeff() > 1e-12)
      throw DomainError("source: patch frame is not orthonormal");
    for (int c = 0; c < n - 2; ++c)
      if (frame(0, c) != 0.0) throw DomainError("source: patch frame moves off the slice");
  }
  if (!spec.in_chart(x)) throw DomainError("source: centre outside the chart");
  // Every momentum in the mollified support must be future timelike, so that
  // lightlike vectors never meet the support.
  PhaseBox box = support();
  const int corners = 1 << n;
  for (int c = 0; c < corners; ++c) {
    Vec q(n);
    for (int i = 0; i < n; ++i) q[i] = (c >> i) & 1 ? box.mom[i].hi : box.mom[i].lo;
    Vec xc = x;
    if (!future_timelike(spec, xc, q))
      throw MollificationError("source: mollified momentum support leaves the future timelike cone");
  }
}

}  // namespace relboltz
