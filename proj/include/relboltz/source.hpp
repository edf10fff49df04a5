#pragma once

#include "relboltz/spacetime.hpp"
#include "relboltz/types.hpp"

#include <vector>

namespace relboltz {

// Phase-space displacement directions of a patch: 2n rows (dx, dp), one column per parameter.
using Frame = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 2 * kMaxDim, kMaxDim>;

// A point or an (n-2)-parameter family of initial vectors over the slice x0 = t0.
struct SourcePatch {
  enum class Kind { Point, Patch };

  Kind kind = Kind::Point;
  Vec x;              // base point of the centre; x[0] is the slice time
  Vec p;              // initial vector of the centre
  Frame frame;        // Patch only: orthonormal columns with zero dx0 component
  double extent = 0;  // Patch only: cutoff radius R
  double epsilon = 0; // mollification width

  static SourcePatch point(const Vec& x, const Vec& p, double epsilon);
  static SourcePatch patch(const Vec& x, const Vec& p, const Frame& frame, double extent, double epsilon);

  int dim() const { return static_cast<int>(x.size()); }
  int parameters() const { return kind == Kind::Point ? 0 : static_cast<int>(frame.cols()); }
  double slice_time() const { return x[0]; }

  // Phase point at parameter sigma (size parameters()).
  PhaseState at(const Vec& sigma) const;

  // Smooth cutoff: 1 for |sigma| <= R/2, 0 for |sigma| >= R.
  double cutoff(const Vec& sigma) const;

  // Bounding box of the epsilon-neighbourhood of the patch (sup-norm).
  PhaseBox support() const;

  // Throws MollificationError / DomainError when the invariants fail.
  void validate(const MetricSpec& spec) const;
};

}  // namespace relboltz
