#pragma once

// u(x) as a function of a real argument, built from values on an ascending
// grid: u = 1 for x <= 0 (the root starts at 0, so M >= 0), piecewise linear
// between nodes (between 0 and the first node too, when that node is
// positive), and a parametric tail beyond the last node.

#include <cstddef>
#include <optional>
#include <vector>

namespace bsp {

enum class TailKind { Power, Exponential, None };

/// Shape of the right tail: x^{-p} or e^{-a x}. The amplitude is matched to
/// the last grid value, so the curve stays continuous.
struct TailShape {
  TailKind kind = TailKind::None;
  double exponent_or_rate = 0.0;
};

/// amplitude * x^{-p} or amplitude * e^{-a x}.
struct TailModel {
  TailKind kind = TailKind::Power;
  double exponent_or_rate = 0.0;
  double amplitude = 0.0;

  double operator()(double x) const;
};

class TailCurve {
 public:
  TailCurve() = default;
  /// Without a tail shape, u is held at its last grid value beyond the grid.
  TailCurve(std::vector<double> xs, std::vector<double> u, TailShape right = {});

  double operator()(double x) const;

  /// Same as operator() for a nondecreasing sequence of arguments; `hint`
  /// must start at 0 and is advanced in place.
  double walk(double x, std::size_t& hint) const {
    if (x <= 0.0) return 1.0;
    const std::size_t n = xs_.size();
    if (x >= xs_[n - 1]) return beyond(x);
    while (hint + 1 < n && xs_[hint + 1] <= x) ++hint;
    if (x < xs_[hint]) return left(x);
    const double t = (x - xs_[hint]) / (xs_[hint + 1] - xs_[hint]);
    return u_[hint] + t * (u_[hint + 1] - u_[hint]);
  }

  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& values() const { return u_; }
  const std::optional<TailModel>& tail() const { return tail_; }

 private:
  double left(double x) const;
  double beyond(double x) const;

  std::vector<double> xs_;
  std::vector<double> u_;
  std::optional<TailModel> tail_;
};

}  // namespace bsp
