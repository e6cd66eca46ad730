#include "bsp/tail_curve.hpp"

#include <algorithm>
#include <cmath>

#include "bsp/errors.hpp"

namespace bsp {

double TailModel::operator()(double x) const {
  switch (kind) {
    case TailKind::Power:
      return amplitude * std::pow(x, -exponent_or_rate);
    case TailKind::Exponential:
      return amplitude * std::exp(-exponent_or_rate * x);
    case TailKind::None:
      break;
  }
  return amplitude;
}

TailCurve::TailCurve(std::vector<double> xs, std::vector<double> u, TailShape right)
    : xs_(std::move(xs)), u_(std::move(u)) {
  if (xs_.empty() || xs_.size() != u_.size()) throw InvalidArgument("TailCurve: need matching, nonempty grids");
  if (xs_.front() < 0.0) throw InvalidArgument("TailCurve: grid must start at x >= 0");
  for (std::size_t i = 1; i < xs_.size(); ++i) {
    if (!(xs_[i] > xs_[i - 1])) throw InvalidArgument("TailCurve: grid must be strictly ascending");
  }
  const double x_last = xs_.back();
  const double u_last = u_.back();
  if (right.kind == TailKind::Power && x_last > 0.0) {
    tail_ = TailModel{TailKind::Power, right.exponent_or_rate, u_last * std::pow(x_last, right.exponent_or_rate)};
  } else if (right.kind == TailKind::Exponential) {
    tail_ = TailModel{TailKind::Exponential, right.exponent_or_rate, u_last * std::exp(right.exponent_or_rate * x_last)};
  }
}

double TailCurve::left(double x) const {
  // 0 < x < xs_[0]: between the pinned value 1 at 0 and the first node.
  return 1.0 + (x / xs_[0]) * (u_[0] - 1.0);
}

double TailCurve::beyond(double x) const { return tail_ ? (*tail_)(x) : u_.back(); }

double TailCurve::operator()(double x) const {
  if (x <= 0.0) return 1.0;
  if (x >= xs_.back()) return beyond(x);
  if (x < xs_.front()) return left(x);
  const auto k = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin()) - 1;
  const double t = (x - xs_[k]) / (xs_[k + 1] - xs_[k]);
  return u_[k] + t * (u_[k + 1] - u_[k]);
}

}  // namespace bsp
