#include "bsp/tail_estimate.hpp"

#include <algorithm>

#include "bsp/errors.hpp"

namespace bsp {

TailEstimate TailEstimate::from_curve(std::vector<double> xs, std::vector<double> u, double rel_halfwidth) {
  if (xs.size() != u.size()) throw InvalidArgument("from_curve: size mismatch");
  TailEstimate e;
  e.n = 0;
  e.ci_low.resize(u.size());
  e.ci_high.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    e.ci_low[i] = u[i] * (1.0 - rel_halfwidth);
    e.ci_high[i] = u[i] * (1.0 + rel_halfwidth);
  }
  e.xs = std::move(xs);
  e.u_optimistic = u;
  e.u_hat = std::move(u);
  e.hits.assign(e.xs.size(), 0);
  e.open.assign(e.xs.size(), 0);
  return e;
}

TailCounter::TailCounter(std::vector<double> xs) : xs_(std::move(xs)) {
  if (!std::is_sorted(xs_.begin(), xs_.end())) throw InvalidArgument("tail grid must be ascending");
  level_.assign(xs_.size() + 1, 0);
  truncated_level_.assign(xs_.size() + 1, 0);
}

void TailCounter::add(double m, bool truncated) {
  const auto k = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), m) - xs_.begin());
  ++level_[k];
  ++n_;
  if (truncated) {
    ++truncated_level_[k];
    ++truncated_;
  }
}

void TailCounter::merge(const TailCounter& other) {
  if (xs_.empty() && n_ == 0) {
    *this = other;
    return;
  }
  if (other.xs_ != xs_) throw InvalidArgument("TailCounter::merge: grids differ");
  for (std::size_t k = 0; k < level_.size(); ++k) {
    level_[k] += other.level_[k];
    truncated_level_[k] += other.truncated_level_[k];
  }
  n_ += other.n_;
  truncated_ += other.truncated_;
}

TailEstimate TailCounter::finalize(double z) const {
  TailEstimate e;
  const std::size_t g = xs_.size();
  e.xs = xs_;
  e.n = n_;
  e.truncated = truncated_;
  e.hits.assign(g, 0);
  e.open.assign(g, 0);
  // hits[i] = #trees reaching more than i grid points
  std::uint64_t above = 0;
  for (std::size_t i = g; i-- > 0;) {
    above += level_[i + 1];
    e.hits[i] = above;
  }
  // open[i] = #truncated trees reaching at most i grid points
  std::uint64_t below = 0;
  for (std::size_t i = 0; i < g; ++i) {
    below += truncated_level_[i];
    e.open[i] = below;
  }
  e.u_hat.resize(g);
  e.u_optimistic.resize(g);
  e.ci_low.resize(g);
  e.ci_high.resize(g);
  const double n = static_cast<double>(std::max<std::uint64_t>(n_, 1));
  for (std::size_t i = 0; i < g; ++i) {
    e.u_hat[i] = static_cast<double>(e.hits[i]) / n;
    e.u_optimistic[i] = static_cast<double>(e.hits[i] + e.open[i]) / n;
    e.ci_low[i] = wilson_interval(e.hits[i], n_, z).low;
    e.ci_high[i] = wilson_interval(e.hits[i] + e.open[i], n_, z).high;
  }
  return e;
}

}  // namespace bsp
