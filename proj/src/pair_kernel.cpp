#include "bsp/pair_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bsp/errors.hpp"

namespace bsp {

PairKernel::PairKernel(std::vector<std::pair<double, double>> pairs, double step) : step_(step) {
  if (pairs.empty()) throw InvalidArgument("PairKernel: no pairs");
  if (pairs.size() > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("PairKernel: too many pairs");
  for (const auto& [xi, s] : pairs) {
    if (!std::isfinite(xi) || !std::isfinite(s) || s < 0.0 || s < xi) {
      throw InvalidArgument("PairKernel: every pair needs s >= max(0, xi)");
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  xi_.reserve(pairs.size());
  s_.reserve(pairs.size());
  for (const auto& [xi, s] : pairs) {
    xi_.push_back(xi);
    s_.push_back(s);
  }
  by_xi_desc_.resize(pairs.size());
  std::iota(by_xi_desc_.begin(), by_xi_desc_.end(), 0u);
  std::stable_sort(by_xi_desc_.begin(), by_xi_desc_.end(), [&](std::uint32_t a, std::uint32_t b) { return xi_[a] > xi_[b]; });
}

std::size_t PairKernel::count_below(double x) const {
  return static_cast<std::size_t>(std::lower_bound(s_.begin(), s_.end(), x) - s_.begin());
}

double PairKernel::tail_probability(double x) const {
  return static_cast<double>(n() - count_below(x)) / static_cast<double>(n());
}

PairKernel build_kernel(const StableParams& motion, double step, std::size_t n, const RunSettings& run) {
  if (n < 10'000) throw InvalidArgument("build_kernel: need at least 10^4 pairs");
  if (!(step > 0.0)) throw InvalidArgument("build_kernel: step must be positive");
  if (run.block == 0) throw InvalidArgument("build_kernel: block size must be positive");
  const StableSampler sampler(motion);
  using Pairs = std::vector<std::pair<double, double>>;
  auto task = [&](std::size_t t) {
    RngStream rng(run.seed, StreamPurpose::kKernel, t);
    const std::size_t begin = t * run.block;
    const std::size_t end = std::min(n, begin + run.block);
    Pairs out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(sample_exp_pair(sampler, step, rng));
    return out;
  };
  auto merge = [](Pairs& into, Pairs&& part) { into.insert(into.end(), part.begin(), part.end()); };
  Pairs init;
  init.reserve(n);
  return PairKernel(run_tasks(block_count(n, run.block), run.workers, task, merge, std::move(init)), step);
}

}  // namespace bsp
