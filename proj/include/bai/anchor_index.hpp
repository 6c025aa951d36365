#pragma once

// The anchor function g, the pairwise transportation-cost indexes, empirical
// statistics tracking, and the GLLR stopping statistic.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "bai/spef.hpp"

namespace bai {

// Below this gap the 0/0 ratio limit (N_a/N_best)^2 replaces the KL ratio
// and the transportation cost is 0, so a degenerate gap can never stop.
inline constexpr double kDegenerateGapTol = 1e-12;

// Per-arm pull counts and reward sums for one run.
struct SamplingState {
  std::vector<std::int64_t> counts;
  std::vector<double> reward_sums;
  std::int64_t total_pulls = 0;

  explicit SamplingState(int num_arms)
      : counts(static_cast<std::size_t>(num_arms), 0),
        reward_sums(static_cast<std::size_t>(num_arms), 0.0) {}

  int num_arms() const { return static_cast<int>(counts.size()); }

  void record(int arm, double reward) {
    counts[static_cast<std::size_t>(arm)] += 1;
    reward_sums[static_cast<std::size_t>(arm)] += reward;
    total_pulls += 1;
  }

  bool all_pulled() const {
    for (std::int64_t c : counts)
      if (c == 0) return false;
    return true;
  }

  double empirical_mean(int arm) const {
    const auto a = static_cast<std::size_t>(arm);
    if (counts[a] == 0)
      throw std::logic_error("empirical mean of an unpulled arm");
    return reward_sums[a] / static_cast<double>(counts[a]);
  }
};

// Count-weighted mean of two arm means; the transportation-cost minimizer.
inline double weighted_mid(double n1, double na, double mu1, double mua) {
  if (!(n1 + na > 0.0))
    throw std::invalid_argument("weighted_mid: both weights are zero");
  return (n1 * mu1 + na * mua) / (n1 + na);
}

// W(n1, na) = n1 d(mu1, x) + na d(mua, x) at the weighted mid x, which is
// the minimum of the same expression over x between the two means.
inline double index_value(const SpefFamily& f, double n1, double na,
                          double mu1, double mua) {
  if (!(n1 + na > 0.0))
    throw std::invalid_argument("index_value: both counts are zero");
  if (na == 0.0 || mu1 == mua) return 0.0;
  if (n1 == 0.0) return 0.0;
  const double x = weighted_mid(n1, na, mu1, mua);
  return n1 * kl(f, mu1, x) + na * kl(f, mua, x);
}

// g = sum_{a != best} d(mu_best, z_a)/d(mu_a, z_a) - 1 with z_a the weighted
// mid. Zero-count challengers contribute 0; a zero-count best arm with any
// challenger mass makes g = +inf.
inline double anchor(const SpefFamily& f, std::span<const double> means,
                     std::span<const double> counts, int best) {
  const std::size_t k = means.size();
  if (counts.size() != k) throw std::invalid_argument("anchor: size mismatch");
  const auto b = static_cast<std::size_t>(best);
  for (std::size_t a = 0; a < k; ++a)
    if (means[a] > means[b])
      throw std::invalid_argument("anchor: best is not the argmax");
  double total = 0.0;
  for (double c : counts) total += c;
  if (!(total > 0.0)) throw std::invalid_argument("anchor: all counts zero");

  double sum = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    if (a == b || counts[a] == 0.0) continue;
    if (counts[b] == 0.0) return std::numeric_limits<double>::infinity();
    const double gap = means[b] - means[a];
    if (gap < kDegenerateGapTol) {
      const double r = counts[a] / counts[b];
      sum += r * r;
      continue;
    }
    const double z = weighted_mid(counts[b], counts[a], means[b], means[a]);
    sum += kl(f, means[b], z) / kl(f, means[a], z);
  }
  return sum - 1.0;
}

struct IndexReport {
  int best_arm = 0;
  std::vector<double> index;  // index[a] for a != best; index[best] = +inf
  double anchor_value = 0.0;
  double min_index = 0.0;
  int min_index_arm = 0;
};

// Empirical best arm (lowest-id argmax), per-arm empirical indexes, anchor
// value, and the minimum index with its arm. Pure function of its inputs.
inline IndexReport empirical_report(const BanditInstance& instance,
                                    const SamplingState& state) {
  const int k = state.num_arms();
  if (k != instance.num_arms())
    throw std::invalid_argument("empirical_report: arm count mismatch");
  for (std::int64_t c : state.counts)
    if (c == 0) throw std::invalid_argument("empirical_report: unpulled arm");

  std::vector<double> mean(static_cast<std::size_t>(k));
  for (int a = 0; a < k; ++a)
    mean[static_cast<std::size_t>(a)] = state.empirical_mean(a);

  int best = 0;
  for (int a = 1; a < k; ++a)
    if (mean[static_cast<std::size_t>(a)] >
        mean[static_cast<std::size_t>(best)])
      best = a;

  IndexReport rep;
  rep.best_arm = best;
  rep.index.assign(static_cast<std::size_t>(k),
                   std::numeric_limits<double>::infinity());
  const double nb = static_cast<double>(state.counts[static_cast<std::size_t>(best)]);
  const double mb = mean[static_cast<std::size_t>(best)];
  double anchor_sum = 0.0;
  rep.min_index = std::numeric_limits<double>::infinity();
  rep.min_index_arm = -1;
  for (int a = 0; a < k; ++a) {
    if (a == best) continue;
    const auto ai = static_cast<std::size_t>(a);
    const double na = static_cast<double>(state.counts[ai]);
    const double ma = mean[ai];
    const double gap = mb - ma;
    double w;
    if (gap < kDegenerateGapTol) {
      const double r = na / nb;
      anchor_sum += r * r;
      w = 0.0;
    } else {
      const double z = weighted_mid(nb, na, mb, ma);
      const double num = kl(instance.family, mb, z);
      const double den = kl(instance.family, ma, z);
      anchor_sum += num / den;
      w = nb * num + na * den;
    }
    rep.index[ai] = w;
    if (w < rep.min_index) {
      rep.min_index = w;
      rep.min_index_arm = a;
    }
  }
  rep.anchor_value = anchor_sum - 1.0;
  return rep;
}

// The GLLR statistic: the smallest index among the challengers.
inline double stopping_statistic(const IndexReport& report) {
  return report.min_index;
}

}  // namespace bai
