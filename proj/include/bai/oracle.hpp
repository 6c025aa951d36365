#pragma once

// Solver for the optimal proportions omega*, the common index I*, and the
// characteristic time T* = 1/I*, via the constructive characterization of
// the allocation problem: nested monotone bisections (inner N_a, middle N_1,
// outer common index), plus a simplex-grid brute-force cross-check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "bai/anchor_index.hpp"
#include "bai/spef.hpp"

namespace bai {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Monotone bisection for f(x) = target on [lo, hi]; f(lo) and f(hi) must
// bracket the target. Converges unconditionally for monotone f.
template <class F>
double bisect_monotone(F&& f, double lo, double hi, double target,
                       double ftol, int max_iter = 240) {
  double flo = f(lo) - target;
  double fhi = f(hi) - target;
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0))
    throw SolverError("bisect_monotone: bracket does not straddle target");
  double mid = lo;
  for (int it = 0; it < max_iter; ++it) {
    mid = 0.5 * (lo + hi);
    const double fm = f(mid) - target;
    if (std::abs(fm) <= ftol) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-16 * std::max(1.0, std::abs(mid))) break;
  }
  return mid;
}

}  // namespace detail

// Unique na >= 0 with index_value(n1, na, mu1, mua) == target. The index is
// strictly increasing in na from 0 toward n1*d(mu1, mua), so the target is
// reachable iff it lies strictly below that limit.
inline double solve_na_given_n1(const SpefFamily& f, double mu1, double mua,
                                double n1, double target_index) {
  if (target_index < 0.0)
    throw std::domain_error("solve_na_given_n1: negative target");
  if (target_index == 0.0) return 0.0;
  const double limit = n1 * kl(f, mu1, mua);
  if (!(limit > target_index))
    throw std::domain_error(
        "solve_na_given_n1: target at or above n1*d(mu1, mua)");
  double hi = n1 > 0.0 ? n1 : 1.0;
  while (index_value(f, n1, hi, mu1, mua) < target_index) {
    hi *= 2.0;
    if (!(hi < 1e300))
      throw SolverError("solve_na_given_n1: upper bracket overflow");
  }
  const double ftol = 1e-12 * std::max(1.0, target_index);
  return detail::bisect_monotone(
      [&](double na) { return index_value(f, n1, na, mu1, mua); }, 0.0, hi,
      target_index, ftol);
}

struct ConstrainedSolution {
  std::vector<double> allocation;  // size K; arms outside B and the best arm
                                   // not in B keep their fixed values
  double common_index = 0.0;       // NaN when per-arm targets differ
  double n11 = 0.0;
  double n12 = 0.0;
  double residual_ratio_sum = 0.0;
  double residual_index_max = 0.0;
};

// Solves the coupled system: ratio-sum over all challengers equals 1 and
// every arm in B meets its target index, with the allocations of arms
// outside B held fixed. N1 is bracketed below by max(N11, N12).
inline ConstrainedSolution solve_constrained(
    const BanditInstance& instance, const std::vector<int>& active,
    const std::vector<double>& fixed, const std::vector<double>& targets,
    double tol = 1e-10) {
  const int k = instance.num_arms();
  const int best = instance.best_arm();
  if (active.empty())
    throw std::invalid_argument("solve_constrained: empty active set");
  if (targets.size() != active.size())
    throw std::invalid_argument("solve_constrained: targets size mismatch");
  if (static_cast<int>(fixed.size()) != k)
    throw std::invalid_argument("solve_constrained: fixed size mismatch");

  std::vector<bool> in_active(static_cast<std::size_t>(k), false);
  for (int a : active) {
    if (a == best || a < 0 || a >= k)
      throw std::invalid_argument("solve_constrained: bad active arm");
    in_active[static_cast<std::size_t>(a)] = true;
  }
  for (double t : targets)
    if (!(t > 0.0))
      throw std::invalid_argument("solve_constrained: targets must be > 0");

  const SpefFamily& fam = instance.family;
  const double mu_best = instance.means[static_cast<std::size_t>(best)];

  std::vector<int> outside;
  for (int a = 0; a < k; ++a)
    if (a != best && !in_active[static_cast<std::size_t>(a)])
      outside.push_back(a);

  const auto ratio = [&](int a, double n1, double na) {
    const double mua = instance.means[static_cast<std::size_t>(a)];
    if (na == 0.0) return 0.0;
    if (n1 == 0.0) return std::numeric_limits<double>::infinity();
    const double z = weighted_mid(n1, na, mu_best, mua);
    return kl(fam, mu_best, z) / kl(fam, mua, z);
  };

  // N11: ratio-sum over the outside arms alone equals 1 (0 when they carry
  // no mass). The sum decreases from +inf to 0 as N1 grows.
  double outside_mass = 0.0;
  for (int a : outside) outside_mass += fixed[static_cast<std::size_t>(a)];
  double n11 = 0.0;
  if (!outside.empty() && outside_mass > 0.0) {
    const auto outside_sum = [&](double n1) {
      double s = 0.0;
      for (int a : outside)
        s += ratio(a, n1, fixed[static_cast<std::size_t>(a)]);
      return s;
    };
    double lo = outside_mass;
    while (outside_sum(lo) < 1.0) lo *= 0.5;
    double hi = lo;
    while (outside_sum(hi) > 1.0) {
      hi *= 2.0;
      if (!(hi < 1e300)) throw SolverError("solve_constrained: N11 bracket");
    }
    n11 = detail::bisect_monotone(outside_sum, lo, hi, 1.0, tol * 1e-2);
  }

  double n12 = 0.0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double mua =
        instance.means[static_cast<std::size_t>(active[i])];
    n12 = std::max(n12, targets[i] / kl(fam, mu_best, mua));
  }

  // For a given N1, each active arm's allocation is pinned by its target.
  std::vector<double> na_buf(active.size(), 0.0);
  const auto fill_active = [&](double n1) {
    for (std::size_t i = 0; i < active.size(); ++i) {
      const double mua =
          instance.means[static_cast<std::size_t>(active[i])];
      na_buf[i] = solve_na_given_n1(fam, mu_best, mua, n1, targets[i]);
    }
  };
  const auto ratio_sum = [&](double n1) {
    fill_active(n1);
    double s = 0.0;
    for (std::size_t i = 0; i < active.size(); ++i)
      s += ratio(active[i], n1, na_buf[i]);
    for (int a : outside) s += ratio(a, n1, fixed[static_cast<std::size_t>(a)]);
    return s;
  };

  // h(N1) is strictly decreasing on [max(N11,N12), inf), starts >= 1 there
  // and falls to 0, so h = 1 has a unique root.
  const double lo = std::max(n11, n12) * (1.0 + 1e-14) +
                    (std::max(n11, n12) == 0.0 ? 1e-300 : 0.0);
  double n1_star;
  if (ratio_sum(lo) <= 1.0) {
    n1_star = lo;  // root sits at the bracket edge to rounding
  } else {
    double hi = std::max(lo * 2.0, 1.0);
    while (ratio_sum(hi) > 1.0) {
      hi *= 2.0;
      if (!(hi < 1e300)) throw SolverError("solve_constrained: N1 bracket");
    }
    n1_star = detail::bisect_monotone(ratio_sum, lo, hi, 1.0, tol);
  }

  ConstrainedSolution sol;
  sol.allocation = fixed;
  sol.allocation[static_cast<std::size_t>(best)] = n1_star;
  fill_active(n1_star);
  for (std::size_t i = 0; i < active.size(); ++i)
    sol.allocation[static_cast<std::size_t>(active[i])] = na_buf[i];
  sol.n11 = n11;
  sol.n12 = n12;
  sol.common_index = targets[0];
  for (double t : targets)
    if (t != targets[0])
      sol.common_index = std::numeric_limits<double>::quiet_NaN();

  sol.residual_ratio_sum = std::abs(
      bai::anchor(fam, instance.means, sol.allocation, best));
  sol.residual_index_max = 0.0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double w = index_value(
        fam, n1_star, na_buf[i],
        mu_best, instance.means[static_cast<std::size_t>(active[i])]);
    sol.residual_index_max =
        std::max(sol.residual_index_max, std::abs(w - targets[i]));
  }
  return sol;
}

struct OptimalAllocation {
  std::vector<double> omega;
  double common_index = 0.0;  // I*
  double t_star = 0.0;        // 1/I*
  double residual_ratio_sum = 0.0;
  double residual_index_spread = 0.0;
};

namespace detail {

inline std::vector<int> all_challengers(const BanditInstance& instance) {
  std::vector<int> arms;
  const int best = instance.best_arm();
  for (int a = 0; a < instance.num_arms(); ++a)
    if (a != best) arms.push_back(a);
  return arms;
}

inline OptimalAllocation finish_allocation(const BanditInstance& instance,
                                           const ConstrainedSolution& sol,
                                           double index_at_mass) {
  const int k = instance.num_arms();
  const int best = instance.best_arm();
  double mass = 0.0;
  for (double n : sol.allocation) mass += n;

  OptimalAllocation out;
  out.omega.resize(static_cast<std::size_t>(k));
  for (int a = 0; a < k; ++a)
    out.omega[static_cast<std::size_t>(a)] =
        sol.allocation[static_cast<std::size_t>(a)] / mass;
  // The system is positively homogeneous, so dividing by the total mass
  // rescales the common index by the same factor.
  out.common_index = index_at_mass / mass;
  out.t_star = 1.0 / out.common_index;

  out.residual_ratio_sum =
      std::abs(bai::anchor(instance.family, instance.means, out.omega, best));
  double wmin = std::numeric_limits<double>::infinity();
  double wmax = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a) {
    if (a == best) continue;
    const double w = index_value(instance.family,
                                 out.omega[static_cast<std::size_t>(best)],
                                 out.omega[static_cast<std::size_t>(a)],
                                 instance.means[static_cast<std::size_t>(best)],
                                 instance.means[static_cast<std::size_t>(a)]);
    wmin = std::min(wmin, w);
    wmax = std::max(wmax, w);
  }
  out.residual_index_spread = wmax - wmin;
  return out;
}

}  // namespace detail

// Optimal proportions over the full simplex: outer bisection on the common
// index target, using that total solved mass is strictly increasing in it;
// inner solve_constrained with every challenger active.
//
// initial_index_guess only seeds the outer bracket search; any positive
// value converges to the same answer.
inline OptimalAllocation solve_optimal(const BanditInstance& instance,
                                       double tol = 1e-10,
                                       double initial_index_guess = 0.0) {
  const std::vector<int> arms = detail::all_challengers(instance);
  const std::vector<double> fixed(static_cast<std::size_t>(instance.num_arms()),
                                  0.0);
  const auto mass_at = [&](double index) {
    const std::vector<double> targets(arms.size(), index);
    const ConstrainedSolution sol =
        solve_constrained(instance, arms, fixed, targets, tol * 1e-2);
    double mass = 0.0;
    for (double n : sol.allocation) mass += n;
    return mass;
  };

  double hi = initial_index_guess > 0.0 ? initial_index_guess : 1.0;
  while (mass_at(hi) < 1.0) {
    hi *= 2.0;
    if (!(hi < 1e300)) throw SolverError("solve_optimal: index bracket");
  }
  double lo = hi;
  while (mass_at(lo) > 1.0) lo *= 0.5;
  const double index = detail::bisect_monotone(mass_at, lo, hi, 1.0, tol);

  const std::vector<double> targets(arms.size(), index);
  const ConstrainedSolution sol =
      solve_constrained(instance, arms, fixed, targets, tol * 1e-2);
  return detail::finish_allocation(instance, sol, index);
}

// Variant with the best arm's proportion pinned to beta: solves the equal
// index system under N1 = beta * total mass instead of ratio-sum = 1.
inline OptimalAllocation solve_optimal_beta(const BanditInstance& instance,
                                            double beta, double tol = 1e-10) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::domain_error("solve_optimal_beta: beta outside (0,1)");
  const int best = instance.best_arm();
  const SpefFamily& fam = instance.family;
  const double mu_best = instance.means[static_cast<std::size_t>(best)];
  const std::vector<int> arms = detail::all_challengers(instance);

  // For a target index I, find N1 with beta-anchor zero; the anchor
  // beta - N1/total is strictly decreasing in N1 past N12.
  std::vector<double> na_buf(arms.size(), 0.0);
  const auto solve_at = [&](double index) {
    double n12 = 0.0;
    for (std::size_t i = 0; i < arms.size(); ++i)
      n12 = std::max(n12, index / kl(fam, mu_best,
                                     instance.means[static_cast<std::size_t>(
                                         arms[i])]));
    const auto fill = [&](double n1) {
      for (std::size_t i = 0; i < arms.size(); ++i)
        na_buf[i] = solve_na_given_n1(
            fam, mu_best, instance.means[static_cast<std::size_t>(arms[i])],
            n1, index);
    };
    const auto beta_anchor = [&](double n1) {
      fill(n1);
      double total = n1;
      for (double n : na_buf) total += n;
      return beta - n1 / total;
    };
    double lo = n12 * (1.0 + 1e-14) + (n12 == 0.0 ? 1e-300 : 0.0);
    double hi = std::max(lo * 2.0, 1.0);
    while (beta_anchor(hi) > 0.0) {
      hi *= 2.0;
      if (!(hi < 1e300)) throw SolverError("solve_optimal_beta: N1 bracket");
    }
    const double n1 =
        detail::bisect_monotone(beta_anchor, lo, hi, 0.0, tol * 1e-2);
    fill(n1);
    std::vector<double> alloc(static_cast<std::size_t>(instance.num_arms()),
                              0.0);
    alloc[static_cast<std::size_t>(best)] = n1;
    for (std::size_t i = 0; i < arms.size(); ++i)
      alloc[static_cast<std::size_t>(arms[i])] = na_buf[i];
    return alloc;
  };

  const auto mass_at = [&](double index) {
    const auto alloc = solve_at(index);
    double mass = 0.0;
    for (double n : alloc) mass += n;
    return mass;
  };
  double hi = 1.0;
  while (mass_at(hi) < 1.0) {
    hi *= 2.0;
    if (!(hi < 1e300)) throw SolverError("solve_optimal_beta: index bracket");
  }
  double lo = hi;
  while (mass_at(lo) > 1.0) lo *= 0.5;
  const double index = detail::bisect_monotone(mass_at, lo, hi, 1.0, tol);

  const auto alloc = solve_at(index);
  double mass = 0.0;
  for (double n : alloc) mass += n;
  OptimalAllocation out;
  out.omega.resize(alloc.size());
  for (std::size_t a = 0; a < alloc.size(); ++a) out.omega[a] = alloc[a] / mass;
  out.common_index = index / mass;
  out.t_star = 1.0 / out.common_index;
  out.residual_ratio_sum = std::abs(
      beta - out.omega[static_cast<std::size_t>(best)]);
  double wmin = std::numeric_limits<double>::infinity();
  double wmax = -std::numeric_limits<double>::infinity();
  for (int a : arms) {
    const double w = index_value(fam,
                                 out.omega[static_cast<std::size_t>(best)],
                                 out.omega[static_cast<std::size_t>(a)],
                                 mu_best,
                                 instance.means[static_cast<std::size_t>(a)]);
    wmin = std::min(wmin, w);
    wmax = std::max(wmax, w);
  }
  out.residual_index_spread = wmax - wmin;
  return out;
}

// Exhaustive search over the simplex lattice with spacing 1/resolution for
// the maximizer of the minimum index. Combinatorial; guarded by a budget on
// the number of lattice points.
inline std::pair<std::vector<double>, double> brute_force_tstar(
    const BanditInstance& instance, int resolution,
    std::uint64_t max_points = 200'000'000ULL) {
  if (resolution < 10)
    throw std::domain_error("brute_force_tstar: resolution < 10");
  const int k = instance.num_arms();
  // C(resolution + k - 1, k - 1) lattice points.
  double points = 1.0;
  for (int i = 1; i < k; ++i)
    points *= static_cast<double>(resolution + i) / static_cast<double>(i);
  if (points > static_cast<double>(max_points))
    throw std::domain_error("brute_force_tstar: lattice beyond budget");

  const int best = instance.best_arm();
  const SpefFamily& fam = instance.family;
  const double mu_best = instance.means[static_cast<std::size_t>(best)];
  const double step = 1.0 / static_cast<double>(resolution);

  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  std::vector<double> best_omega(static_cast<std::size_t>(k), 0.0);
  double best_value = -1.0;

  // Depth-first over compositions of `resolution` into k parts.
  const auto evaluate = [&]() {
    const double n1 =
        static_cast<double>(counts[static_cast<std::size_t>(best)]) * step;
    double wmin = 0.0;
    if (n1 > 0.0) {
      wmin = std::numeric_limits<double>::infinity();
      for (int a = 0; a < k && wmin > best_value; ++a) {
        if (a == best) continue;
        const double na =
            static_cast<double>(counts[static_cast<std::size_t>(a)]) * step;
        wmin = std::min(
            wmin, index_value(fam, n1, na, mu_best,
                              instance.means[static_cast<std::size_t>(a)]));
      }
    }
    if (wmin > best_value) {
      best_value = wmin;
      for (int a = 0; a < k; ++a)
        best_omega[static_cast<std::size_t>(a)] =
            static_cast<double>(counts[static_cast<std::size_t>(a)]) * step;
    }
  };
  const auto rec = [&](auto&& self, int arm, int remaining) -> void {
    if (arm == k - 1) {
      counts[static_cast<std::size_t>(arm)] = remaining;
      evaluate();
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[static_cast<std::size_t>(arm)] = c;
      self(self, arm + 1, remaining - c);
    }
  };
  rec(rec, 0, resolution);

  if (!(best_value > 0.0))
    throw SolverError("brute_force_tstar: degenerate lattice optimum");
  return {best_omega, 1.0 / best_value};
}

}  // namespace bai
