#pragma once

// Integrator for the idealized continuous-allocation dynamics: regimes keyed
// to the sign of the anchor, closed-form right-hand sides, event detection
// (anchor crossing zero, index catch-up, active set saturating), and the
// fixed-fraction variant of the dynamics.
//
// Time is the total allocated mass N. In the anchored regime the state lives
// on the manifold {anchor = 0, indexes in B equal}; every accepted step is
// re-projected onto it through the constrained solver, so drift cannot
// accumulate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bai/anchor_index.hpp"
#include "bai/oracle.hpp"
#include "bai/spef.hpp"

namespace bai {

enum class Regime { g_pos, g_neg, g_zero, linear };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::g_pos:
      return "g_pos";
    case Regime::g_neg:
      return "g_neg";
    case Regime::g_zero:
      return "g_zero";
    case Regime::linear:
      return "linear";
  }
  return "?";
}

struct FluidState {
  std::vector<double> alloc;
  double total = 0.0;
  Regime regime = Regime::g_pos;
  std::vector<int> active_set;  // B, sorted; empty in g_pos
  double common_index = std::numeric_limits<double>::quiet_NaN();  // I_B
  double anchor_value = 0.0;
};

enum class FluidEventKind { anchor_zero, index_catch_up, set_saturated };

inline const char* event_name(FluidEventKind k) {
  switch (k) {
    case FluidEventKind::anchor_zero:
      return "anchor_zero";
    case FluidEventKind::index_catch_up:
      return "index_catch_up";
    case FluidEventKind::set_saturated:
      return "set_saturated";
  }
  return "?";
}

struct FluidEvent {
  double total = 0.0;
  FluidEventKind kind;
  std::vector<int> arms;
};

struct FluidTrajectory {
  std::vector<FluidState> samples;
  std::vector<FluidEvent> events;
};

struct FluidControls {
  double event_tol = 1e-9;     // on the event function value
  double max_step_rel = 1e-3;  // max step = max_step_rel * N
  double sample_dn = 0.0;      // 0: (horizon - N0) / 1024
};

namespace fluid_detail {

struct Geometry {
  // per challenger arm: d1a = d(mu1, x_{1,a}), daa = d(mua, x_{1,a}),
  // the index, and the anchor-derivative helpers f and h
  std::vector<double> d1a, daa, index, f, h;
  int best;
};

inline Geometry geometry(const BanditInstance& inst,
                         const std::vector<double>& alloc) {
  const int k = inst.num_arms();
  const int best = inst.best_arm();
  const double n1 = alloc[static_cast<std::size_t>(best)];
  const double mu1 = inst.means[static_cast<std::size_t>(best)];
  Geometry g;
  g.best = best;
  g.d1a.assign(static_cast<std::size_t>(k), 0.0);
  g.daa.assign(static_cast<std::size_t>(k), 0.0);
  g.index.assign(static_cast<std::size_t>(k), 0.0);
  g.f.assign(static_cast<std::size_t>(k), 0.0);
  g.h.assign(static_cast<std::size_t>(k), 0.0);
  for (int a = 0; a < k; ++a) {
    if (a == best) continue;
    const auto ai = static_cast<std::size_t>(a);
    const double na = alloc[ai];
    const double mua = inst.means[ai];
    if (na == 0.0 && n1 == 0.0) continue;
    const double delta = mu1 - mua;
    const double x = weighted_mid(n1, na, mu1, mua);
    const double d1 = kl(inst.family, mu1, x);
    const double da = kl(inst.family, mua, x);
    g.d1a[ai] = d1;
    g.daa[ai] = da;
    g.index[ai] = n1 * d1 + na * da;
    if (na > 0.0 && n1 > 0.0) {
      // f = -(d/dx)(d(mu1,x)/d(mua,x)); strictly positive inside the gap.
      const double f = (d1 / da) * (kl_d2(inst.family, mua, x) / da -
                                    kl_d2(inst.family, mu1, x) / d1);
      g.f[ai] = f;
      const double s = n1 + na;
      g.h[ai] = f * n1 * n1 * delta / (s * s);
    }
  }
  return g;
}

inline double anchor_of(const BanditInstance& inst,
                        const std::vector<double>& alloc) {
  return anchor(inst.family, inst.means, alloc, inst.best_arm());
}

// Allocation derivatives for the g_neg / g_zero regimes, evaluated at an
// arbitrary allocation (RK4 stages sit slightly off the manifold).
inline std::vector<double> regime_rhs(const BanditInstance& inst,
                                      Regime regime,
                                      const std::vector<int>& active_set,
                                      const std::vector<double>& alloc) {
  const int k = inst.num_arms();
  const int best = inst.best_arm();
  const Geometry geom = geometry(inst, alloc);
  std::vector<double> deriv(static_cast<std::size_t>(k), 0.0);
  if (regime == Regime::g_neg) {
    double dbinv = 0.0;
    for (int a : active_set)
      dbinv += 1.0 / geom.daa[static_cast<std::size_t>(a)];
    for (int a : active_set)
      deriv[static_cast<std::size_t>(a)] =
          1.0 / (geom.daa[static_cast<std::size_t>(a)] * dbinv);
    return deriv;
  }
  const double n1 = alloc[static_cast<std::size_t>(best)];
  double hB = 0.0, mass_b = 0.0, dbinv = 0.0;
  for (int a : active_set) {
    const auto ai = static_cast<std::size_t>(a);
    hB += geom.h[ai] / geom.daa[ai];
    mass_b += alloc[ai];
    dbinv += 1.0 / geom.daa[ai];
  }
  double hN = 0.0;
  std::vector<bool> active(static_cast<std::size_t>(k), false);
  for (int a : active_set) active[static_cast<std::size_t>(a)] = true;
  for (int a = 0; a < k; ++a) {
    if (a == best || active[static_cast<std::size_t>(a)]) continue;
    hN += geom.h[static_cast<std::size_t>(a)] *
          alloc[static_cast<std::size_t>(a)];
  }
  const double denom = (n1 + mass_b) * hB + hN * dbinv;
  deriv[static_cast<std::size_t>(best)] = n1 * hB / denom;
  for (int a : active_set) {
    const auto ai = static_cast<std::size_t>(a);
    deriv[ai] = (alloc[ai] * hB + hN / geom.daa[ai]) / denom;
  }
  return deriv;
}

}  // namespace fluid_detail

// Classify an allocation into its regime: sign of the anchor within tol,
// B = set of indexes within tol of the minimum, linear once B saturates.
inline FluidState classify_fluid_state(const BanditInstance& inst,
                                       const std::vector<double>& alloc,
                                       double event_tol = 1e-9) {
  const int k = inst.num_arms();
  if (static_cast<int>(alloc.size()) != k)
    throw std::invalid_argument("classify_fluid_state: size mismatch");
  double total = 0.0;
  for (double n : alloc) {
    if (n < 0.0)
      throw std::invalid_argument("classify_fluid_state: negative allocation");
    total += n;
  }
  if (!(total > 0.0))
    throw std::invalid_argument("classify_fluid_state: zero total");

  FluidState st;
  st.alloc = alloc;
  st.total = total;
  st.anchor_value = fluid_detail::anchor_of(inst, alloc);
  if (st.anchor_value > event_tol) {
    st.regime = Regime::g_pos;
    return st;
  }

  const auto geom = fluid_detail::geometry(inst, alloc);
  const int best = inst.best_arm();
  double imin = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a)
    if (a != best)
      imin = std::min(imin, geom.index[static_cast<std::size_t>(a)]);
  for (int a = 0; a < k; ++a) {
    if (a == best) continue;
    if (geom.index[static_cast<std::size_t>(a)] <=
        imin + event_tol * std::max(1.0, imin))
      st.active_set.push_back(a);
  }
  st.common_index = imin;
  if (std::abs(st.anchor_value) <= event_tol) {
    st.regime = static_cast<int>(st.active_set.size()) == k - 1
                    ? Regime::linear
                    : Regime::g_zero;
  } else {
    st.regime = Regime::g_neg;
  }
  return st;
}

namespace fluid_detail {

inline void require_consistent(const BanditInstance& inst,
                               const FluidState& st, double tol = 1e-6) {
  const int k = inst.num_arms();
  if (static_cast<int>(st.alloc.size()) != k)
    throw std::invalid_argument("fluid state: size mismatch");
  double total = 0.0;
  for (double n : st.alloc) total += n;
  if (std::abs(total - st.total) > 1e-9 * std::max(1.0, st.total))
    throw std::invalid_argument("fluid state: total out of sync");
  const double g = anchor_of(inst, st.alloc);
  switch (st.regime) {
    case Regime::g_pos:
      if (!(g > 0.0))
        throw std::invalid_argument("fluid state: g_pos with g <= 0");
      return;
    case Regime::g_neg:
      if (!(g < 0.0))
        throw std::invalid_argument("fluid state: g_neg with g >= 0");
      break;
    case Regime::g_zero:
    case Regime::linear:
      if (std::abs(g) > tol)
        throw std::invalid_argument(
            "fluid state: anchored regime with g far from 0");
      break;
  }
  if (st.active_set.empty())
    throw std::invalid_argument("fluid state: empty active set");
  const auto geom = geometry(inst, st.alloc);
  double imin = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a)
    if (a != geom.best)
      imin = std::min(imin, geom.index[static_cast<std::size_t>(a)]);
  for (int a : st.active_set) {
    if (a == geom.best || a < 0 || a >= k)
      throw std::invalid_argument("fluid state: bad active arm");
    if (std::abs(geom.index[static_cast<std::size_t>(a)] - imin) >
        tol * std::max(1.0, imin))
      throw std::invalid_argument("fluid state: active indexes not equal");
  }
}

}  // namespace fluid_detail

// Allocation derivatives N_a'(N); they sum to 1 in every regime.
inline std::vector<double> fluid_rhs(const BanditInstance& inst,
                                     const FluidState& st) {
  fluid_detail::require_consistent(inst, st);
  const int k = inst.num_arms();
  const int best = inst.best_arm();
  std::vector<double> deriv(static_cast<std::size_t>(k), 0.0);
  switch (st.regime) {
    case Regime::g_pos:
      deriv[static_cast<std::size_t>(best)] = 1.0;
      return deriv;
    case Regime::g_neg:
    case Regime::g_zero:
      return fluid_detail::regime_rhs(inst, st.regime, st.active_set,
                                      st.alloc);
    case Regime::linear:
      return solve_optimal(inst).omega;
  }
  return deriv;
}

struct IndexRhs {
  double common = std::numeric_limits<double>::quiet_NaN();  // I_B'
  std::vector<double> outside;  // per-arm I_a' outside B; NaN elsewhere
};

// Derivatives of the common index and of each outside index.
inline IndexRhs index_rhs(const BanditInstance& inst, const FluidState& st) {
  const int k = inst.num_arms();
  const int best = inst.best_arm();
  const auto geom = fluid_detail::geometry(inst, st.alloc);
  const auto deriv = fluid_rhs(inst, st);
  IndexRhs out;
  out.outside.assign(static_cast<std::size_t>(k),
                     std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> active(static_cast<std::size_t>(k), false);
  for (int a : st.active_set) active[static_cast<std::size_t>(a)] = true;

  if (st.regime == Regime::g_pos) {
    for (int a = 0; a < k; ++a)
      if (a != best)
        out.outside[static_cast<std::size_t>(a)] =
            geom.d1a[static_cast<std::size_t>(a)];
    return out;
  }
  // I' along any active arm: N1' d1a + Na' daa (the x-derivative terms
  // cancel at the weighted mid).
  const int a0 = st.active_set.front();
  const auto a0i = static_cast<std::size_t>(a0);
  const double n1p = deriv[static_cast<std::size_t>(best)];
  out.common = n1p * geom.d1a[a0i] + deriv[a0i] * geom.daa[a0i];
  for (int a = 0; a < k; ++a)
    if (a != best && !active[static_cast<std::size_t>(a)])
      out.outside[static_cast<std::size_t>(a)] =
          n1p * geom.d1a[static_cast<std::size_t>(a)];
  return out;
}

// Derivatives for the fixed-fraction dynamics: the best arm is fed at a
// constant rate beta while the active set shares the rest keeping indexes
// equal.
struct BetaFluidRhs {
  std::vector<double> alloc_deriv;
  double index_deriv = 0.0;
};

inline BetaFluidRhs beta_fluid_rhs(const BanditInstance& inst,
                                   const FluidState& st, double beta) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::domain_error("beta_fluid_rhs: beta outside (0,1)");
  const int k = inst.num_arms();
  const int best = inst.best_arm();
  const double n1 = st.alloc[static_cast<std::size_t>(best)];
  if (std::abs(n1 - beta * st.total) > 1e-9 * std::max(1.0, st.total))
    throw std::invalid_argument("beta_fluid_rhs: N1 != beta * N");
  if (st.active_set.empty())
    throw std::invalid_argument("beta_fluid_rhs: empty active set");

  const auto geom = fluid_detail::geometry(inst, st.alloc);
  double dbinv = 0.0, mass_b = 0.0;
  for (int a : st.active_set) {
    dbinv += 1.0 / geom.daa[static_cast<std::size_t>(a)];
    mass_b += st.alloc[static_cast<std::size_t>(a)];
  }
  const double d_b = 1.0 / dbinv;
  const double n = st.total;

  BetaFluidRhs out;
  out.alloc_deriv.assign(static_cast<std::size_t>(k), 0.0);
  out.alloc_deriv[static_cast<std::size_t>(best)] = beta;
  for (int a : st.active_set) {
    const auto ai = static_cast<std::size_t>(a);
    out.alloc_deriv[ai] =
        (((1.0 - beta) * n - mass_b) * d_b + st.alloc[ai] * geom.daa[ai]) /
        (n * geom.daa[ai]);
  }
  out.index_deriv = (1.0 - beta - mass_b / n) * d_b + st.common_index / n;
  return out;
}

namespace fluid_detail {

// One regime step of size dn from `st` (no event handling). The g_neg and
// g_zero steps run an RK4 predictor and then re-project onto the manifold;
// g_pos and linear steps are exact.
inline FluidState advance(const BanditInstance& inst, const FluidState& st,
                          double dn, const std::vector<double>* omega_linear) {
  const int best = inst.best_arm();
  FluidState out = st;
  switch (st.regime) {
    case Regime::g_pos: {
      out.alloc[static_cast<std::size_t>(best)] += dn;
      out.total += dn;
      out.anchor_value = anchor_of(inst, out.alloc);
      return out;
    }
    case Regime::linear: {
      const double n = st.total + dn;
      for (std::size_t a = 0; a < out.alloc.size(); ++a)
        out.alloc[a] = (*omega_linear)[a] * n;
      out.total = n;
      out.anchor_value = anchor_of(inst, out.alloc);
      const auto geom = geometry(inst, out.alloc);
      out.common_index =
          geom.index[static_cast<std::size_t>(st.active_set.front())];
      return out;
    }
    case Regime::g_neg:
    case Regime::g_zero: {
      const auto axpy = [](const std::vector<double>& x, double c,
                           const std::vector<double>& d) {
        std::vector<double> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * d[i];
        return y;
      };
      const auto rhs = [&](const std::vector<double>& alloc) {
        return regime_rhs(inst, st.regime, st.active_set, alloc);
      };
      const auto k1 = rhs(st.alloc);
      const auto k2 = rhs(axpy(st.alloc, 0.5 * dn, k1));
      const auto k3 = rhs(axpy(st.alloc, 0.5 * dn, k2));
      const auto k4 = rhs(axpy(st.alloc, dn, k3));
      std::vector<double> alloc = st.alloc;
      for (std::size_t i = 0; i < alloc.size(); ++i)
        alloc[i] += dn / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

      // Project back onto the manifold at the predicted common index.
      const auto geom = geometry(inst, alloc);
      double target = 0.0;
      for (int a : st.active_set)
        target += geom.index[static_cast<std::size_t>(a)];
      target /= static_cast<double>(st.active_set.size());

      const double mu_best = inst.means[static_cast<std::size_t>(best)];
      if (st.regime == Regime::g_neg) {
        const double n1 = st.alloc[static_cast<std::size_t>(best)];
        alloc = st.alloc;
        for (int a : st.active_set) {
          const auto ai = static_cast<std::size_t>(a);
          alloc[ai] = solve_na_given_n1(inst.family, mu_best,
                                        inst.means[ai], n1, target);
        }
      } else {
        std::vector<double> targets(st.active_set.size(), target);
        alloc = solve_constrained(inst, st.active_set, st.alloc, targets)
                    .allocation;
      }
      out.alloc = alloc;
      out.total = 0.0;
      for (double v : alloc) out.total += v;
      out.anchor_value = anchor_of(inst, out.alloc);
      out.common_index = target;
      return out;
    }
  }
  return out;
}

inline double min_outside_index(const BanditInstance& inst,
                                const FluidState& st, int* arg = nullptr) {
  const auto geom = geometry(inst, st.alloc);
  const int k = inst.num_arms();
  std::vector<bool> active(static_cast<std::size_t>(k), false);
  for (int a : st.active_set) active[static_cast<std::size_t>(a)] = true;
  double m = std::numeric_limits<double>::infinity();
  int which = -1;
  for (int a = 0; a < k; ++a) {
    if (a == geom.best || active[static_cast<std::size_t>(a)]) continue;
    if (geom.index[static_cast<std::size_t>(a)] < m) {
      m = geom.index[static_cast<std::size_t>(a)];
      which = a;
    }
  }
  if (arg) *arg = which;
  return m;
}

}  // namespace fluid_detail

// Integrate the dynamics from an initial allocation up to total mass
// `horizon`. Events are located by bisection on the step and recorded; the
// trajectory is sampled roughly every controls.sample_dn plus at events.
inline FluidTrajectory integrate(const BanditInstance& inst,
                                 const std::vector<double>& initial,
                                 double horizon,
                                 FluidControls controls = {}) {
  FluidState st = classify_fluid_state(inst, initial, controls.event_tol);
  if (!(horizon > st.total))
    throw std::invalid_argument("integrate: horizon at or below start");
  const int k = inst.num_arms();
  const double sample_dn = controls.sample_dn > 0.0
                               ? controls.sample_dn
                               : (horizon - st.total) / 1024.0;

  std::optional<std::vector<double>> omega_star;
  const auto omega_ptr = [&]() -> const std::vector<double>* {
    if (!omega_star) omega_star = solve_optimal(inst).omega;
    return &*omega_star;
  };

  FluidTrajectory traj;
  traj.samples.push_back(st);
  double next_sample = st.total + sample_dn;

  // Event function: negative once the pending event has been crossed.
  const auto event_gap = [&](const FluidState& s) -> double {
    switch (s.regime) {
      case Regime::g_pos:
        return s.anchor_value;  // crossing: g falls to 0
      case Regime::g_neg: {
        const double gap_i =
            fluid_detail::min_outside_index(inst, s) - s.common_index;
        return std::min(-s.anchor_value, gap_i);
      }
      case Regime::g_zero:
        return fluid_detail::min_outside_index(inst, s) - s.common_index;
      case Regime::linear:
        return std::numeric_limits<double>::infinity();
    }
    return 0.0;
  };

  const auto on_event = [&](FluidState& s) {
    // Anchor reaching zero takes precedence; a simultaneous catch-up is
    // absorbed by the reclassification and logged at the same N.
    if (s.regime == Regime::g_pos ||
        (s.regime == Regime::g_neg &&
         std::abs(s.anchor_value) <= controls.event_tol)) {
      const auto old_set = s.active_set;
      traj.events.push_back({s.total, FluidEventKind::anchor_zero, {}});
      s = classify_fluid_state(inst, s.alloc, controls.event_tol);
      if (static_cast<int>(s.active_set.size()) > static_cast<int>(old_set.size()) &&
          !old_set.empty()) {
        std::vector<int> joined;
        for (int a : s.active_set)
          if (std::find(old_set.begin(), old_set.end(), a) == old_set.end())
            joined.push_back(a);
        traj.events.push_back(
            {s.total, FluidEventKind::index_catch_up, joined});
      }
      if (s.regime == Regime::linear)
        traj.events.push_back(
            {s.total, FluidEventKind::set_saturated, s.active_set});
      return;
    }
    // Index catch-up: absorb every arm within tolerance of I_B.
    const auto geom = fluid_detail::geometry(inst, s.alloc);
    std::vector<bool> active(static_cast<std::size_t>(k), false);
    for (int a : s.active_set) active[static_cast<std::size_t>(a)] = true;
    std::vector<int> joined;
    for (int a = 0; a < k; ++a) {
      if (a == geom.best || active[static_cast<std::size_t>(a)]) continue;
      if (geom.index[static_cast<std::size_t>(a)] - s.common_index <=
          4.0 * controls.event_tol * std::max(1.0, s.common_index))
        joined.push_back(a);
    }
    if (joined.empty()) {
      int arg = -1;
      fluid_detail::min_outside_index(inst, s, &arg);
      joined.push_back(arg);
    }
    for (int a : joined) s.active_set.push_back(a);
    std::sort(s.active_set.begin(), s.active_set.end());
    traj.events.push_back({s.total, FluidEventKind::index_catch_up, joined});
    if (static_cast<int>(s.active_set.size()) == k - 1 &&
        std::abs(s.anchor_value) <= controls.event_tol) {
      s.regime = Regime::linear;
      traj.events.push_back(
          {s.total, FluidEventKind::set_saturated, s.active_set});
    }
  };

  int guard = 0;
  while (st.total < horizon * (1.0 - 1e-12)) {
    if (++guard > 20'000'000)
      throw SolverError("integrate: step budget exhausted");
    const std::vector<double>* omega =
        st.regime == Regime::linear ? omega_ptr() : nullptr;
    double dn = std::min(controls.max_step_rel * std::max(st.total, 1.0),
                         horizon - st.total);
    dn = std::min(dn, next_sample - st.total);

    FluidState trial;
    bool stepped = false;
    for (int attempt = 0; attempt < 80 && !stepped; ++attempt) {
      try {
        trial = fluid_detail::advance(inst, st, dn, omega);
        stepped = true;
      } catch (const std::domain_error&) {
        dn *= 0.5;  // stepped across an event into infeasible territory
        if (dn < 1e-14 * std::max(1.0, st.total))
          throw SolverError("integrate: step size underflow at N = " +
                            std::to_string(st.total));
      }
    }
    if (!stepped)
      throw SolverError("integrate: step size underflow at N = " +
                        std::to_string(st.total));

    if (event_gap(trial) < 0.0) {
      // Bisect the step down to the event location.
      double lo = 0.0, hi = dn;
      FluidState at_hi = trial;
      for (int it = 0; it < 200; ++it) {
        if (std::abs(event_gap(at_hi)) <= controls.event_tol ||
            hi - lo <= 1e-10 * std::max(1.0, st.total))
          break;
        const double mid = 0.5 * (lo + hi);
        FluidState at_mid = fluid_detail::advance(inst, st, mid, omega);
        if (event_gap(at_mid) < 0.0) {
          hi = mid;
          at_hi = at_mid;
        } else {
          lo = mid;
        }
      }
      st = at_hi;
      on_event(st);
      traj.samples.push_back(st);
      while (next_sample <= st.total) next_sample += sample_dn;
      continue;
    }

    st = trial;
    if (st.total >= next_sample * (1.0 - 1e-12)) {
      traj.samples.push_back(st);
      while (next_sample <= st.total * (1.0 + 1e-12))
        next_sample += sample_dn;
    }
  }
  if (traj.samples.back().total < st.total) traj.samples.push_back(st);
  return traj;
}

}  // namespace bai
