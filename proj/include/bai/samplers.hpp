#pragma once

// Sampling policies (anchored top-two, its improved-challenger variant, and
// the coin-based top-two baselines), forced exploration, the GLLR stopping
// rule with configurable thresholds, and the run loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bai/anchor_index.hpp"
#include "bai/parallel.hpp"
#include "bai/rng.hpp"
#include "bai/spef.hpp"

namespace bai {

enum class PolicyKind { at2, iat2, beta_eb };

struct Policy {
  PolicyKind kind = PolicyKind::at2;
  double alpha = 0.5;     // forced-exploration exponent, in (0,1)
  double beta = 0.5;      // beta_eb only: probability of playing the leader
  bool improved = false;  // beta_eb only: +log N_a challenger penalty

  static Policy at2(double alpha = 0.5) { return make(PolicyKind::at2, alpha, 0.5, false); }
  static Policy iat2(double alpha = 0.5) { return make(PolicyKind::iat2, alpha, 0.5, false); }
  static Policy beta_eb(double beta, bool improved = false, double alpha = 0.5) {
    return make(PolicyKind::beta_eb, alpha, beta, improved);
  }

  bool needs_coin() const { return kind == PolicyKind::beta_eb; }

  bool improved_challenger() const {
    return kind == PolicyKind::iat2 || (kind == PolicyKind::beta_eb && improved);
  }

  std::string name() const {
    switch (kind) {
      case PolicyKind::at2:
        return "at2";
      case PolicyKind::iat2:
        return "iat2";
      case PolicyKind::beta_eb: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g-eb-%s", beta,
                      improved ? "itcb" : "tcb");
        return buf;
      }
    }
    return "?";
  }

 private:
  static Policy make(PolicyKind k, double alpha, double beta, bool improved) {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::domain_error("policy: alpha outside (0,1)");
    if (!(beta > 0.0 && beta < 1.0))
      throw std::domain_error("policy: beta outside (0,1)");
    Policy p;
    p.kind = k;
    p.alpha = alpha;
    p.beta = beta;
    p.improved = improved;
    return p;
  }
};

struct ThresholdStyle {
  enum Kind { gk16, kk21 } kind = gk16;
  int num_arms = 2;  // kk21 only

  static ThresholdStyle make_gk16() { return {gk16, 2}; }
  static ThresholdStyle make_kk21(int num_arms) {
    if (num_arms < 2) throw std::domain_error("kk21 threshold: K < 2");
    return {kk21, num_arms};
  }

  std::string name() const { return kind == gk16 ? "gk16" : "kk21"; }
};

inline double threshold(const ThresholdStyle& style, std::int64_t n,
                        double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::domain_error("threshold: delta outside (0,1)");
  if (n < 1) throw std::domain_error("threshold: N < 1");
  const double nd = static_cast<double>(n);
  switch (style.kind) {
    case ThresholdStyle::gk16:
      return std::log((1.0 + std::log(nd)) / delta);
    case ThresholdStyle::kk21: {
      const double lk = std::log(static_cast<double>(style.num_arms - 1) / delta);
      return lk + 6.0 * std::log(std::log(nd / 2.0) + 1.0) +
             8.0 * std::log(1.0 + 2.0 * lk);
    }
  }
  return 0.0;
}

// Arm choice at iteration N = state.total_pulls + 1. Forced exploration
// first; then the policy's anchor/coin decision between the empirical best
// and the minimum-index challenger.
inline int choose_arm(const BanditInstance& instance,
                      const SamplingState& state, const Policy& policy,
                      std::optional<double> coin = std::nullopt) {
  const int k = state.num_arms();
  const auto n = static_cast<double>(state.total_pulls + 1);
  const double floor_count = std::pow(n, policy.alpha);

  int least = 0;
  bool under_explored = false;
  for (int a = 0; a < k; ++a) {
    const auto ai = static_cast<std::size_t>(a);
    if (static_cast<double>(state.counts[ai]) < floor_count)
      under_explored = true;
    if (state.counts[ai] < state.counts[static_cast<std::size_t>(least)])
      least = a;
  }
  if (under_explored) return least;

  const IndexReport rep = empirical_report(instance, state);
  bool play_best;
  if (policy.kind == PolicyKind::beta_eb) {
    if (!coin)
      throw std::invalid_argument("choose_arm: beta_eb policy needs a coin");
    play_best = *coin < policy.beta;
  } else {
    play_best = rep.anchor_value > 0.0;
  }
  if (play_best) return rep.best_arm;

  if (!policy.improved_challenger()) return rep.min_index_arm;
  int challenger = -1;
  double best_score = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a) {
    if (a == rep.best_arm) continue;
    const auto ai = static_cast<std::size_t>(a);
    const double score =
        rep.index[ai] + std::log(static_cast<double>(state.counts[ai]));
    if (score < best_score) {
      best_score = score;
      challenger = a;
    }
  }
  return challenger;
}

struct RunOutcome {
  std::int64_t tau = 0;
  int recommended = -1;
  bool correct = false;
  std::vector<std::int64_t> final_counts;
  bool hit_cap = false;
  double wall_time_us = 0.0;
};

struct RunStreams {
  RngStream rewards;
  RngStream coins;

  static RunStreams from_seed(std::uint64_t master_seed, std::uint64_t run_id) {
    return {RngStream::substream(master_seed, run_id, StreamRole::rewards),
            RngStream::substream(master_seed, run_id, StreamRole::coins)};
  }
};

// Full GLLR run loop: choose, sample, update, stop once the minimum index
// exceeds threshold_scale * beta(N, delta). The stopping check waits until
// every arm has been pulled. A cap converts non-termination into a flagged
// outcome instead of a hang.
inline RunOutcome run_until_stop(const BanditInstance& instance,
                                 const Policy& policy, double delta,
                                 const ThresholdStyle& style,
                                 RunStreams streams,
                                 std::int64_t cap = 10'000'000,
                                 double threshold_scale = 1.0) {
  const int k = instance.num_arms();
  if (cap < k) throw std::invalid_argument("run_until_stop: cap < K");
  const auto start = std::chrono::steady_clock::now();
  SamplingState state(k);
  RunOutcome out;
  for (std::int64_t n = 1; n <= cap; ++n) {
    std::optional<double> coin;
    if (policy.needs_coin() && state.all_pulled())
      coin = streams.coins.next_uniform();
    const int arm = choose_arm(instance, state, policy, coin);
    const double reward =
        sample(instance.family, instance.means[static_cast<std::size_t>(arm)],
               streams.rewards);
    state.record(arm, reward);

    if (state.all_pulled()) {
      const IndexReport rep = empirical_report(instance, state);
      if (stopping_statistic(rep) >
          threshold_scale * threshold(style, n, delta)) {
        out.tau = n;
        out.recommended = rep.best_arm;
        out.hit_cap = false;
        out.correct = rep.best_arm == instance.best_arm();
        out.final_counts = state.counts;
        out.wall_time_us = std::chrono::duration<double, std::micro>(
                               std::chrono::steady_clock::now() - start)
                               .count();
        return out;
      }
    }
  }
  const IndexReport rep = empirical_report(instance, state);
  out.tau = cap;
  out.recommended = rep.best_arm;
  out.correct = rep.best_arm == instance.best_arm();
  out.final_counts = state.counts;
  out.hit_cap = true;
  out.wall_time_us = std::chrono::duration<double, std::micro>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return out;
}

// Fraction of runs whose recommendation is not the best arm. Runs execute
// in parallel over per-run substreams; the estimate is a pure count and is
// independent of scheduling.
inline double delta_correctness_estimate(const BanditInstance& instance,
                                         const Policy& policy, double delta,
                                         std::int64_t runs,
                                         std::uint64_t master_seed,
                                         const ThresholdStyle& style =
                                             ThresholdStyle::make_gk16(),
                                         std::int64_t cap = 10'000'000,
                                         double threshold_scale = 1.0,
                                         int workers = 0) {
  if (runs < 100)
    throw std::invalid_argument("delta_correctness_estimate: runs < 100");
  std::vector<char> wrong(static_cast<std::size_t>(runs), 0);
  parallel_for_index(runs, workers, [&](std::int64_t run_id) {
    const RunOutcome out = run_until_stop(
        instance, policy, delta, style,
        RunStreams::from_seed(master_seed, static_cast<std::uint64_t>(run_id)),
        cap, threshold_scale);
    wrong[static_cast<std::size_t>(run_id)] = out.correct ? 0 : 1;
  });
  std::int64_t bad = 0;
  for (char w : wrong) bad += w;
  return static_cast<double>(bad) / static_cast<double>(runs);
}

// Run with the stopping rule disabled, invoking sink(N, state, report) every
// `stride` pulls (report is null until every arm has been pulled once).
template <class Sink>
void run_trajectory(const BanditInstance& instance, const Policy& policy,
                    RunStreams streams, std::int64_t horizon,
                    std::int64_t stride, Sink&& sink) {
  const int k = instance.num_arms();
  if (horizon < k) throw std::invalid_argument("run_trajectory: horizon < K");
  if (stride < 1) throw std::invalid_argument("run_trajectory: stride < 1");
  SamplingState state(k);
  for (std::int64_t n = 1; n <= horizon; ++n) {
    std::optional<double> coin;
    if (policy.needs_coin() && state.all_pulled())
      coin = streams.coins.next_uniform();
    const int arm = choose_arm(instance, state, policy, coin);
    const double reward =
        sample(instance.family, instance.means[static_cast<std::size_t>(arm)],
               streams.rewards);
    state.record(arm, reward);
    if (n % stride == 0) {
      if (state.all_pulled()) {
        const IndexReport rep = empirical_report(instance, state);
        sink(n, state, &rep);
      } else {
        sink(n, state, static_cast<const IndexReport*>(nullptr));
      }
    }
  }
}

}  // namespace bai
