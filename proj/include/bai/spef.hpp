#pragma once

// Single-parameter exponential families parameterized by their mean:
// the open mean interval S, the KL divergence d(mu, x) in nats, its two
// partial derivatives, and reward sampling.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bai/rng.hpp"

namespace bai {

enum class Family { gaussian, bernoulli, poisson, exponential };

// Means closer than this to a finite endpoint of S are rejected: the
// natural parameter diverges at the boundary.
inline constexpr double kMeanBoundaryGuard = 1e-12;

struct SpefFamily {
  Family kind = Family::gaussian;
  double sigma = 1.0;  // Gaussian only: known standard deviation

  static SpefFamily gaussian(double sigma = 1.0) {
    if (!(sigma > 0.0)) throw std::domain_error("gaussian sigma must be > 0");
    return SpefFamily{Family::gaussian, sigma};
  }
  static SpefFamily bernoulli() { return SpefFamily{Family::bernoulli, 0.0}; }
  static SpefFamily poisson() { return SpefFamily{Family::poisson, 0.0}; }
  static SpefFamily exponential() {
    return SpefFamily{Family::exponential, 0.0};
  }

  double mean_inf() const {
    switch (kind) {
      case Family::gaussian:
        return -std::numeric_limits<double>::infinity();
      default:
        return 0.0;
    }
  }

  double mean_sup() const {
    switch (kind) {
      case Family::bernoulli:
        return 1.0;
      default:
        return std::numeric_limits<double>::infinity();
    }
  }

  bool contains(double mu) const {
    if (!std::isfinite(mu)) return false;
    const double lo = mean_inf();
    const double hi = mean_sup();
    if (std::isfinite(lo) && mu - lo < kMeanBoundaryGuard) return false;
    if (std::isfinite(hi) && hi - mu < kMeanBoundaryGuard) return false;
    return true;
  }

  void require(double mu, const char* what) const {
    if (!contains(mu))
      throw std::domain_error(std::string(what) +
                              " outside the family's open mean interval");
  }

  // b''(theta_mu): the variance of the distribution with mean mu.
  double variance_at(double mu) const {
    switch (kind) {
      case Family::gaussian:
        return sigma * sigma;
      case Family::bernoulli:
        return mu * (1.0 - mu);
      case Family::poisson:
        return mu;
      case Family::exponential:
        return mu * mu;
    }
    return 0.0;
  }

  // theta_mu: natural parameter of the distribution with mean mu.
  double natural_param(double mu) const {
    switch (kind) {
      case Family::gaussian:
        return mu / (sigma * sigma);
      case Family::bernoulli:
        return std::log(mu / (1.0 - mu));
      case Family::poisson:
        return std::log(mu);
      case Family::exponential:
        return -1.0 / mu;
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case Family::gaussian:
        return "gaussian";
      case Family::bernoulli:
        return "bernoulli";
      case Family::poisson:
        return "poisson";
      case Family::exponential:
        return "exponential";
    }
    return "?";
  }
};

// d(mu, x) = KL(nu_mu, nu_x) >= 0, zero iff mu == x.
inline double kl(const SpefFamily& f, double mu, double x) {
  f.require(mu, "kl: first argument");
  f.require(x, "kl: second argument");
  switch (f.kind) {
    case Family::gaussian: {
      const double d = mu - x;
      return d * d / (2.0 * f.sigma * f.sigma);
    }
    case Family::bernoulli:
      return mu * std::log(mu / x) +
             (1.0 - mu) * std::log((1.0 - mu) / (1.0 - x));
    case Family::poisson:
      return x - mu + mu * std::log(mu / x);
    case Family::exponential:
      return std::log(x / mu) + mu / x - 1.0;
  }
  return 0.0;
}

// d1(mu, x) = theta_mu - theta_x.
inline double kl_d1(const SpefFamily& f, double mu, double x) {
  f.require(mu, "kl_d1: first argument");
  f.require(x, "kl_d1: second argument");
  return f.natural_param(mu) - f.natural_param(x);
}

// d2(mu, x) = (x - mu) / b''(theta_x); carries the sign of (x - mu).
inline double kl_d2(const SpefFamily& f, double mu, double x) {
  f.require(mu, "kl_d2: first argument");
  f.require(x, "kl_d2: second argument");
  return (x - mu) / f.variance_at(x);
}

namespace detail {

inline double sample_poisson(double mu, RngStream& rng) {
  // Knuth's product method; split large means so the product stays in range.
  double k = 0.0;
  while (mu > 30.0) {
    double half = mu * 0.5;
    k += sample_poisson(half, rng);
    mu -= half;
  }
  const double limit = std::exp(-mu);
  double prod = rng.next_uniform();
  while (prod > limit) {
    k += 1.0;
    prod *= rng.next_uniform();
  }
  return k;
}

}  // namespace detail

// One i.i.d. draw from the distribution with mean mu.
inline double sample(const SpefFamily& f, double mu, RngStream& rng) {
  f.require(mu, "sample: mean");
  switch (f.kind) {
    case Family::gaussian: {
      const double u1 = rng.next_uniform();
      const double u2 = rng.next_uniform();
      const double z =
          std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
      return mu + f.sigma * z;
    }
    case Family::bernoulli:
      return rng.next_uniform() < mu ? 1.0 : 0.0;
    case Family::poisson:
      return detail::sample_poisson(mu, rng);
    case Family::exponential:
      return -mu * std::log(rng.next_uniform());
  }
  return 0.0;
}

// Ground-truth instance: family plus arm means with a unique best arm.
struct BanditInstance {
  SpefFamily family;
  std::vector<double> means;

  BanditInstance(SpefFamily f, std::vector<double> m)
      : family(f), means(std::move(m)) {
    if (means.size() < 2)
      throw std::invalid_argument("instance needs at least two arms");
    for (double mu : means) family.require(mu, "instance mean");
    const int b = best_arm();
    for (int a = 0; a < num_arms(); ++a) {
      if (a != b && !(means[static_cast<std::size_t>(a)] <
                      means[static_cast<std::size_t>(b)]))
        throw std::invalid_argument("instance must have a unique best arm");
    }
  }

  int num_arms() const { return static_cast<int>(means.size()); }

  int best_arm() const {
    int best = 0;
    for (int a = 1; a < num_arms(); ++a)
      if (means[static_cast<std::size_t>(a)] >
          means[static_cast<std::size_t>(best)])
        best = a;
    return best;
  }

  double gap(int a) const {
    return means[static_cast<std::size_t>(best_arm())] -
           means[static_cast<std::size_t>(a)];
  }
};

}  // namespace bai
