#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "aniso_shift/aniso_shift.hpp"

namespace ashift::testing {

/// Small seeded generator for property tests.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

  /// Multiple of 1/8 in [-4, 4]; sums and products of a few stay exact.
  double dyadic() { return integer(-32, 32) / 8.0; }

  std::vector<double> reals(std::size_t n, double lo = -1, double hi = 1)
  {
    std::vector<double> v(n);
    for (double& x : v) x = real(lo, hi);
    return v;
  }

  Word word(int n, int len)
  {
    std::vector<int> s(static_cast<std::size_t>(len));
    for (int& c : s) c = integer(0, n - 1);
    return Word(std::move(s));
  }

  std::vector<int> digits(int n, int len) { return word(n, len).symbols; }

  StepField field(Side side, int n, int depth) { return StepField::one_sided(side, n, depth, reals(ipow(n, depth))); }
  StepField product(int n, int dp, int dm) { return StepField::product(n, dp, dm, reals(ipow(n, dp + dm))); }

  /// Positive weights, normalised per row.
  Potential random_markov(Side side, int n)
  {
    std::vector<double> p(static_cast<std::size_t>(n * n));
    for (int a = 0; a < n; ++a) {
      double row = 0;
      for (int b = 0; b < n; ++b) row += p[static_cast<std::size_t>(a * n + b)] = real(0.2, 1.0);
      for (int b = 0; b < n; ++b) p[static_cast<std::size_t>(a * n + b)] /= row;
    }
    return Potential::markov(side, n, p);
  }

  Potential random_potential(Side side, int n, int range)
  {
    return Potential(side, n, range, reals(ipow(n, range), -2.0, 0.5));
  }

  AnisoVector aniso(int n, int dp, int dm, double s, double t)
  {
    AnisoVector v{n, s, t, {}};
    for (Index p = 0; p < ipow(n, dp); ++p)
      for (Index m = 0; m < ipow(n, dm); ++m) v.entries.push_back({p, m, real(-1, 1)});
    return v;
  }
};

inline const Potential markov_plus = Potential::markov(Side::Plus, 2, {0.7, 0.3, 0.4, 0.6});
inline const Potential uniform_plus = Potential::uniform(Side::Plus, 2);
inline const Potential uniform_minus = Potential::uniform(Side::Minus, 2);

inline GoodGrid uniform_grid(Side side, int n, int depth)
{
  return build_grid(solve(Potential::uniform(side, n), std::max(1, std::min(depth, 6))), depth);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Lh(x, y) = exp(phi+(y_{-1} x) - psi-(y)) h(y_{-1} x, sigma- y), one step, on cells.
inline StepField step_operator(const TransferConfig& tc, const StepField& h)
{
  const int n = tc.arity();
  const int op = std::max(h.plus_depth() - 1, tc.phi_plus.range - 1);
  const int om = std::max(h.minus_depth(), tc.psi_minus.range - 1) + 1;
  const Index P = ipow(n, op), M = ipow(n, om);
  std::vector<double> out(P * M);
  for (Index p = 0; p < P; ++p)
    for (Index m = 0; m < M; ++m) {
      const auto x = digits_of(p, n, op);
      const auto y = digits_of(m, n, om);  // y[0] = y_{-1}
      std::vector<int> ax{y[0]};
      ax.insert(ax.end(), x.begin(), x.end());
      const std::vector<int> sy(y.begin() + 1, y.end());
      out[p * M + m] = std::exp(tc.phi_plus(ax) - tc.psi_minus(y)) * h.at(ax, sy);
    }
  return StepField::product(n, op, om, std::move(out));
}

}  // namespace ashift::testing
