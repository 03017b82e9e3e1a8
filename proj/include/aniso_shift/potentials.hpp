#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "shift_core.hpp"

namespace ashift {

/// Locally constant potential of finite range on one side.  table[a] is the
/// value on the depth-`range` cylinder with tree address a (for the minus
/// side the most significant digit is y_{-1}).
struct Potential {
  Side side = Side::Plus;
  int arity = 2;
  int range = 1;
  std::vector<double> table{0.0, 0.0};
  double beta = 1.0;  // Hoelder exponent metadata
  double seminorm = std::numeric_limits<double>::quiet_NaN();

  Potential() = default;

  Potential(Side s, int n, int r, std::vector<double> t) : side(s), arity(n), range(r), table(std::move(t))
  {
    if (s == Side::Product) throw Error(Errc::InvalidArgument, "potentials live on one side");
    Alphabet{n};
    if (r < 1) throw Error(Errc::InvalidArgument, "potential range must be positive");
    if (table.size() != ipow(n, r)) throw Error(Errc::InvalidArgument, "potential table needs n^range entries");
  }

  static Potential constant(Side s, int n, double c) { return {s, n, 1, std::vector<double>(static_cast<std::size_t>(n), c)}; }
  static Potential uniform(Side s, int n) { return constant(s, n, -std::log(static_cast<double>(n))); }

  /// log w_a on the first symbol.
  static Potential bernoulli(Side s, const std::vector<double>& w)
  {
    std::vector<double> t;
    for (double x : w) {
      if (!(x > 0)) throw Error(Errc::InvalidArgument, "bernoulli weights must be positive");
      t.push_back(std::log(x));
    }
    return {s, static_cast<int>(w.size()), 1, std::move(t)};
  }

  /// log p_{ab} on the first two tree digits, p given row-major.
  static Potential markov(Side s, int n, const std::vector<double>& p)
  {
    if (p.size() != static_cast<std::size_t>(n * n)) throw Error(Errc::InvalidArgument, "markov matrix needs n*n weights");
    std::vector<double> t;
    for (double x : p) {
      if (!(x > 0)) throw Error(Errc::InvalidArgument, "markov weights must be positive");
      t.push_back(std::log(x));
    }
    return {s, n, 2, std::move(t)};
  }

  double operator()(std::span<const int> digits) const
  {
    if (static_cast<int>(digits.size()) < range) throw Error(Errc::InsufficientResolution, "point shorter than potential range");
    return table[address(digits.first(static_cast<std::size_t>(range)), arity)];
  }

  Potential shifted(double c) const
  {
    Potential p = *this;
    for (double& v : p.table) v += c;
    return p;
  }

  std::string describe() const
  {
    std::string s = std::string(side_name(side)) + " range " + std::to_string(range) + " [";
    for (std::size_t i = 0; i < table.size(); ++i) s += (i ? " " : "") + std::to_string(table[i]);
    return s + "]";
  }
};

/// Birkhoff sum along an inverse branch: sum_{j<|w|} psi(sigma^j(w x)).
/// `w` is in the side's storage order, `x` in tree order with at least
/// range-1 digits.
inline double birkhoff_branch_sum(const Potential& psi, const Word& w, std::span<const int> x)
{
  if (w.empty()) return 0.0;
  if (static_cast<int>(x.size()) < psi.range - 1) throw Error(Errc::InsufficientResolution, "point too short for the potential range");
  std::vector<int> z = tree_digits(w, psi.side);
  const std::size_t l = z.size();
  z.insert(z.end(), x.begin(), x.begin() + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x.size()), psi.range - 1));
  double sum = 0.0;
  for (std::size_t j = 0; j < l; ++j) sum += psi(std::span<const int>(z).subspan(j));
  return sum;
}

/// Potential on the bilateral shift depending on x_{-m} ... x_{k-1};
/// table index is the radix address of that window read left to right.
struct BilateralPotential {
  int arity = 2;
  int neg_range = 0;
  int pos_range = 1;
  std::vector<double> table{0.0, 0.0};

  BilateralPotential() = default;
  BilateralPotential(int n, int m, int k, std::vector<double> t) : arity(n), neg_range(m), pos_range(k), table(std::move(t))
  {
    Alphabet{n};
    if (m < 0 || k < 0 || m + k < 1) throw Error(Errc::InvalidArgument, "bilateral potential needs m + k >= 1");
    if (table.size() != ipow(n, m + k)) throw Error(Errc::InvalidArgument, "bilateral table needs n^(m+k) entries");
  }

  /// window[i] holds x_{i - m}; needs m + k entries.
  double operator()(std::span<const int> window) const { return table[address(window.first(static_cast<std::size_t>(neg_range + pos_range)), arity)]; }
};

/// u+ and phi+ with phi+ = phi + u+ o sigma - u+.  u+ depends on
/// x_{-m} ... x_{m+k-2} and is stored over that window.
struct CoboundaryData {
  int neg_range = 0;
  int pos_range = 1;
  int u_window = 0;
  std::vector<double> u_table{0.0};
  Potential phi_plus;

  /// window[i] holds x_{i - m}; needs u_window entries.
  double u(std::span<const int> window) const
  {
    if (u_window == 0) return 0.0;
    return u_table[address(window.first(static_cast<std::size_t>(u_window)), phi_plus.arity)];
  }
};

/// Cohomological reduction with reference symbol 0 for the spliced past.
inline CoboundaryData reduce_to_one_sided(const BilateralPotential& phi)
{
  const int n = phi.arity, m = phi.neg_range, k = phi.pos_range;
  CoboundaryData out;
  out.neg_range = m;
  out.pos_range = k;

  // phi(sigma^j x*) where x* has its negative coordinates replaced by 0;
  // `x` holds x_0 x_1 ... (enough for the window).
  auto spliced = [&](const std::vector<int>& x, int j) {
    std::vector<int> w(static_cast<std::size_t>(m + k));
    for (int i = 0; i < m + k; ++i) {
      const int c = j - m + i;
      w[static_cast<std::size_t>(i)] = c < 0 ? 0 : x[static_cast<std::size_t>(c)];
    }
    return phi(w);
  };

  if (m > 0) {
    out.u_window = 2 * m + k - 1;
    const Index cells = ipow(n, out.u_window);
    out.u_table.assign(cells, 0.0);
    for (Index a = 0; a < cells; ++a) {
      const std::vector<int> win = digits_of(a, n, out.u_window);  // x_{-m} ...
      const std::vector<int> x(win.begin() + m, win.end());
      double u = 0.0;
      for (int j = 0; j < m; ++j)
        u += phi(std::span<const int>(win).subspan(static_cast<std::size_t>(j))) - spliced(x, j);
      out.u_table[a] = u;
    }
  }

  // phi+(x) = phi(sigma^m x) + sum_{j<m} [phi(sigma^j x*) - phi(sigma^j (sigma x)*)]
  const int r = m + k;
  std::vector<double> t(ipow(n, r));
  for (Index a = 0; a < t.size(); ++a) {
    const std::vector<int> x = digits_of(a, n, r);
    double v = phi(x);
    const std::vector<int> sx(x.begin() + 1, x.end());
    for (int j = 0; j < m; ++j) v += spliced(x, j) - spliced(sx, j);
    t[a] = v;
  }
  out.phi_plus = Potential(Side::Plus, n, r, std::move(t));
  return out;
}

/// Largest |phi+(x) - phi(x) - u+(sigma x) + u+(x)| over all windows
/// x_{-m} ... x_{m+k-1}.
inline double cohomology_residual(const BilateralPotential& phi, const CoboundaryData& c)
{
  const int n = phi.arity, m = phi.neg_range, k = phi.pos_range;
  const int len = 2 * m + k;
  double worst = 0.0;
  for (Index a = 0; a < ipow(n, len); ++a) {
    const std::vector<int> w = digits_of(a, n, len);
    const std::span<const int> s(w);
    const double lhs = c.phi_plus(s.subspan(static_cast<std::size_t>(m)));
    const double rhs = phi(s) + c.u(s.subspan(1)) - c.u(s);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

/// Supremum of int psi dmu over invariant probabilities: the maximum mean
/// cycle of the de Bruijn graph on (range-1)-words, found by Karp's minimum
/// mean cycle recursion applied to -psi.
inline double max_ergodic_average(const Potential& psi)
{
  const int n = psi.arity;
  const Index nodes = ipow(n, psi.range - 1);
  const double inf = std::numeric_limits<double>::infinity();
  // D[k][v]: minimum weight of a k-edge walk ending at v, starting anywhere
  std::vector<std::vector<double>> D(nodes + 1, std::vector<double>(nodes, inf));
  std::fill(D[0].begin(), D[0].end(), 0.0);
  for (Index k = 1; k <= nodes; ++k) {
    for (Index e = 0; e < psi.table.size(); ++e) {
      const Index from = e / static_cast<Index>(n);
      const Index to = e % nodes;
      const double w = -psi.table[e];
      if (D[k - 1][from] + w < D[k][to]) D[k][to] = D[k - 1][from] + w;
    }
  }
  double best = inf;
  for (Index v = 0; v < nodes; ++v) {
    double worst = -inf;
    for (Index k = 0; k < nodes; ++k)
      worst = std::max(worst, (D[nodes][v] - D[k][v]) / static_cast<double>(nodes - k));
    best = std::min(best, worst);
  }
  return -best;
}

}  // namespace ashift
