#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>

#include "potentials.hpp"

namespace ashift {

struct SolveOptions {
  double tol = 1e-13;
  int max_iter = 100000;
  int threads = 1;
};

/// Leading eigendata of the transfer operator of psi on depth-N step functions.
struct RPFData {
  Side side = Side::Plus;
  int arity = 2;
  int depth = 0;
  double pressure = 0.0;
  Potential potential;  // the potential that was solved (not normalised)
  StepField rho;
  std::vector<std::vector<double>> ref_mass;    // [level][tree address], levels 0..depth
  std::vector<std::vector<double>> gibbs_mass;  // idem
  int iterations = 0;

  double ref(const Word& w) const { return ref_mass.at(w.size())[address(tree_digits(w, side), arity)]; }
  double gibbs(const Word& w) const { return gibbs_mass.at(w.size())[address(tree_digits(w, side), arity)]; }
  double rho_min() const { return *std::min_element(rho.values().begin(), rho.values().end()); }
  double rho_max() const { return *std::max_element(rho.values().begin(), rho.values().end()); }
};

namespace detail {

inline std::vector<std::vector<double>> aggregate_levels(std::vector<double> top, int n, int depth)
{
  std::vector<std::vector<double>> lv(static_cast<std::size_t>(depth) + 1);
  lv[static_cast<std::size_t>(depth)] = std::move(top);
  for (int d = depth - 1; d >= 0; --d) {
    const auto& below = lv[static_cast<std::size_t>(d) + 1];
    std::vector<double> cur(ipow(n, d), 0.0);
    for (Index a = 0; a < cur.size(); ++a)
      for (int c = 0; c < n; ++c) cur[a] += below[a * static_cast<Index>(n) + static_cast<Index>(c)];
    lv[static_cast<std::size_t>(d)] = std::move(cur);
  }
  return lv;
}

}  // namespace detail

/// Power iteration for the right eigenvector rho and, on the adjoint, for the
/// eigenmeasure m.  Row x of the operator has one entry per symbol a, in
/// column (a x0 ... x_{N-2}) with weight exp(psi(a x0 ... x_{r-2})).
inline RPFData solve(const Potential& psi, int depth, SolveOptions opt = {})
{
  const int n = psi.arity;
  if (depth < psi.range) throw Error(Errc::InvalidArgument, "rpf depth must be at least the potential range");
  const Index cells = ipow(n, depth);
  const Index tail = ipow(n, depth - 1);
  const Index wshift = ipow(n, depth - psi.range + 1);  // x / wshift = x0 ... x_{r-2}
  const Index ctx = ipow(n, psi.range - 1);
  const Index cshift = ipow(n, depth - psi.range);  // c / cshift = a x0 ... x_{r-2}
  std::vector<double> w(psi.table.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(psi.table[i]);

  // summation rounding grows with the cell count; below this floor the test cannot settle
  const double tol = std::max(opt.tol, 64 * std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(cells)));
  auto run = [&](auto&& step, std::vector<double>& v) {
    double lambda = 0.0;
    for (int it = 1; it <= opt.max_iter; ++it) {
      std::vector<double> nv(cells);
      parallel_for(cells, opt.threads, [&](Index b, Index e) {
        for (Index i = b; i < e; ++i) nv[i] = step(v, i);
      });
      double s = 0.0, old = 0.0;
      for (Index i = 0; i < cells; ++i) s += nv[i];
      for (Index i = 0; i < cells; ++i) old += v[i];
      const double lam = s / old;
      double change = 0.0, big = 0.0;
      for (Index i = 0; i < cells; ++i) {
        nv[i] /= lam;
        change = std::max(change, std::abs(nv[i] - v[i]));
        big = std::max(big, std::abs(nv[i]));
      }
      const bool settled = it > 1 && std::abs(lam - lambda) <= tol * std::abs(lam) && change <= 10 * tol * big;
      v = std::move(nv);
      lambda = lam;
      if (settled) return std::pair{lambda, it};
    }
    throw Error(Errc::NonConvergence, "rpf power iteration did not converge in " + std::to_string(opt.max_iter) + " iterations");
  };

  std::vector<double> h(cells, 1.0);
  const auto [lam_r, it_r] = run(
      [&](const std::vector<double>& v, Index x) {
        double acc = 0.0;
        for (int a = 0; a < n; ++a) {
          const Index col = static_cast<Index>(a) * tail + x / static_cast<Index>(n);
          acc += w[static_cast<Index>(a) * ctx + x / wshift] * v[col];
        }
        return acc;
      },
      h);

  std::vector<double> m(cells, 1.0 / static_cast<double>(cells));
  const auto [lam_l, it_l] = run(
      [&](const std::vector<double>& v, Index c) {
        // column c = a x0 ... x_{N-2}; rows are x0 ... x_{N-2} b for every b
        const Index base = (c % tail) * static_cast<Index>(n);
        double acc = 0.0;
        for (int b = 0; b < n; ++b) acc += v[base + static_cast<Index>(b)];
        return acc * w[c / cshift];
      },
      m);
  (void)lam_l;

  double total = 0.0;
  for (double x : m) total += x;
  for (double& x : m) x /= total;
  double integral = 0.0;
  for (Index i = 0; i < cells; ++i) integral += h[i] * m[i];
  for (double& x : h) x /= integral;

  RPFData d;
  d.side = psi.side;
  d.arity = n;
  d.depth = depth;
  d.pressure = std::log(lam_r);
  d.potential = psi;
  d.iterations = std::max(it_r, it_l);
  std::vector<double> g(cells);
  for (Index i = 0; i < cells; ++i) g[i] = h[i] * m[i];
  d.rho = StepField::one_sided(psi.side, n, depth, std::move(h));
  d.ref_mass = detail::aggregate_levels(std::move(m), n, depth);
  d.gibbs_mass = detail::aggregate_levels(std::move(g), n, depth);
  return d;
}

/// psi - P(psi).
inline Potential normalize_pressure(const Potential& psi, int depth, SolveOptions opt = {})
{
  return psi.shifted(-solve(psi, depth, opt).pressure);
}

/// Modulus of the second largest eigenvalue of the transfer operator on
/// depth-`depth` step functions, from a dense eigensolve.  Only meant for tiny
/// depths (it builds the full matrix).
inline double subleading_modulus(const Potential& psi, int depth)
{
  const int n = psi.arity;
  if (depth < psi.range) throw Error(Errc::InvalidArgument, "depth below potential range");
  const Index cells = ipow(n, depth);
  if (cells > 2048) throw Error(Errc::InvalidArgument, "dense eigensolve limited to 2048 cells");
  const Index tail = ipow(n, depth - 1);
  const Index wshift = ipow(n, depth - psi.range + 1);
  const Index ctx = ipow(n, psi.range - 1);
  const Index cshift = ipow(n, depth - psi.range);  // c / cshift = a x0 ... x_{r-2}
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(cells));
  for (Index x = 0; x < cells; ++x)
    for (int a = 0; a < n; ++a)
      L(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(static_cast<Index>(a) * tail + x / static_cast<Index>(n))) +=
          std::exp(psi.table[static_cast<Index>(a) * ctx + x / wshift]);
  Eigen::EigenSolver<Eigen::MatrixXd> es(L, false);
  std::vector<double> mods;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mods.push_back(std::abs(es.eigenvalues()[i]));
  std::sort(mods.rbegin(), mods.rend());
  return mods.size() > 1 ? mods[1] / mods[0] : 0.0;
}

struct GibbsCertificate {
  double c_low = 1.0;
  double c_high = 1.0;
  int depth = 0;
};

/// Ratios nu(C(w)) / exp(-|w| P + S_{|w|} psi(y)) with y the all-zero
/// extension of w, over every cylinder of depth 1..N.
inline GibbsCertificate verify_gibbs(const RPFData& data, const Potential& psi)
{
  GibbsCertificate c{std::numeric_limits<double>::infinity(), 0.0, data.depth};
  const std::vector<int> zeros(static_cast<std::size_t>(std::max(psi.range - 1, 0)), 0);
  for (int k = 1; k <= data.depth; ++k) {
    for (Index a = 0; a < ipow(data.arity, k); ++a) {
      const Word w = word_from_tree(digits_of(a, data.arity, k), data.side);
      const double s = birkhoff_branch_sum(psi, w, zeros);
      const double r = data.gibbs_mass[static_cast<std::size_t>(k)][a] / std::exp(-k * data.pressure + s);
      c.c_low = std::min(c.c_low, r);
      c.c_high = std::max(c.c_high, r);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Sampling

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) attached to (seed, stream, position).
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t position)
{
  const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(stream)) + position);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

enum class MassKind { Reference, Gibbs };

/// Next-symbol conditionals read off a depth-N mass table; beyond depth N the
/// last N-1 symbols are used as a Markov context.
class ConditionalSampler {
public:
  ConditionalSampler(const RPFData& data, MassKind kind)
      : n_(data.arity), depth_(data.depth), mass_(kind == MassKind::Reference ? data.ref_mass : data.gibbs_mass)
  {
  }

  int next(const std::vector<int>& history, double u) const
  {
    const std::size_t p = history.size();
    const int k = static_cast<int>(std::min<std::size_t>(p, static_cast<std::size_t>(depth_ - 1)));
    const Index ctx = address(std::span<const int>(history).last(static_cast<std::size_t>(k)), n_);
    const auto& level = mass_[static_cast<std::size_t>(k) + 1];
    double total = 0.0;
    for (int a = 0; a < n_; ++a) total += level[ctx * static_cast<Index>(n_) + static_cast<Index>(a)];
    double acc = 0.0;
    for (int a = 0; a < n_; ++a) {
      acc += level[ctx * static_cast<Index>(n_) + static_cast<Index>(a)] / total;
      if (u < acc) return a;
    }
    return n_ - 1;
  }

  int arity() const { return n_; }

private:
  int n_;
  int depth_;
  std::vector<std::vector<double>> mass_;
};

/// Tree-ordered sequence of `length` symbols drawn from the reference or Gibbs
/// masses.  Deterministic in (seed, stream).
inline std::vector<int> sample_point(const RPFData& data, std::uint64_t seed, std::size_t length,
                                     MassKind kind = MassKind::Reference, std::uint64_t stream = 0)
{
  const ConditionalSampler s(data, kind);
  std::vector<int> out;
  out.reserve(length);
  while (out.size() < length) out.push_back(s.next(out, counter_uniform(seed, stream, out.size())));
  return out;
}

/// Extension policy drawing plus symbols from `plus` and minus symbols from
/// `minus`, both as functions of position and earlier symbols.
inline ExtensionPolicy sampled_policy(std::shared_ptr<const ConditionalSampler> plus,
                                      std::shared_ptr<const ConditionalSampler> minus, std::uint64_t seed,
                                      std::uint64_t stream)
{
  return ExtensionPolicy::sampled([plus, minus, seed, stream](Side side, Index pos, const std::vector<int>& tape) {
    const auto& s = side == Side::Plus ? *plus : *minus;
    const std::uint64_t salt = side == Side::Plus ? 2 * stream : 2 * stream + 1;
    return s.next(tape, counter_uniform(seed, salt, pos));
  });
}

}  // namespace ashift
