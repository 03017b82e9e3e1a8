#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aniso.hpp"

namespace ashift {

/// Normalised potentials, their eigendata and grids, and the depth budgets
/// N+ (plus grid depth) and N- (minus grid depth).
struct TransferConfig {
  Potential phi_plus;
  Potential psi_minus;
  ExponentConfig exps;
  RPFData rpf_plus;
  RPFData rpf_minus;
  GoodGrid grid_plus;
  GoodGrid grid_minus;
  double raw_pressure_plus = 0.0;
  double raw_pressure_minus = 0.0;

  int arity() const { return phi_plus.arity; }
  int plus_budget() const { return grid_plus.depth; }
  int minus_budget() const { return grid_minus.depth; }
};

/// Eigendata are solved at depth min(N, 10) (at least the range) and the grids
/// are extended to N through the Jacobian relation.
inline TransferConfig make_transfer(const Potential& phi, const Potential& psi, ExponentConfig exps, int plus_depth,
                                    int minus_depth, SolveOptions opt = {}, bool check_exponents = true)
{
  if (phi.side != Side::Plus || psi.side != Side::Minus) throw Error(Errc::InvalidArgument, "need phi+ on I+ and psi- on I-");
  if (phi.arity != psi.arity) throw Error(Errc::InvalidArgument, "alphabet mismatch between phi+ and psi-");
  if (check_exponents) exps.check_anisotropic();
  if (plus_depth < phi.range || minus_depth < psi.range) throw Error(Errc::InvalidArgument, "depth budget below potential range");

  auto prepare = [&](const Potential& p, int N, double& raw) {
    RPFData d = solve(p, std::max(p.range, std::min(N, 10)), opt);
    raw = d.pressure;
    d.potential = p.shifted(-d.pressure);
    d.pressure = 0.0;
    return d;
  };
  TransferConfig tc;
  tc.exps = exps;
  tc.exps.s_plus = phi.beta;
  tc.exps.t_minus = psi.beta;
  tc.rpf_plus = prepare(phi, plus_depth, tc.raw_pressure_plus);
  tc.rpf_minus = prepare(psi, minus_depth, tc.raw_pressure_minus);
  tc.phi_plus = tc.rpf_plus.potential;
  tc.psi_minus = tc.rpf_minus.potential;
  tc.grid_plus = build_grid(tc.rpf_plus, plus_depth);
  tc.grid_minus = build_grid(tc.rpf_minus, minus_depth);
  return tc;
}

// ---------------------------------------------------------------------------
// Branch operators

namespace detail {

/// e^{phi_omega} a(omega x) as a step field of depth max(depth(a) - l, r - 1).
inline StepField forward_field(const TransferConfig& tc, const Word& w, const StepField& a)
{
  const int n = tc.arity(), r1 = tc.phi_plus.range - 1;
  const StepField g = step_compose_branch(a, w, BranchForm::Precompose);
  std::vector<double> wt(ipow(n, r1));
  for (Index x = 0; x < wt.size(); ++x) wt[x] = std::exp(birkhoff_branch_sum(tc.phi_plus, w, digits_of(x, n, r1)));
  return g * StepField::one_sided(Side::Plus, n, r1, std::move(wt));
}

/// e^{-S_l psi-(y)} b(sigma_-^l y) 1_{C-(omega)}(y) as a step field of depth
/// max(depth(b), r - 1) + l.
inline StepField backward_field(const TransferConfig& tc, const Word& w, const StepField& b)
{
  const int n = tc.arity(), r1 = tc.psi_minus.range - 1;
  const int l = static_cast<int>(w.size());
  const int tail = std::max(b.depth(), r1);
  if (tail + l > tc.minus_budget())
    throw Error(Errc::BudgetExhausted, "minus budget exhausted: need depth " + std::to_string(tail + l) + ", have " +
                                           std::to_string(tc.minus_budget()));
  std::vector<double> wt(ipow(n, r1));
  for (Index y = 0; y < wt.size(); ++y) wt[y] = std::exp(-birkhoff_branch_sum(tc.psi_minus, w, digits_of(y, n, r1)));
  const StepField inner = b.refined(tail) * StepField::one_sided(Side::Minus, n, r1, std::move(wt));
  return step_compose_branch(inner, w, BranchForm::Restrict);
}

inline void check_plus_budget(const TransferConfig& tc, int need)
{
  if (need > tc.plus_budget())
    throw Error(Errc::BudgetExhausted, "plus budget exhausted: need depth " + std::to_string(need) + ", have " +
                                           std::to_string(tc.plus_budget()));
}

/// Does the depth-l prefix of the node (level, addr) agree with omega?
inline bool branch_compatible(int n, const AtomLocation& loc, const std::vector<int>& wd)
{
  if (loc.root) return true;
  const int depth = loc.level;  // the split's support is the node cylinder
  const int k = std::min<int>(depth, static_cast<int>(wd.size()));
  const std::vector<int> nd = digits_of(loc.addr, n, depth);
  return std::equal(wd.begin(), wd.begin() + k, nd.begin());
}

}  // namespace detail

inline BesovVector branch_forward(const TransferConfig& tc, const Word& w, const BesovVector& a)
{
  check_grid(tc.grid_plus, a.side, a.arity);
  const int D = std::max(a.depth(), static_cast<int>(w.size()));
  detail::check_plus_budget(tc, D);
  const StepField h = detail::forward_field(tc, w, reconstruct(a, tc.grid_plus, D));
  return decompose(h, a.space, tc.grid_plus);
}

inline BesovVector branch_backward(const TransferConfig& tc, const Word& w, const BesovVector& b)
{
  check_grid(tc.grid_minus, b.side, b.arity);
  const StepField h = detail::backward_field(tc, w, reconstruct(b, tc.grid_minus));
  return decompose(h, b.space, tc.grid_minus);
}

/// All words of length l in lexicographic order of their storage symbols.
inline std::vector<Word> all_words(int n, int l)
{
  std::vector<Word> out;
  out.reserve(ipow(n, l));
  for (Index a = 0; a < ipow(n, l); ++a) {
    out.emplace_back(digits_of(a, n, l));
  }
  return out;
}

/// L^l v via the branch sum over |omega| = l, one plus atom at a time.
inline AnisoVector apply(const TransferConfig& tc, const AnisoVector& v, int l)
{
  if (l < 0) throw Error(Errc::InvalidArgument, "negative iterate");
  if (l == 0) return v;
  const int n = tc.arity();
  const int r1p = tc.phi_plus.range - 1, r1m = tc.psi_minus.range - 1;
  const int dp = v.plus_depth(), dm = v.minus_depth();
  detail::check_plus_budget(tc, std::max(dp, l));
  const int out_dp = std::max(std::max(dp, l) - l, r1p);
  const int out_dm = std::max(dm, r1m) + l;
  if (out_dm > tc.minus_budget())
    throw Error(Errc::BudgetExhausted, "minus budget exhausted: need depth " + std::to_string(out_dm) + ", have " +
                                           std::to_string(tc.minus_budget()));
  const Index P = ipow(n, out_dp), M = ipow(n, out_dm);
  std::vector<double> acc(P * M, 0.0);
  const std::vector<Word> words = all_words(n, l);

  std::size_t i = 0;
  std::vector<double> bc(M), pc(P);
  while (i < v.entries.size()) {
    const Index q = v.entries[i].plus;
    BesovVector B{Side::Minus, n, Space::b11_neg(v.t), {}};
    for (; i < v.entries.size() && v.entries[i].plus == q; ++i) B.coeffs.push_back({v.entries[i].minus, v.entries[i].c});
    const AtomLocation loc = locate_atom(n, q);
    const BesovVector A = BesovVector::unit(Side::Plus, n, Space::b11(v.s), q);
    const StepField af = reconstruct(A, tc.grid_plus, std::max(A.depth(), l));
    const StepField bf = reconstruct(B, tc.grid_minus, dm);
    for (const Word& w : words) {
      if (!detail::branch_compatible(n, loc, tree_digits(w, Side::Plus))) continue;
      const StepField fa = detail::forward_field(tc, w, af).refined(out_dp);
      haar_analyze(tc.grid_plus, out_dp, v.s, fa.values().data(), pc.data());
      const StepField fb = detail::backward_field(tc, w, bf);
      haar_analyze(tc.grid_minus, out_dm, -v.t, fb.values().data(), bc.data());
      for (Index p = 0; p < P; ++p) {
        if (pc[p] == 0.0) continue;
        double* row = &acc[p * M];
        for (Index m = 0; m < M; ++m) row[m] += pc[p] * bc[m];
      }
    }
  }
  return detail::from_dense(acc, n, out_dm, v.s, v.t);
}

inline AnisoVector uniform_product(const TransferConfig& tc)
{
  return AnisoVector{tc.arity(), tc.exps.s, tc.exps.t, {{0, 0, 1.0}}};
}

// ---------------------------------------------------------------------------
// Spectral experiments

inline double essential_radius_bound(const Potential& phi_plus, const Potential& psi_minus, double s, double t)
{
  return std::max(std::exp(s * max_ergodic_average(phi_plus)), std::exp(t * max_ergodic_average(psi_minus)));
}

inline double essential_radius_bound(const TransferConfig& tc)
{
  return essential_radius_bound(tc.phi_plus, tc.psi_minus, tc.exps.s, tc.exps.t);
}

struct FixedPointOptions {
  double tol = 1e-10;
  int max_iter = 50;
  bool stop_on_marginal = false;  // test the plus-marginal increment instead of the anisotropic one
};

struct FixedPointTrace {
  AnisoVector nu;
  int iterations = 0;
  bool converged = false;
  bool budget_hit = false;
  std::vector<double> increments;           // ||nu_{k+1} - nu_k|| in the anisotropic norm
  std::vector<double> marginal_increments;  // same for marginal_plus, in B^s_{1,1}
  double last_increment() const { return increments.empty() ? 0.0 : increments.back(); }
};

/// Iterates L on the reference product until the increment drops below tol,
/// the iteration cap is reached or the next step would exceed the minus budget.
inline FixedPointTrace iterate_fixed_point(const TransferConfig& tc, FixedPointOptions opt = {})
{
  FixedPointTrace tr;
  tr.nu = uniform_product(tc);
  for (int k = 0; k < opt.max_iter; ++k) {
    if (std::max(tr.nu.minus_depth(), tc.psi_minus.range - 1) + 1 > tc.minus_budget()) {
      tr.budget_hit = true;
      break;
    }
    AnisoVector next = apply(tc, tr.nu, 1);
    tr.increments.push_back(aniso_norm(next - tr.nu));
    tr.marginal_increments.push_back(besov_norm(marginal_plus(next) - marginal_plus(tr.nu)));
    tr.iterations = k + 1;
    const bool done = (opt.stop_on_marginal ? tr.marginal_increments.back() : tr.increments.back()) < opt.tol;
    if (k == 0 && tr.increments.back() == 0.0) {
      tr.iterations = 0;  // the starting vector is already invariant
      tr.converged = true;
      return tr;
    }
    tr.nu = std::move(next);
    if (done) {
      tr.converged = true;
      return tr;
    }
  }
  return tr;
}

inline AnisoVector fixed_point(const TransferConfig& tc, FixedPointOptions opt = {})
{
  FixedPointTrace tr = iterate_fixed_point(tc, opt);
  if (!tr.converged)
    throw Error(Errc::BudgetExhausted, std::string(tr.budget_hit ? "minus budget" : "iteration budget") +
                                           " exhausted before convergence after " + std::to_string(tr.iterations) +
                                           " iterations; last increment " + std::to_string(tr.last_increment()));
  return std::move(tr.nu);
}

struct SpectralReport {
  std::vector<double> norm_profile;  // sup over probes of ||L^k probe||, k = 0..K (empty unless requested)
  double essential_bound = 0.0;
  std::vector<double> e;           // ||L^k v - <v,1> nu||
  std::vector<double> e_marginal;  // the same on marginal_plus
  GeometricFit fit;
  GeometricFit fit_marginal;
  double second_eigen_oracle = std::numeric_limits<double>::quiet_NaN();
  bool rate_below_essential = false;
  bool rate_below_oracle = false;
  bool bounded_by_fit = false;  // e_k <= C lambda^k for every k
};

/// Largest anisotropic norm of L^k over the unit atom pairs (Q, J) with both
/// atoms of depth below probe_depth: a lower-bound estimator of ||L^k||.
inline std::vector<double> norm_profile(const TransferConfig& tc, int K, int probe_depth = 3)
{
  const int n = tc.arity();
  std::vector<double> out(static_cast<std::size_t>(K) + 1, 0.0);
  for (Index q = 0; q < ipow(n, probe_depth); ++q)
    for (Index j = 0; j < ipow(n, probe_depth); ++j) {
      AnisoVector v{n, tc.exps.s, tc.exps.t, {{q, j, 1.0}}};
      out[0] = std::max(out[0], 1.0);
      for (int k = 1; k <= K; ++k) {
        v = apply(tc, v, 1);
        out[static_cast<std::size_t>(k)] = std::max(out[static_cast<std::size_t>(k)], aniso_norm(v));
      }
    }
  return out;
}

inline SpectralReport decay_rate(const TransferConfig& tc, const AnisoVector& v, int K, const AnisoVector& nu)
{
  SpectralReport rep;
  rep.essential_bound = essential_radius_bound(tc);
  const double mass = v.coefficient(0, 0);
  const AnisoVector target = scaled(nu, mass);
  const BesovVector target_marg = marginal_plus(target);
  AnisoVector cur = v;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) cur = apply(tc, cur, 1);
    rep.e.push_back(aniso_norm(cur - target));
    rep.e_marginal.push_back(besov_norm(marginal_plus(cur) - target_marg));
  }
  const std::size_t half = static_cast<std::size_t>(K) / 2;
  rep.fit = fit_geometric(rep.e, half, static_cast<std::size_t>(K));
  rep.fit_marginal = fit_geometric(rep.e_marginal, half, static_cast<std::size_t>(K));
  const int od = std::max(tc.phi_plus.range, std::min(tc.rpf_plus.depth, tc.arity() == 2 ? 10 : 6));
  rep.second_eigen_oracle = subleading_modulus(tc.phi_plus, od);
  rep.rate_below_essential = rep.fit.rate < rep.essential_bound;
  rep.rate_below_oracle = rep.fit.rate <= rep.second_eigen_oracle;
  rep.bounded_by_fit = true;
  for (std::size_t k = 0; k < rep.e.size(); ++k)
    if (rep.e[k] > rep.fit.C * std::pow(rep.fit.rate, static_cast<double>(k)) * (1 + 1e-12) + 1e-13) rep.bounded_by_fit = false;
  return rep;
}

// ---------------------------------------------------------------------------
// Correlations

/// <L^k(rho mu), gamma>.
inline double correlation(const TransferConfig& tc, const AnisoVector& mu, const MultiplierField& rho, const StepField& gamma, int k)
{
  return evaluate(apply(tc, multiply(rho, mu, tc.grid_plus, tc.grid_minus), k), gamma, tc.grid_plus, tc.grid_minus);
}

/// gamma o sigma^k as a product step field: plus depth k + d+, minus depth
/// max(d- - k, 0).
inline StepField compose_shift(const StepField& gamma, int k)
{
  const int n = gamma.arity(), dp = gamma.plus_depth(), dm = gamma.minus_depth();
  const int np = dp + k, nm = std::max(dm - k, 0);
  const Index P = ipow(n, np), M = ipow(n, nm), gm = ipow(n, dm);
  std::vector<double> out(P * M);
  for (Index p = 0; p < P; ++p) {
    const std::vector<int> x = digits_of(p, n, np);
    // new plus digits x_k ... x_{k+dp-1}; new minus digits x_{k-1} ... x_0 then y
    const Index xp = address(std::span<const int>(x).subspan(static_cast<std::size_t>(k)), n);
    std::vector<int> z;
    for (int i = k - 1; i >= 0 && static_cast<int>(z.size()) < dm; --i) z.push_back(x[static_cast<std::size_t>(i)]);
    const int from_x = static_cast<int>(z.size());
    for (Index m = 0; m < M; ++m) {
      const std::vector<int> y = digits_of(m, n, nm);
      z.resize(static_cast<std::size_t>(from_x));
      for (int j = 0; static_cast<int>(z.size()) < dm; ++j) z.push_back(y[static_cast<std::size_t>(j)]);
      out[p * M + m] = gamma[xp * gm + address(z, n)];
    }
  }
  return StepField::product(n, np, nm, std::move(out));
}

/// int gamma o sigma^k rho dmu with mu given by its density against m+ x m-,
/// computed on the step substrate.
inline double direct_correlation(const TransferConfig& tc, const AnisoVector& mu, const StepField& rho, const StepField& gamma, int k)
{
  const StepField gk = compose_shift(gamma, k);
  detail::check_plus_budget(tc, std::max(gk.plus_depth(), std::max(rho.plus_depth(), mu.plus_depth())));
  const StepField h = aniso_reconstruct(mu, tc.grid_plus, tc.grid_minus);
  return integrate(h * rho * gk, tc.grid_plus, tc.grid_minus);
}

// ---------------------------------------------------------------------------
// SRB experiments

enum class SrbCase { A, B, C };

inline const char* srb_case_name(SrbCase c) { return c == SrbCase::A ? "A" : c == SrbCase::B ? "B" : "C"; }

/// Indicator of C-(minus) x C+(plus); minus in storage order y_{-m} ... y_{-1}.
struct Rectangle {
  Word plus;
  Word minus;
  std::string label() const { return "[" + minus.str() + "|" + plus.str() + "]"; }
};

struct SrbRow {
  std::string observable;
  Direction direction = Direction::Forward;
  double mean = 0.0;
  double stderr_ = 0.0;
  double nu = 0.0;   // natural extension of the target Gibbs state of phi+
  double own = 0.0;  // Gibbs state of the sampling potential driving this direction
  double z_nu() const { return stderr_ > 0 ? (mean - nu) / stderr_ : (mean == nu ? 0.0 : INFINITY); }
  double z_own() const { return stderr_ > 0 ? (mean - own) / stderr_ : (mean == own ? 0.0 : INFINITY); }
};

struct SrbReport {
  SrbCase which = SrbCase::C;
  int n_points = 0;
  int n_steps = 0;
  std::vector<SrbRow> rows;
};

inline double rectangle_value(BiPoint& p, const Rectangle& r)
{
  const long k = static_cast<long>(r.plus.size()), m = static_cast<long>(r.minus.size());
  if (k > 0) p = p.covering(k - 1);
  if (m > 0) p = p.covering(-m);
  for (long i = 0; i < k; ++i)
    if (p.at(i) != r.plus[static_cast<std::size_t>(i)]) return 0.0;
  for (long j = 0; j < m; ++j)
    if (p.at(-m + j) != r.minus[static_cast<std::size_t>(j)]) return 0.0;
  return 1.0;
}

/// Points drawn from m+^{psi+} x m-^{psi-}; forward and backward Birkhoff
/// averages of rectangles against nu (natural extension of the Gibbs state of
/// target_phi_plus) and against the sampling potentials' own Gibbs states.
inline SrbReport srb_experiment(SrbCase which, const Potential& psi_plus, const Potential& psi_minus,
                                const Potential& target_phi_plus, int n_points, int n_steps,
                                const std::vector<Rectangle>& observables, std::uint64_t seed, int depth = 8,
                                SolveOptions opt = {})
{
  int need = 1;
  for (const auto& r : observables) need = std::max(need, static_cast<int>(r.plus.size() + r.minus.size()));
  auto at_depth = [&](const Potential& p) { return solve(p, std::max({depth, p.range, need}), opt); };
  const RPFData sp = at_depth(psi_plus), sm = at_depth(psi_minus), tp = at_depth(target_phi_plus);
  auto plus = std::make_shared<const ConditionalSampler>(sp, MassKind::Reference);
  auto minus = std::make_shared<const ConditionalSampler>(sm, MassKind::Reference);

  auto concat = [](const Rectangle& r) {
    Word w = r.minus;
    w.symbols.insert(w.symbols.end(), r.plus.symbols.begin(), r.plus.symbols.end());
    return w;
  };

  SrbReport rep{which, n_points, n_steps, {}};
  for (Direction dir : {Direction::Forward, Direction::Backward}) {
    std::vector<std::vector<double>> avg(observables.size(), std::vector<double>(static_cast<std::size_t>(n_points)));
    for (int i = 0; i < n_points; ++i) {
      BiPoint p({}, Word{}, sampled_policy(plus, minus, seed, static_cast<std::uint64_t>(i)));
      std::vector<double> sum(observables.size(), 0.0);
      for (int j = 0; j < n_steps; ++j) {
        for (std::size_t o = 0; o < observables.size(); ++o) sum[o] += rectangle_value(p, observables[o]);
        p = skew_apply(p, dir);
      }
      for (std::size_t o = 0; o < observables.size(); ++o) avg[o][static_cast<std::size_t>(i)] = sum[o] / n_steps;
    }
    for (std::size_t o = 0; o < observables.size(); ++o) {
      double mean = 0.0, var = 0.0;
      for (double a : avg[o]) mean += a;
      mean /= n_points;
      for (double a : avg[o]) var += (a - mean) * (a - mean);
      var /= std::max(n_points - 1, 1);
      SrbRow row;
      row.observable = observables[o].label();
      row.direction = dir;
      row.mean = mean;
      row.stderr_ = std::sqrt(var / n_points);
      const Word w = concat(observables[o]);
      row.nu = tp.gibbs(w);
      row.own = dir == Direction::Forward ? sp.gibbs(w) : sm.gibbs(w);
      rep.rows.push_back(row);
    }
  }
  return rep;
}

}  // namespace ashift
