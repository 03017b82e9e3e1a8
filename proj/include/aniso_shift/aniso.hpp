#pragma once

#include "grid_haar.hpp"

namespace ashift {

struct AnisoEntry {
  Index plus = 0;   // atom id on I+, space B^s_{1,1}
  Index minus = 0;  // atom id on I-, space B^{-t}_{1,1}
  double c = 0.0;
};

/// Sparse coefficients c_{Q,J} of sum c_{Q,J} a_Q(x) b_J(y), sorted by (plus, minus).
struct AnisoVector {
  int arity = 2;
  double s = 0.5, t = 0.5;
  std::vector<AnisoEntry> entries;

  int plus_depth() const
  {
    Index top = 0;
    for (const auto& e : entries) top = std::max(top, e.plus);
    return top == 0 ? 0 : locate_atom(arity, top).level + 1;
  }
  int minus_depth() const
  {
    Index top = 0;
    for (const auto& e : entries) top = std::max(top, e.minus);
    return top == 0 ? 0 : locate_atom(arity, top).level + 1;
  }
  double coefficient(Index p, Index m) const
  {
    auto it = std::lower_bound(entries.begin(), entries.end(), std::pair{p, m},
                               [](const AnisoEntry& e, const std::pair<Index, Index>& k) { return std::pair{e.plus, e.minus} < k; });
    return it != entries.end() && it->plus == p && it->minus == m ? it->c : 0.0;
  }
};

inline double aniso_norm(const AnisoVector& v)
{
  double acc = 0.0;
  for (const auto& e : v.entries) acc += std::abs(e.c);
  return acc;
}

inline AnisoVector scaled(const AnisoVector& v, double k)
{
  AnisoVector r = v;
  for (auto& e : r.entries) e.c *= k;
  return r;
}

inline AnisoVector operator-(const AnisoVector& a, const AnisoVector& b)
{
  AnisoVector r{a.arity, a.s, a.t, {}};
  auto key = [](const AnisoEntry& e) { return std::pair{e.plus, e.minus}; };
  auto i = a.entries.begin(), j = b.entries.begin();
  while (i != a.entries.end() || j != b.entries.end()) {
    if (j == b.entries.end() || (i != a.entries.end() && key(*i) < key(*j))) {
      r.entries.push_back(*i++);
    } else if (i == a.entries.end() || key(*j) < key(*i)) {
      r.entries.push_back({j->plus, j->minus, -j->c});
      ++j;
    } else {
      const double d = i->c - j->c;
      if (d != 0.0) r.entries.push_back({i->plus, i->minus, d});
      ++i;
      ++j;
    }
  }
  return r;
}

inline AnisoVector operator+(const AnisoVector& a, const AnisoVector& b) { return a - scaled(b, -1.0); }

namespace detail {

inline AnisoVector from_dense(const std::vector<double>& c, int n, int dm, double s, double t)
{
  AnisoVector v{n, s, t, {}};
  const Index M = ipow(n, dm);
  for (Index i = 0; i < c.size(); ++i)
    if (c[i] != 0.0) v.entries.push_back({i / M, i % M, c[i]});
  return v;
}

inline std::vector<double> to_dense(const AnisoVector& v, int dp, int dm)
{
  const Index P = ipow(v.arity, dp), M = ipow(v.arity, dm);
  std::vector<double> c(P * M, 0.0);
  for (const auto& e : v.entries) {
    if (e.plus >= P || e.minus >= M) throw Error(Errc::ResolutionMismatch, "coefficient deeper than requested resolution");
    c[e.plus * M + e.minus] = e.c;
  }
  return c;
}

/// Applies `op(grid, D, e, in, out)` along the plus axis (for every minus
/// column) and then along the minus axis (for every plus row).
template <class Op>
std::vector<double> separable(const GoodGrid& gp, const GoodGrid& gm, int dp, int dm, double ep, double em,
                              const std::vector<double>& in, Op op)
{
  const Index P = ipow(gp.arity, dp), M = ipow(gm.arity, dm);
  std::vector<double> mid(P * M), out(P * M), col(P), res(P);
  for (Index m = 0; m < M; ++m) {
    for (Index p = 0; p < P; ++p) col[p] = in[p * M + m];
    op(gp, dp, ep, col.data(), res.data());
    for (Index p = 0; p < P; ++p) mid[p * M + m] = res[p];
  }
  for (Index p = 0; p < P; ++p) op(gm, dm, em, &mid[p * M], &out[p * M]);
  return out;
}

}  // namespace detail

inline void check_grids(const GoodGrid& gp, const GoodGrid& gm)
{
  if (gp.side != Side::Plus || gm.side != Side::Minus || gp.arity != gm.arity)
    throw Error(Errc::InvalidArgument, "need a plus grid and a minus grid over the same alphabet");
}

inline AnisoVector tensor(const BesovVector& a, const BesovVector& b)
{
  if (a.side != Side::Plus || b.side != Side::Minus) throw Error(Errc::InvalidArgument, "tensor needs a plus and a minus vector");
  AnisoVector v{a.arity, a.space.order, b.space.order, {}};
  v.entries.reserve(a.coeffs.size() * b.coeffs.size());
  for (const auto& [p, cp] : a.coeffs)
    for (const auto& [m, cm] : b.coeffs) v.entries.push_back({p, m, cp * cm});
  return v;
}

/// Double Haar expansion of a product step field: x-analysis for every y
/// cell, then y-analysis of every plus coefficient.
inline AnisoVector aniso_decompose(const StepField& f, const GoodGrid& gp, const GoodGrid& gm, double s, double t)
{
  check_grids(gp, gm);
  if (f.side() != Side::Product) throw Error(Errc::InvalidArgument, "aniso_decompose needs a product field");
  const auto c = detail::separable(gp, gm, f.plus_depth(), f.minus_depth(), s, -t, f.values(), haar_analyze);
  return detail::from_dense(c, f.arity(), f.minus_depth(), s, t);
}

inline StepField aniso_reconstruct(const AnisoVector& v, const GoodGrid& gp, const GoodGrid& gm, int dp = 0, int dm = 0)
{
  check_grids(gp, gm);
  dp = std::max(dp, v.plus_depth());
  dm = std::max(dm, v.minus_depth());
  const auto c = detail::to_dense(v, dp, dm);
  auto f = detail::separable(gp, gm, dp, dm, v.s, -v.t, c, haar_synthesize);
  return StepField::product(v.arity, dp, dm, std::move(f));
}

inline BesovVector marginal_plus(const AnisoVector& v)
{
  BesovVector r{Side::Plus, v.arity, Space::b11(v.s), {}};
  for (const auto& e : v.entries)
    if (e.minus == 0) r.coeffs.push_back({e.plus, e.c});
  return r;
}

/// Integral of a product step field against m+ x m-.
inline double integrate(const StepField& f, const GoodGrid& gp, const GoodGrid& gm)
{
  const auto& mp = gp.mass.at(static_cast<std::size_t>(f.plus_depth()));
  const auto& mm = gm.mass.at(static_cast<std::size_t>(f.minus_depth()));
  double acc = 0.0;
  for (Index p = 0; p < mp.size(); ++p) {
    double row = 0.0;
    for (Index m = 0; m < mm.size(); ++m) row += f[p * mm.size() + m] * mm[m];
    acc += row * mp[p];
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Observables

struct Observable {
  StepField gamma;
  double K = 0.0;
  double slice_max = 0.0;   // sup_y ||gamma(., y)||_{L^{r*}}
  double holder_max = 0.0;  // sup ||gamma(., y) - gamma(., y')|| / d_-(y, y')^t
  double r_star = 2.0;
};

/// Exact K_{s,t}(gamma) for a product step field: r* = 1/s.
inline Observable estimate_K(const StepField& gamma, double s, double t, const GoodGrid& gp, const GoodGrid& gm)
{
  check_grids(gp, gm);
  if (gamma.side() != Side::Product) throw Error(Errc::InvalidArgument, "observables are product fields");
  const double rs = 1.0 / s;
  const auto& mp = gp.mass.at(static_cast<std::size_t>(gamma.plus_depth()));
  const Index P = mp.size(), M = ipow(gamma.arity(), gamma.minus_depth());
  auto lnorm = [&](auto&& val) {
    double acc = 0.0;
    for (Index p = 0; p < P; ++p) acc += mp[p] * std::pow(std::abs(val(p)), rs);
    return std::pow(acc, 1.0 / rs);
  };
  Observable o{gamma, 0.0, 0.0, 0.0, rs};
  for (Index m = 0; m < M; ++m) {
    o.slice_max = std::max(o.slice_max, lnorm([&](Index p) { return gamma[p * M + m]; }));
    for (Index m2 = m + 1; m2 < M; ++m2) {
      const double d = cell_metric(m, m2, gamma.minus_depth(), gm);
      const double diff = lnorm([&](Index p) { return gamma[p * M + m] - gamma[p * M + m2]; });
      if (diff > 0) o.holder_max = std::max(o.holder_max, diff / std::pow(d, t));
    }
  }
  o.K = std::max(o.slice_max, o.holder_max);
  return o;
}

/// Largest L^r norm of a plus (s,1)-atom, r = 1/(1-s): the constant in
/// |evaluate(v, gamma)| <= C ||v|| K(gamma) for this atom normalisation.
inline double evaluation_constant(const GoodGrid& gp, double s)
{
  const double r = 1.0 / (1.0 - s);
  const int n = gp.arity;
  double worst = 1.0;
  for (int d = 0; d < gp.depth; ++d) {
    const auto& cm = gp.mass[static_cast<std::size_t>(d) + 1];
    for (Index a = 0; a < ipow(n, d); ++a)
      for (int k = 0; k < n - 1; ++k) {
        const SplitNode& sp = gp.splits[static_cast<std::size_t>(d)][a * static_cast<Index>(n - 1) + static_cast<Index>(k)];
        double L = 0, R = 0;
        for (int j = sp.lo; j < sp.cut; ++j) L += cm[a * static_cast<Index>(n) + static_cast<Index>(j)];
        for (int j = sp.cut; j < sp.hi; ++j) R += cm[a * static_cast<Index>(n) + static_cast<Index>(j)];
        const double Q = L + R;
        worst = std::max(worst, std::pow(std::pow(Q / L, r - 1) + std::pow(Q / R, r - 1), 1.0 / r));
      }
  }
  return worst;
}

/// sum c_{Q,J} int int a_Q b_J gamma dm+ dm-, exact at the resolution of gamma.
inline double evaluate(const AnisoVector& v, const StepField& gamma, const GoodGrid& gp, const GoodGrid& gm)
{
  check_grids(gp, gm);
  if (gamma.side() != Side::Product) throw Error(Errc::InvalidArgument, "observables are product fields");
  const int dp = gamma.plus_depth(), dm = gamma.minus_depth();
  const Index M = ipow(v.arity, dm), P = ipow(v.arity, dp);
  const auto G = detail::separable(gp, gm, dp, dm, v.s, -v.t, gamma.values(), atom_integrals);
  double acc = 0.0;
  for (const auto& e : v.entries)
    if (e.plus < P && e.minus < M) acc += e.c * G[e.plus * M + e.minus];
  return acc;
}

inline double evaluate(const AnisoVector& v, const Observable& o, const GoodGrid& gp, const GoodGrid& gm)
{
  return evaluate(v, o.gamma, gp, gm);
}

// ---------------------------------------------------------------------------
// Multipliers

struct MultiplierField {
  StepField rho;
  double certificate = 0.0;  // C for sup |rho| and both 2t-Hoelder conditions
};

inline MultiplierField make_multiplier(const StepField& rho, double t, const GoodGrid& gp, const GoodGrid& gm)
{
  check_grids(gp, gm);
  if (rho.side() != Side::Product) throw Error(Errc::InvalidArgument, "multipliers are product fields");
  const int dp = rho.plus_depth(), dm = rho.minus_depth();
  const Index P = ipow(rho.arity(), dp), M = ipow(rho.arity(), dm);
  double C = 0.0;
  for (double v : rho.values()) C = std::max(C, std::abs(v));
  for (Index m = 0; m < M; ++m)
    for (Index p = 0; p < P; ++p)
      for (Index p2 = p + 1; p2 < P; ++p2) {
        const double diff = std::abs(rho[p * M + m] - rho[p2 * M + m]);
        if (diff > 0) C = std::max(C, diff / std::pow(cell_metric(p, p2, dp, gp), 2 * t));
      }
  for (Index p = 0; p < P; ++p)
    for (Index m = 0; m < M; ++m)
      for (Index m2 = m + 1; m2 < M; ++m2) {
        const double diff = std::abs(rho[p * M + m] - rho[p * M + m2]);
        if (diff > 0) C = std::max(C, diff / std::pow(cell_metric(m, m2, dm, gm), 2 * t));
      }
  return {rho, C};
}

/// rho * v, computed exactly on the step substrate and re-expanded.
inline AnisoVector multiply(const MultiplierField& rho, const AnisoVector& v, const GoodGrid& gp, const GoodGrid& gm)
{
  if (!(v.s < v.t)) throw Error(Errc::ExponentConstraint, "multiplication needs 0 < s < t");
  const int dp = std::max(v.plus_depth(), rho.rho.plus_depth());
  const int dm = std::max(v.minus_depth(), rho.rho.minus_depth());
  if (dp > gp.depth || dm > gm.depth) throw Error(Errc::ResolutionMismatch, "multiplier deeper than the grids");
  const StepField h = aniso_reconstruct(v, gp, gm, dp, dm) * rho.rho;
  return aniso_decompose(h, gp, gm, v.s, v.t);
}

// ---------------------------------------------------------------------------
// Measure constructions

/// Cylinder masses of a measure on I-, level by level in tree order.
struct MinusMeasure {
  std::vector<std::vector<double>> levels;

  /// Builds the coarser levels from the finest one.
  static MinusMeasure from_top(std::vector<double> top, int n, int depth)
  {
    return {detail::aggregate_levels(std::move(top), n, depth)};
  }

  static MinusMeasure point_mass(std::span<const int> y_tree, int n, int depth)
  {
    std::vector<double> top(ipow(n, depth), 0.0);
    top[address(y_tree.first(static_cast<std::size_t>(depth)), n)] = 1.0;
    return from_top(std::move(top), n, depth);
  }

  int depth() const { return static_cast<int>(levels.size()) - 1; }
};

struct EmbedResult {
  AnisoVector v;
  double rho_norm_integral = 0.0;  // int ||rho(., y)||_{B^s_{1,1}} dmu(y)
  double constant = 0.0;           // ||v|| / rho_norm_integral
};

/// rho (m+ x mu) as an element of the anisotropic space: its density with
/// respect to m+ x m- at the resolution of mu is rho(x, y) mu(J_y) / m-(J_y).
inline EmbedResult product_measure_embed(const StepField& rho, const MinusMeasure& mu, const GoodGrid& gp, const GoodGrid& gm,
                                         double s, double t)
{
  check_grids(gp, gm);
  const int n = gp.arity;
  const int dm = mu.depth();
  if (dm < 0) throw Error(Errc::NonAdditive, "empty measure table");
  for (int d = 0; d < dm; ++d)
    for (Index a = 0; a < ipow(n, d); ++a) {
      double sum = 0.0;
      for (int c = 0; c < n; ++c) sum += mu.levels[static_cast<std::size_t>(d) + 1][a * static_cast<Index>(n) + static_cast<Index>(c)];
      if (std::abs(sum - mu.levels[static_cast<std::size_t>(d)][a]) > 1e-12)
        throw Error(Errc::NonAdditive, "measure table is not additive over children");
    }
  if (std::abs(mu.levels[0][0] - 1.0) > 1e-12) throw Error(Errc::NonAdditive, "measure table does not have total mass 1");

  const StepField r = rho.side() == Side::Product ? rho : StepField::tensor(rho, StepField::constant(Side::Minus, n, 1.0));
  const int dp = r.plus_depth();
  const int dmm = std::max(dm, r.minus_depth());
  const StepField base = r.refined(dp, dmm);
  const Index P = ipow(n, dp), M = ipow(n, dmm), k = ipow(n, dmm - dm);
  const auto& top = mu.levels[static_cast<std::size_t>(dm)];
  const auto& mm = gm.mass.at(static_cast<std::size_t>(dmm));
  std::vector<double> h(P * M);
  for (Index p = 0; p < P; ++p)
    for (Index m = 0; m < M; ++m) {
      // mu is spread over the finer cells of its depth-dm cylinder in proportion to m-
      const double cyl = gm.mass[static_cast<std::size_t>(dm)][m / k];
      h[p * M + m] = base[p * M + m] * top[m / k] / cyl;
    }
  (void)mm;

  EmbedResult out;
  out.v = aniso_decompose(StepField::product(n, dp, dmm, std::move(h)), gp, gm, s, t);
  for (Index m = 0; m < M; ++m) {
    std::vector<double> slice(P);
    for (Index p = 0; p < P; ++p) slice[p] = base[p * M + m];
    const double w = top[m / k] * gm.mass[static_cast<std::size_t>(dmm)][m] / gm.mass[static_cast<std::size_t>(dm)][m / k];
    if (w == 0.0) continue;
    out.rho_norm_integral += w * besov_norm(decompose(StepField::one_sided(Side::Plus, n, dp, std::move(slice)), Space::b11(s), gp));
  }
  out.constant = out.rho_norm_integral > 0 ? aniso_norm(out.v) / out.rho_norm_integral : 0.0;
  return out;
}

/// Map from depth-Np plus cells to depth-Nm minus cells (tree addresses).
struct HolderMap {
  int plus_depth = 0;
  int minus_depth = 0;
  std::vector<Index> target;
  double beta = 1.0;
  double seminorm = 0.0;
};

/// Fills u.seminorm with max d-(u(x), u(x')) / d+(x, x')^beta over cell pairs.
inline HolderMap certify_holder_map(HolderMap u, const GoodGrid& gp, const GoodGrid& gm)
{
  if (u.target.size() != ipow(gp.arity, u.plus_depth)) throw Error(Errc::InvalidArgument, "holder map needs one target per plus cell");
  u.seminorm = 0.0;
  for (Index a = 0; a < u.target.size(); ++a)
    for (Index b = a + 1; b < u.target.size(); ++b) {
      const double dy = cell_metric(u.target[a], u.target[b], u.minus_depth, gm);
      if (dy > 0) u.seminorm = std::max(u.seminorm, dy / std::pow(cell_metric(a, b, u.plus_depth, gp), u.beta));
    }
  return u;
}

/// Least-squares fit of log e_k = log C + k log lambda over k in [from, to],
/// skipping values below the floor.  `exact` marks fits with fewer than two
/// usable points (the sequence hit the floor).
struct GeometricFit {
  double rate = 0.0;
  double C = 0.0;
  int points = 0;
  bool exact = true;
};

inline GeometricFit fit_geometric(const std::vector<double>& e, std::size_t from, std::size_t to, double floor = 1e-13)
{
  double sk = 0, sy = 0, skk = 0, sky = 0;
  int cnt = 0;
  for (std::size_t k = from; k <= to && k < e.size(); ++k) {
    if (!(e[k] > floor)) continue;
    const double y = std::log(e[k]);
    sk += static_cast<double>(k);
    sy += y;
    skk += static_cast<double>(k * k);
    sky += static_cast<double>(k) * y;
    ++cnt;
  }
  GeometricFit f;
  f.points = cnt;
  if (cnt < 2) return f;
  const double slope = (cnt * sky - sk * sy) / (cnt * skk - sk * sk);
  f.rate = std::exp(slope);
  f.exact = false;
  for (std::size_t k = 0; k < e.size(); ++k)
    if (e[k] > 0) f.C = std::max(f.C, e[k] / std::pow(f.rate, static_cast<double>(k)));
  return f;
}

struct GraphMeasureResult {
  AnisoVector mu;                  // mu_{Np}
  std::vector<double> increments;  // ||mu_{k+1} - mu_k||, k < Np
  GeometricFit fit;
  double epsilon = 0.0;
  double rho_lp = 0.0;  // ||rho||_{L^{1/eps}(m+)}
};

/// mu_k = sum_{Q in C^k} delta_{u(x_Q)} m+(rho, Q) 1_Q with x_Q the all-zero
/// extension of Q and m+(rho, Q) the m+-mean of rho on Q.
inline GraphMeasureResult graph_measure(const HolderMap& u, const BesovVector& rho, const GoodGrid& gp, const GoodGrid& gm,
                                        double s, double t, double epsilon = -1.0)
{
  check_grids(gp, gm);
  const double gap = u.beta * t - s;
  if (!(gap > 0)) throw Error(Errc::ExponentConstraint, "graph measure needs s < beta t");
  if (epsilon < 0) epsilon = gap / 2;
  if (!(epsilon > 0 && epsilon < gap)) throw Error(Errc::ExponentConstraint, "graph measure needs 0 < epsilon < beta t - s");
  const int n = gp.arity, Np = u.plus_depth, Nm = u.minus_depth;
  if (Np > gp.depth || Nm > gm.depth) throw Error(Errc::ResolutionMismatch, "holder map deeper than the grids");
  if (rho.depth() > Np) throw Error(Errc::ResolutionMismatch, "rho deeper than the holder map");
  const StepField r = reconstruct(rho, gp, Np);

  GraphMeasureResult out;
  out.epsilon = epsilon;
  for (Index p = 0; p < r.size(); ++p) out.rho_lp += gp.mass[static_cast<std::size_t>(Np)][p] * std::pow(std::abs(r[p]), 1.0 / epsilon);
  out.rho_lp = std::pow(out.rho_lp, epsilon);

  const auto I = detail::node_integrals(gp, Np, r.values().data());
  const auto& mm = gm.mass[static_cast<std::size_t>(Nm)];
  const Index M = ipow(n, Nm);
  AnisoVector prev;
  for (int k = 0; k <= Np; ++k) {
    const Index P = ipow(n, k), spread = ipow(n, Np - k);
    std::vector<double> h(P * M, 0.0);
    for (Index q = 0; q < P; ++q) {
      const double mean = I[static_cast<std::size_t>(k)][q] / gp.mass[static_cast<std::size_t>(k)][q];
      const Index y = u.target[q * spread];
      h[q * M + y] = mean / mm[y];
    }
    AnisoVector cur = aniso_decompose(StepField::product(n, k, Nm, std::move(h)), gp, gm, s, t);
    if (k > 0) out.increments.push_back(aniso_norm(cur - prev));
    prev = std::move(cur);
  }
  out.mu = std::move(prev);
  const std::size_t K = out.increments.size();
  out.fit = K ? fit_geometric(out.increments, K / 2, K - 1) : GeometricFit{};
  return out;
}

}  // namespace ashift
