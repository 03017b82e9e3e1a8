#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "rpf.hpp"

namespace ashift {

/// One (L, R) pair of a Haar split: L = children [lo, cut), R = [cut, hi).
struct SplitNode {
  std::uint8_t lo = 0, cut = 1, hi = 2;
  bool operator==(const SplitNode&) const = default;
};

/// Split tree of one parent cylinder, preorder (top pair first).
struct HaarSplit {
  int level = 0;
  Index addr = 0;
  std::vector<SplitNode> pairs;
};

/// Nested cylinder partitions of one side with reference-measure masses and
/// the deterministic Haar split forest.
struct GoodGrid {
  Side side = Side::Plus;
  int arity = 2;
  int depth = 0;
  std::vector<std::vector<double>> mass;         // [level][addr], levels 0..depth
  std::vector<std::vector<SplitNode>> splits;    // [level][addr * (n-1) + k], levels 0..depth-1
  double lambda1 = 0.0, lambda2 = 0.0;

  double node_mass(int level, Index addr) const { return mass[static_cast<std::size_t>(level)][addr]; }
};

namespace detail {

/// Balanced-mass binary cut of children [lo, hi) in symbol order; ties within
/// a relative 1e-12 go to the smaller left block.
inline void split_range(const double* cm, int lo, int hi, std::vector<SplitNode>& out)
{
  if (hi - lo < 2) return;
  double total = 0.0;
  for (int c = lo; c < hi; ++c) total += cm[c];
  int best = lo + 1;
  double best_gap = std::numeric_limits<double>::infinity();
  double left = 0.0;
  for (int cut = lo + 1; cut < hi; ++cut) {
    left += cm[cut - 1];
    const double gap = std::abs(left - (total - left));
    if (gap < best_gap - 1e-12 * total) {
      best_gap = gap;
      best = cut;
    }
  }
  out.push_back({static_cast<std::uint8_t>(lo), static_cast<std::uint8_t>(best), static_cast<std::uint8_t>(hi)});
  split_range(cm, lo, best, out);
  split_range(cm, best, hi, out);
}

}  // namespace detail

/// Grid of the reference measure of `data`.  Levels beyond data.depth are
/// filled exactly through the Jacobian relation m(C(a w)) = exp(psi(a w) - P) m(C(w)),
/// valid because data.depth is at least the potential range.
inline GoodGrid build_grid(const RPFData& data, int depth = -1)
{
  if (depth < 0) depth = data.depth;
  const int n = data.arity;
  GoodGrid g;
  g.side = data.side;
  g.arity = n;
  g.depth = depth;
  g.mass.assign(data.ref_mass.begin(), data.ref_mass.begin() + std::min(depth, data.depth) + 1);
  const Potential& psi = data.potential;
  for (int d = data.depth; d < depth; ++d) {
    const auto& cur = g.mass[static_cast<std::size_t>(d)];
    std::vector<double> next(cur.size() * static_cast<Index>(n));
    const Index tail = ipow(n, d);
    const Index wshift = ipow(n, d - psi.range + 1);
    const Index ctx = ipow(n, psi.range - 1);
    for (int a = 0; a < n; ++a)
      for (Index wa = 0; wa < tail; ++wa)
        next[static_cast<Index>(a) * tail + wa] =
            std::exp(psi.table[static_cast<Index>(a) * ctx + wa / wshift] - data.pressure) * cur[wa];
    g.mass.push_back(std::move(next));
  }
  // the Jacobian step is additive only up to the eigenmeasure tolerance; re-aggregating
  // makes every node mass the sum of its children, which the Haar transforms rely on
  if (depth > data.depth) g.mass = detail::aggregate_levels(g.mass.back(), n, depth);

  g.lambda1 = std::numeric_limits<double>::infinity();
  g.lambda2 = 0.0;
  g.splits.resize(static_cast<std::size_t>(depth));
  for (int d = 0; d < depth; ++d) {
    const auto& par = g.mass[static_cast<std::size_t>(d)];
    const auto& ch = g.mass[static_cast<std::size_t>(d) + 1];
    auto& sp = g.splits[static_cast<std::size_t>(d)];
    sp.reserve(par.size() * static_cast<Index>(n - 1));
    for (Index a = 0; a < par.size(); ++a) {
      const double* cm = &ch[a * static_cast<Index>(n)];
      for (int c = 0; c < n; ++c) {
        const double r = cm[c] / par[a];
        g.lambda1 = std::min(g.lambda1, r);
        g.lambda2 = std::max(g.lambda2, r);
      }
      detail::split_range(cm, 0, n, sp);
    }
  }
  if (depth == 0) g.lambda1 = g.lambda2 = 1.0 / n;
  if (!(g.lambda1 > 0.0) || !(g.lambda2 < 1.0))
    throw Error(Errc::DegenerateMass, "degenerate grid: child/parent mass ratio reaches 0 or 1");
  return g;
}

inline HaarSplit haar_split(const GoodGrid& g, int level, Index addr)
{
  const auto n1 = static_cast<Index>(g.arity - 1);
  const auto& sp = g.splits.at(static_cast<std::size_t>(level));
  return {level, addr, std::vector<SplitNode>(sp.begin() + static_cast<std::ptrdiff_t>(addr * n1),
                                              sp.begin() + static_cast<std::ptrdiff_t>((addr + 1) * n1))};
}

/// The whole split forest, one HaarSplit per internal node, level by level.
inline std::vector<HaarSplit> haar_splits(const GoodGrid& g)
{
  std::vector<HaarSplit> out;
  for (int d = 0; d < g.depth; ++d)
    for (Index a = 0; a < ipow(g.arity, d); ++a) out.push_back(haar_split(g, d, a));
  return out;
}

// ---------------------------------------------------------------------------
// Atom numbering: id 0 is the constant 1_I; split k of node (level d, addr a)
// has id 1 + (offset(d) + a) (n-1) + k with offset(d) = (n^d - 1)/(n - 1).
// Atoms of nodes above level D are exactly the ids below n^D.

struct AtomLocation {
  bool root = true;
  int level = 0;
  Index addr = 0;
  int k = 0;
};

inline Index node_offset(int n, int level) { return (ipow(n, level) - 1) / static_cast<Index>(n - 1); }

inline Index atom_id(int n, int level, Index addr, int k)
{
  return 1 + (node_offset(n, level) + addr) * static_cast<Index>(n - 1) + static_cast<Index>(k);
}

inline AtomLocation locate_atom(int n, Index id)
{
  if (id == 0) return {};
  const Index node = (id - 1) / static_cast<Index>(n - 1);
  AtomLocation loc{false, 0, 0, static_cast<int>((id - 1) % static_cast<Index>(n - 1))};
  while (node_offset(n, loc.level + 1) <= node) ++loc.level;
  loc.addr = node - node_offset(n, loc.level);
  return loc;
}

enum class Integrability { One, Infinity };

enum class SpaceTag {
  Bs11,      // B^s_{1,1}
  BnegT11,   // B^{-t}_{1,1}
  BsInf,     // B^s_{inf,inf}
  BnegSInf,  // B^{-s}_{inf,inf}
};

/// A Besov space from the four-space family; `order` is the positive s or t.
struct Space {
  SpaceTag tag = SpaceTag::Bs11;
  double order = 0.5;

  static Space b11(double s) { return {SpaceTag::Bs11, s}; }
  static Space b11_neg(double t) { return {SpaceTag::BnegT11, t}; }
  static Space binf(double s) { return {SpaceTag::BsInf, s}; }
  static Space binf_neg(double s) { return {SpaceTag::BnegSInf, s}; }

  double regularity() const { return tag == SpaceTag::Bs11 || tag == SpaceTag::BsInf ? order : -order; }
  Integrability p() const { return tag == SpaceTag::Bs11 || tag == SpaceTag::BnegT11 ? Integrability::One : Integrability::Infinity; }
  /// Atom normalisation exponent s + 1 - 1/p.
  double exponent() const { return regularity() + (p() == Integrability::One ? 0.0 : 1.0); }

  std::string name() const
  {
    switch (tag) {
      case SpaceTag::Bs11: return "B^" + std::to_string(order) + "_{1,1}";
      case SpaceTag::BnegT11: return "B^-" + std::to_string(order) + "_{1,1}";
      case SpaceTag::BsInf: return "B^" + std::to_string(order) + "_{inf,inf}";
      default: return "B^-" + std::to_string(order) + "_{inf,inf}";
    }
  }
};

struct AtomIndex {
  Side side = Side::Plus;
  Index id = 0;
  Space space;
};

using Coeffs = std::vector<std::pair<Index, double>>;  // sorted by atom id

/// Sparse Haar coefficients of a function or distribution on one side.
struct BesovVector {
  Side side = Side::Plus;
  int arity = 2;
  Space space;
  Coeffs coeffs;

  double coefficient(Index id) const
  {
    auto it = std::lower_bound(coeffs.begin(), coeffs.end(), id, [](const auto& e, Index v) { return e.first < v; });
    return it != coeffs.end() && it->first == id ? it->second : 0.0;
  }

  /// Depth at which every atom is constant on cells (child level of the deepest node).
  int depth() const
  {
    if (coeffs.empty() || coeffs.back().first == 0) return 0;
    return locate_atom(arity, coeffs.back().first).level + 1;
  }

  static BesovVector unit(Side side, int n, Space sp, Index id = 0) { return {side, n, sp, {{id, 1.0}}}; }
};

inline double besov_norm(const BesovVector& v)
{
  double acc = 0.0;
  if (v.space.p() == Integrability::One)
    for (const auto& [id, c] : v.coeffs) acc += std::abs(c);
  else
    for (const auto& [id, c] : v.coeffs) acc = std::max(acc, std::abs(c));
  return acc;
}

inline BesovVector operator-(const BesovVector& a, const BesovVector& b)
{
  BesovVector r{a.side, a.arity, a.space, {}};
  auto i = a.coeffs.begin(), j = b.coeffs.begin();
  while (i != a.coeffs.end() || j != b.coeffs.end()) {
    if (j == b.coeffs.end() || (i != a.coeffs.end() && i->first < j->first)) {
      r.coeffs.push_back(*i++);
    } else if (i == a.coeffs.end() || j->first < i->first) {
      r.coeffs.push_back({j->first, -j->second});
      ++j;
    } else {
      const double d = i->second - j->second;
      if (d != 0.0) r.coeffs.push_back({i->first, d});
      ++i;
      ++j;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Dense transforms.  Inputs and outputs have n^D entries: cell values in tree
// order, coefficients indexed by atom id.

namespace detail {

inline void check_depth(const GoodGrid& g, int D)
{
  if (D > g.depth)
    throw Error(Errc::DepthExhausted, "field depth " + std::to_string(D) + " exceeds grid depth " + std::to_string(g.depth));
}

/// Per-level integrals over nodes: out[d][a] = integral of f over node (d, a).
inline std::vector<std::vector<double>> node_integrals(const GoodGrid& g, int D, const double* f)
{
  const int n = g.arity;
  std::vector<std::vector<double>> I(static_cast<std::size_t>(D) + 1);
  auto& top = I[static_cast<std::size_t>(D)];
  top.resize(ipow(n, D));
  const auto& mD = g.mass[static_cast<std::size_t>(D)];
  for (Index i = 0; i < top.size(); ++i) top[i] = f[i] * mD[i];
  for (int d = D - 1; d >= 0; --d) {
    const auto& below = I[static_cast<std::size_t>(d) + 1];
    auto& cur = I[static_cast<std::size_t>(d)];
    cur.assign(ipow(n, d), 0.0);
    for (Index a = 0; a < cur.size(); ++a)
      for (int c = 0; c < n; ++c) cur[a] += below[a * static_cast<Index>(n) + static_cast<Index>(c)];
  }
  return I;
}

struct PairMasses {
  double L, R, SL, SR;
};

inline PairMasses pair_sums(const SplitNode& s, const double* cm, const double* ci)
{
  PairMasses p{0, 0, 0, 0};
  for (int c = s.lo; c < s.cut; ++c) p.L += cm[c], p.SL += ci[c];
  for (int c = s.cut; c < s.hi; ++c) p.R += cm[c], p.SR += ci[c];
  return p;
}

}  // namespace detail

/// Haar analysis: c_I = mean of f, c_Q = |Q|^{-e} (|R| int_L f - |L| int_R f) / |Q|.
inline void haar_analyze(const GoodGrid& g, int D, double e, const double* f, double* out)
{
  detail::check_depth(g, D);
  const int n = g.arity;
  const auto I = detail::node_integrals(g, D, f);
  out[0] = I[0][0] / g.mass[0][0];
  for (int d = 0; d < D; ++d) {
    const auto& cm = g.mass[static_cast<std::size_t>(d) + 1];
    const auto& ci = I[static_cast<std::size_t>(d) + 1];
    const auto& sp = g.splits[static_cast<std::size_t>(d)];
    const Index base = atom_id(n, d, 0, 0);
    for (Index a = 0; a < ipow(n, d); ++a) {
      for (int k = 0; k < n - 1; ++k) {
        const SplitNode& s = sp[a * static_cast<Index>(n - 1) + static_cast<Index>(k)];
        const auto p = detail::pair_sums(s, &cm[a * static_cast<Index>(n)], &ci[a * static_cast<Index>(n)]);
        const double Q = p.L + p.R;
        out[base + a * static_cast<Index>(n - 1) + static_cast<Index>(k)] = std::pow(Q, -e) * (p.R * p.SL - p.L * p.SR) / Q;
      }
    }
  }
}

/// Inverse of haar_analyze: cell values from coefficients.
inline void haar_synthesize(const GoodGrid& g, int D, double e, const double* c, double* out)
{
  detail::check_depth(g, D);
  const int n = g.arity;
  std::vector<double> cur{c[0]}, next;
  for (int d = 0; d < D; ++d) {
    const auto& cm = g.mass[static_cast<std::size_t>(d) + 1];
    const auto& sp = g.splits[static_cast<std::size_t>(d)];
    const Index base = atom_id(n, d, 0, 0);
    next.assign(cur.size() * static_cast<Index>(n), 0.0);
    for (Index a = 0; a < cur.size(); ++a) {
      double* ch = &next[a * static_cast<Index>(n)];
      for (int j = 0; j < n; ++j) ch[j] = cur[a];
      for (int k = 0; k < n - 1; ++k) {
        const double coef = c[base + a * static_cast<Index>(n - 1) + static_cast<Index>(k)];
        if (coef == 0.0) continue;
        const SplitNode& s = sp[a * static_cast<Index>(n - 1) + static_cast<Index>(k)];
        const double* m = &cm[a * static_cast<Index>(n)];
        double L = 0, R = 0;
        for (int j = s.lo; j < s.cut; ++j) L += m[j];
        for (int j = s.cut; j < s.hi; ++j) R += m[j];
        const double amp = coef * std::pow(L + R, e);
        for (int j = s.lo; j < s.cut; ++j) ch[j] += amp / L;
        for (int j = s.cut; j < s.hi; ++j) ch[j] -= amp / R;
      }
    }
    cur.swap(next);
  }
  std::copy(cur.begin(), cur.end(), out);
}

/// out[id] = integral of a_id g dm for every atom of nodes above level D.
inline void atom_integrals(const GoodGrid& g, int D, double e, const double* f, double* out)
{
  detail::check_depth(g, D);
  const int n = g.arity;
  const auto I = detail::node_integrals(g, D, f);
  out[0] = I[0][0];
  for (int d = 0; d < D; ++d) {
    const auto& cm = g.mass[static_cast<std::size_t>(d) + 1];
    const auto& ci = I[static_cast<std::size_t>(d) + 1];
    const auto& sp = g.splits[static_cast<std::size_t>(d)];
    const Index base = atom_id(n, d, 0, 0);
    for (Index a = 0; a < ipow(n, d); ++a) {
      for (int k = 0; k < n - 1; ++k) {
        const SplitNode& s = sp[a * static_cast<Index>(n - 1) + static_cast<Index>(k)];
        const auto p = detail::pair_sums(s, &cm[a * static_cast<Index>(n)], &ci[a * static_cast<Index>(n)]);
        out[base + a * static_cast<Index>(n - 1) + static_cast<Index>(k)] = std::pow(p.L + p.R, e) * (p.SL / p.L - p.SR / p.R);
      }
    }
  }
}

inline Coeffs sparsify(const std::vector<double>& dense)
{
  Coeffs c;
  for (Index i = 0; i < dense.size(); ++i)
    if (dense[i] != 0.0) c.push_back({i, dense[i]});
  return c;
}

inline std::vector<double> densify(const Coeffs& c, Index size)
{
  std::vector<double> d(size, 0.0);
  for (const auto& [id, v] : c) {
    if (id >= size) throw Error(Errc::ResolutionMismatch, "coefficient deeper than requested resolution");
    d[id] = v;
  }
  return d;
}

inline void check_grid(const GoodGrid& g, Side side, int arity)
{
  if (g.side != side || g.arity != arity) throw Error(Errc::InvalidArgument, "grid does not match the field side/alphabet");
}

inline BesovVector decompose(const StepField& f, Space space, const GoodGrid& g)
{
  check_grid(g, f.side(), f.arity());
  std::vector<double> c(f.size());
  haar_analyze(g, f.depth(), space.exponent(), f.values().data(), c.data());
  return {f.side(), f.arity(), space, sparsify(c)};
}

/// Step field of sum c_Q a_Q at depth max(v.depth(), depth).
inline StepField reconstruct(const BesovVector& v, const GoodGrid& g, int depth = 0)
{
  check_grid(g, v.side, v.arity);
  const int D = std::max(v.depth(), depth);
  const Index size = ipow(v.arity, D);
  const std::vector<double> c = densify(v.coeffs, size);
  std::vector<double> out(size);
  haar_synthesize(g, D, v.space.exponent(), c.data(), out.data());
  return StepField::one_sided(v.side, v.arity, D, std::move(out));
}

inline StepField atom_field(const AtomIndex& idx, const GoodGrid& g)
{
  return reconstruct(BesovVector::unit(idx.side, g.arity, idx.space, idx.id), g);
}

/// Sum c_Q int a_Q g dm, exact at the resolution of g.
inline double duality_pair(const BesovVector& v, const StepField& g, const GoodGrid& grid)
{
  check_grid(grid, g.side(), g.arity());
  std::vector<double> I(g.size());
  atom_integrals(grid, g.depth(), v.space.exponent(), g.values().data(), I.data());
  double acc = 0.0;
  for (const auto& [id, c] : v.coeffs)
    if (id < I.size()) acc += c * I[id];
  return acc;
}

/// Largest |Q|^2 / (|L| |R|) over split pairs of the grid: the constant in
/// |<v, g>| <= C ||v||_{B^{-t}_{1,1}} ||g||_{B^t_{inf,inf}} for the atom
/// normalisation used here.
inline double duality_constant(const GoodGrid& g)
{
  const int n = g.arity;
  double worst = 1.0;
  for (int d = 0; d < g.depth; ++d) {
    const auto& cm = g.mass[static_cast<std::size_t>(d) + 1];
    for (Index a = 0; a < ipow(n, d); ++a)
      for (int k = 0; k < n - 1; ++k) {
        const SplitNode& s = g.splits[static_cast<std::size_t>(d)][a * static_cast<Index>(n - 1) + static_cast<Index>(k)];
        double L = 0, R = 0;
        for (int j = s.lo; j < s.cut; ++j) L += cm[a * static_cast<Index>(n) + static_cast<Index>(j)];
        for (int j = s.cut; j < s.hi; ++j) R += cm[a * static_cast<Index>(n) + static_cast<Index>(j)];
        worst = std::max(worst, (L + R) * (L + R) / (L * R));
      }
  }
  return worst;
}

/// Mass of the smallest common cylinder of two tree-ordered sequences, or 0
/// when they agree down to the grid depth.
inline double grid_metric(std::span<const int> x, std::span<const int> y, const GoodGrid& g)
{
  const int n = g.arity;
  Index a = 0;
  for (int k = 0; k < g.depth; ++k) {
    if (static_cast<std::size_t>(k) >= x.size() || static_cast<std::size_t>(k) >= y.size())
      throw Error(Errc::InsufficientResolution, "sequences exhausted before the grid depth");
    if (x[static_cast<std::size_t>(k)] != y[static_cast<std::size_t>(k)]) return g.mass[static_cast<std::size_t>(k)][a];
    a = a * static_cast<Index>(n) + static_cast<Index>(x[static_cast<std::size_t>(k)]);
  }
  return 0.0;
}

/// Metric between two cells of depth D given by tree addresses.
inline double cell_metric(Index a, Index b, int D, const GoodGrid& g)
{
  if (a == b) return 0.0;
  const auto n = static_cast<Index>(g.arity);
  int k = D;
  while (a != b) {
    a /= n;
    b /= n;
    --k;
  }
  return g.mass[static_cast<std::size_t>(k)][a];
}

/// Coefficients of 1_{P_N} / |P_N| in B^{-t}_{1,1}, P_N the depth-N cylinder
/// containing y (tree order).  Only spine nodes carry coefficients.
inline BesovVector dirac_vector(std::span<const int> y, const GoodGrid& g, double t, int depth = -1)
{
  if (depth < 0) depth = g.depth;
  detail::check_depth(g, depth);
  if (static_cast<int>(y.size()) < depth) throw Error(Errc::InsufficientResolution, "point shorter than the dirac depth");
  const int n = g.arity;
  BesovVector v{g.side, n, Space::b11_neg(t), {{0, 1.0 / g.mass[0][0]}}};
  Index a = 0;
  for (int d = 0; d < depth; ++d) {
    const int c = y[static_cast<std::size_t>(d)];
    const double* cm = &g.mass[static_cast<std::size_t>(d) + 1][a * static_cast<Index>(n)];
    for (int k = 0; k < n - 1; ++k) {
      const SplitNode& s = g.splits[static_cast<std::size_t>(d)][a * static_cast<Index>(n - 1) + static_cast<Index>(k)];
      if (c < s.lo || c >= s.hi) continue;
      double L = 0, R = 0;
      for (int j = s.lo; j < s.cut; ++j) L += cm[j];
      for (int j = s.cut; j < s.hi; ++j) R += cm[j];
      const double Q = L + R;
      const double coef = std::pow(Q, t) * (c < s.cut ? R : -L) / Q;
      if (coef != 0.0) v.coeffs.push_back({atom_id(n, d, a, k), coef});
    }
    a = a * static_cast<Index>(n) + static_cast<Index>(c);
  }
  return v;
}

/// Hoelder seminorm of a locally constant potential in the grid metric:
/// max |psi(a) - psi(b)| / d(a, b)^beta over depth-range cells.
inline double holder_seminorm(const Potential& psi, const GoodGrid& g, double beta)
{
  check_grid(g, psi.side, psi.arity);
  detail::check_depth(g, psi.range);
  double c = 0.0;
  for (Index a = 0; a < psi.table.size(); ++a)
    for (Index b = a + 1; b < psi.table.size(); ++b) {
      const double diff = std::abs(psi.table[a] - psi.table[b]);
      if (diff > 0) c = std::max(c, diff / std::pow(cell_metric(a, b, psi.range, g), beta));
    }
  return c;
}

inline Potential with_seminorm(Potential psi, const GoodGrid& g)
{
  psi.seminorm = holder_seminorm(psi, g, psi.beta);
  return psi;
}

/// Exponents of the anisotropic space with the derived Lebesgue indices
/// r = 1/(1-s) and r* = 1/s.
struct ExponentConfig {
  double s = 0.25;
  double t = 0.5;
  double s_plus = 1.0;   // regularity of phi+
  double t_minus = 1.0;  // regularity of psi-

  double r() const { return 1.0 / (1.0 - s); }
  double r_star() const { return 1.0 / s; }
  bool s_below_ceiling() const { return s < s_plus; }
  bool t_below_ceiling() const { return t < t_minus; }

  /// Throws naming the first violated condition of 0 < s < t < 1.
  void check_anisotropic() const
  {
    if (!(s > 0)) throw Error(Errc::ExponentConstraint, "violated 0 < s (s = " + std::to_string(s) + ")");
    if (!(s < t)) throw Error(Errc::ExponentConstraint, "violated s < t (s = " + std::to_string(s) + ", t = " + std::to_string(t) + ")");
    if (!(t < 1)) throw Error(Errc::ExponentConstraint, "violated t < 1 (t = " + std::to_string(t) + ")");
  }
};

}  // namespace ashift
