#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace ashift {

using Index = std::uint64_t;

enum class Side { Plus, Minus, Product };

inline const char* side_name(Side s)
{
  switch (s) {
    case Side::Plus: return "plus";
    case Side::Minus: return "minus";
    default: return "product";
  }
}

/// Failure categories shared by every module; the CLI maps them to exit codes.
enum class Errc {
  InvalidArgument,
  WindowUnderflow,
  DepthExhausted,
  InsufficientResolution,
  DegenerateMass,
  ExponentConstraint,
  BudgetExhausted,
  NonConvergence,
  ResolutionMismatch,
  NonAdditive,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

inline Index ipow(int n, int d)
{
  Index r = 1;
  for (int i = 0; i < d; ++i) r *= static_cast<Index>(n);
  return r;
}

/// Radix-n address of a digit string, most significant digit first.
inline Index address(std::span<const int> digits, int n)
{
  Index a = 0;
  for (int d : digits) a = a * static_cast<Index>(n) + static_cast<Index>(d);
  return a;
}

inline std::vector<int> digits_of(Index addr, int n, int len)
{
  std::vector<int> out(static_cast<std::size_t>(len));
  for (int i = len - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<int>(addr % static_cast<Index>(n));
    addr /= static_cast<Index>(n);
  }
  return out;
}

/// Runs f(begin, end) over [0, count) split into contiguous chunks.  Each index
/// is handled by exactly one call, so results never depend on the thread count.
template <class F>
void parallel_for(Index count, int threads, F&& f)
{
  if (threads <= 1 || count < 4096) {
    f(Index{0}, count);
    return;
  }
  const Index t = std::min<Index>(static_cast<Index>(threads), count);
  std::vector<std::jthread> pool;
  pool.reserve(t);
  for (Index k = 0; k < t; ++k) {
    const Index b = count * k / t;
    const Index e = count * (k + 1) / t;
    pool.emplace_back([&f, b, e] { f(b, e); });
  }
}

struct Alphabet {
  int size;
  explicit Alphabet(int n) : size(n)
  {
    if (n < 2) throw Error(Errc::InvalidArgument, "alphabet needs at least two symbols");
    if (n > 255) throw Error(Errc::InvalidArgument, "alphabet larger than 255 symbols");
  }
};

/// Finite symbol string.  Plus words read x0 x1 ..., Minus words read
/// y_{-m} ... y_{-1} (index -1 last).
struct Word {
  std::vector<int> symbols;

  Word() = default;
  Word(std::initializer_list<int> s) : symbols(s) {}
  explicit Word(std::vector<int> s) : symbols(std::move(s)) {}

  /// Parses "0110"; only for alphabets of at most ten symbols.
  static Word parse(const std::string& s)
  {
    Word w;
    for (char c : s) {
      if (c < '0' || c > '9') throw Error(Errc::InvalidArgument, "bad symbol in word '" + s + "'");
      w.symbols.push_back(c - '0');
    }
    return w;
  }

  std::size_t size() const { return symbols.size(); }
  bool empty() const { return symbols.empty(); }
  int operator[](std::size_t i) const { return symbols[i]; }
  bool operator==(const Word&) const = default;

  std::string str() const
  {
    std::string s;
    for (int c : symbols) s += std::to_string(c);
    return s;
  }

  void check(const Alphabet& a) const
  {
    for (int c : symbols)
      if (c < 0 || c >= a.size) throw Error(Errc::InvalidArgument, "symbol out of alphabet in word " + str());
  }
};

/// Digits of a one-sided word ordered by distance from the origin: x0 x1 ...
/// on the plus side and y_{-1} y_{-2} ... on the minus side.  Grids, fields and
/// potentials are all indexed in this order.
inline std::vector<int> tree_digits(const Word& w, Side side)
{
  std::vector<int> d = w.symbols;
  if (side == Side::Minus) std::reverse(d.begin(), d.end());
  return d;
}

inline Word word_from_tree(std::vector<int> digits, Side side)
{
  if (side == Side::Minus) std::reverse(digits.begin(), digits.end());
  return Word(std::move(digits));
}

struct Cylinder {
  Side side = Side::Plus;
  Word word;        // Plus or Minus address; plus factor for Product
  Word minus_word;  // Product only

  static Cylinder plus(Word w) { return {Side::Plus, std::move(w), {}}; }
  static Cylinder minus(Word w) { return {Side::Minus, std::move(w), {}}; }
  static Cylinder product(Word p, Word m) { return {Side::Product, std::move(p), std::move(m)}; }

  bool operator==(const Cylinder&) const = default;
};

inline std::vector<Cylinder> cylinder_children(const Cylinder& c, const Alphabet& a)
{
  if (c.side == Side::Product) throw Error(Errc::InvalidArgument, "children of product cylinders are not defined");
  c.word.check(a);
  std::vector<Cylinder> out;
  out.reserve(static_cast<std::size_t>(a.size));
  for (int s = 0; s < a.size; ++s) {
    Word w = c.word;
    if (c.side == Side::Plus)
      w.symbols.push_back(s);
    else
      w.symbols.insert(w.symbols.begin(), s);
    out.push_back({c.side, std::move(w), {}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step fields

/// Function constant on depth-`depth` cylinders.  One-sided fields hold n^depth
/// values indexed by tree address; product fields hold n^(dp+dm) values with
/// index plus_address * n^dm + minus_address.
class StepField {
public:
  StepField() = default;

  static StepField one_sided(Side side, int n, int depth, std::vector<double> values)
  {
    if (side == Side::Product) throw Error(Errc::InvalidArgument, "use StepField::product");
    StepField f;
    f.side_ = side;
    f.n_ = n;
    f.dp_ = depth;
    f.values_ = std::move(values);
    if (f.values_.size() != ipow(n, depth)) throw Error(Errc::InvalidArgument, "step field size mismatch");
    return f;
  }

  static StepField constant(Side side, int n, double c)
  {
    if (side == Side::Product) return product(n, 0, 0, {c});
    return one_sided(side, n, 0, {c});
  }

  static StepField product(int n, int plus_depth, int minus_depth, std::vector<double> values)
  {
    StepField f;
    f.side_ = Side::Product;
    f.n_ = n;
    f.dp_ = plus_depth;
    f.dm_ = minus_depth;
    f.values_ = std::move(values);
    if (f.values_.size() != ipow(n, plus_depth + minus_depth))
      throw Error(Errc::InvalidArgument, "product step field size mismatch");
    return f;
  }

  /// Indicator of a cylinder (one-sided or rectangle) at the cylinder's own depth.
  static StepField indicator(const Cylinder& c, int n)
  {
    if (c.side == Side::Product) {
      const int dp = static_cast<int>(c.word.size());
      const int dm = static_cast<int>(c.minus_word.size());
      std::vector<double> v(ipow(n, dp + dm), 0.0);
      const Index pa = address(tree_digits(c.word, Side::Plus), n);
      const Index ma = address(tree_digits(c.minus_word, Side::Minus), n);
      v[pa * ipow(n, dm) + ma] = 1.0;
      return product(n, dp, dm, std::move(v));
    }
    const int d = static_cast<int>(c.word.size());
    std::vector<double> v(ipow(n, d), 0.0);
    v[address(tree_digits(c.word, c.side), n)] = 1.0;
    return one_sided(c.side, n, d, std::move(v));
  }

  Side side() const { return side_; }
  int arity() const { return n_; }
  int depth() const { return dp_; }
  int plus_depth() const { return dp_; }
  int minus_depth() const { return dm_; }
  Index size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  double operator[](Index i) const { return values_[i]; }

  /// Value at a point given by tree digits (at least depth() of them).
  double at(std::span<const int> digits) const
  {
    if (static_cast<int>(digits.size()) < dp_) throw Error(Errc::InsufficientResolution, "point shorter than field depth");
    return values_[address(digits.first(static_cast<std::size_t>(dp_)), n_)];
  }

  double at(std::span<const int> plus_digits, std::span<const int> minus_digits) const
  {
    if (static_cast<int>(plus_digits.size()) < dp_ || static_cast<int>(minus_digits.size()) < dm_)
      throw Error(Errc::InsufficientResolution, "point shorter than field depth");
    const Index p = address(plus_digits.first(static_cast<std::size_t>(dp_)), n_);
    const Index m = address(minus_digits.first(static_cast<std::size_t>(dm_)), n_);
    return values_[p * ipow(n_, dm_) + m];
  }

  StepField refined(int depth) const
  {
    if (side_ == Side::Product) throw Error(Errc::InvalidArgument, "use refined(plus, minus) for product fields");
    if (depth < dp_) throw Error(Errc::InvalidArgument, "cannot coarsen by refinement");
    const Index k = ipow(n_, depth - dp_);
    std::vector<double> v(values_.size() * k);
    for (Index i = 0; i < values_.size(); ++i) std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(i * k), k, values_[i]);
    return one_sided(side_, n_, depth, std::move(v));
  }

  StepField refined(int plus_depth, int minus_depth) const
  {
    if (side_ != Side::Product) throw Error(Errc::InvalidArgument, "refined(plus, minus) needs a product field");
    if (plus_depth < dp_ || minus_depth < dm_) throw Error(Errc::InvalidArgument, "cannot coarsen by refinement");
    if (plus_depth == dp_ && minus_depth == dm_) return *this;
    const Index kp = ipow(n_, plus_depth - dp_);
    const Index km = ipow(n_, minus_depth - dm_);
    const Index old_m = ipow(n_, dm_);
    const Index new_m = ipow(n_, minus_depth);
    std::vector<double> v(values_.size() * kp * km);
    for (Index p = 0; p < ipow(n_, plus_depth); ++p) {
      const Index op = p / kp;
      for (Index m = 0; m < new_m; ++m) v[p * new_m + m] = values_[op * old_m + m / km];
    }
    return product(n_, plus_depth, minus_depth, std::move(v));
  }

  /// Product field of a(x) b(y).
  static StepField tensor(const StepField& a, const StepField& b)
  {
    if (a.side_ != Side::Plus || b.side_ != Side::Minus) throw Error(Errc::InvalidArgument, "tensor needs a plus and a minus field");
    if (a.n_ != b.n_) throw Error(Errc::InvalidArgument, "alphabet mismatch");
    std::vector<double> v(a.values_.size() * b.values_.size());
    for (Index p = 0; p < a.values_.size(); ++p)
      for (Index m = 0; m < b.values_.size(); ++m) v[p * b.values_.size() + m] = a.values_[p] * b.values_[m];
    return product(a.n_, a.dp_, b.dp_, std::move(v));
  }

  template <class Op>
  static StepField combine(const StepField& a, const StepField& b, Op op)
  {
    if (a.side_ != b.side_) throw Error(Errc::InvalidArgument, "step field sides differ");
    if (a.n_ != b.n_) throw Error(Errc::InvalidArgument, "alphabet mismatch");
    StepField x, y;
    if (a.side_ == Side::Product) {
      const int dp = std::max(a.dp_, b.dp_), dm = std::max(a.dm_, b.dm_);
      x = a.refined(dp, dm);
      y = b.refined(dp, dm);
    } else {
      const int d = std::max(a.dp_, b.dp_);
      x = a.refined(d);
      y = b.refined(d);
    }
    for (Index i = 0; i < x.values_.size(); ++i) x.values_[i] = op(x.values_[i], y.values_[i]);
    return x;
  }

  friend StepField operator+(const StepField& a, const StepField& b) { return combine(a, b, std::plus<>{}); }
  friend StepField operator-(const StepField& a, const StepField& b) { return combine(a, b, std::minus<>{}); }
  friend StepField operator*(const StepField& a, const StepField& b) { return combine(a, b, std::multiplies<>{}); }

  StepField scaled(double c) const
  {
    StepField r = *this;
    for (double& v : r.values_) v *= c;
    return r;
  }

  std::vector<double>& mutable_values() { return values_; }

private:
  Side side_ = Side::Plus;
  int n_ = 2;
  int dp_ = 0;
  int dm_ = 0;
  std::vector<double> values_{0.0};
};

enum class BranchForm {
  Precompose,  // x -> f(sigma_w^{-1} x), depth drops by |w|
  Restrict,    // x -> f(sigma^{|w|} x) 1_{C(w)}(x), depth grows by |w|
};

/// Composition of a one-sided step field with an inverse branch or with the
/// restricted iterate of the shift.  `w` is given in the side's storage order.
inline StepField step_compose_branch(const StepField& f, const Word& w, BranchForm form)
{
  if (f.side() == Side::Product) throw Error(Errc::InvalidArgument, "branch composition acts on one-sided fields");
  const int n = f.arity();
  const int l = static_cast<int>(w.size());
  const std::vector<int> wd = tree_digits(w, f.side());
  const Index wa = address(wd, n);
  if (form == BranchForm::Precompose) {
    if (l > f.depth())
      throw Error(Errc::DepthExhausted, "branch word longer than field depth (" + std::to_string(l) + " > " + std::to_string(f.depth()) + ")");
    const int d = f.depth() - l;
    const Index m = ipow(n, d);
    std::vector<double> v(f.values().begin() + static_cast<std::ptrdiff_t>(wa * m),
                          f.values().begin() + static_cast<std::ptrdiff_t>((wa + 1) * m));
    return StepField::one_sided(f.side(), n, d, std::move(v));
  }
  const int d = f.depth() + l;
  const Index m = ipow(n, f.depth());
  std::vector<double> v(ipow(n, d), 0.0);
  std::copy(f.values().begin(), f.values().end(), v.begin() + static_cast<std::ptrdiff_t>(wa * m));
  return StepField::one_sided(f.side(), n, d, std::move(v));
}

// ---------------------------------------------------------------------------
// Bilateral points

/// How a BiPoint materialises symbols outside its current window.  Symbols are
/// a pure function of (position, earlier symbols on the same side), so a
/// point can be copied and extended without shared mutable state.
struct ExtensionPolicy {
  using Next = std::function<int(Side side, Index position, const std::vector<int>& tape)>;

  enum class Kind { None, Periodic, Sampled } kind = Kind::None;
  std::vector<int> plus_period, minus_period;
  Next next;

  static ExtensionPolicy none() { return {}; }

  static ExtensionPolicy periodic(std::vector<int> plus_tail, std::vector<int> minus_tail)
  {
    if (plus_tail.empty() || minus_tail.empty()) throw Error(Errc::InvalidArgument, "periodic tail must be nonempty");
    ExtensionPolicy p;
    p.kind = Kind::Periodic;
    p.plus_period = std::move(plus_tail);
    p.minus_period = std::move(minus_tail);
    return p;
  }

  static ExtensionPolicy sampled(Next next)
  {
    ExtensionPolicy p;
    p.kind = Kind::Sampled;
    p.next = std::move(next);
    return p;
  }

  int symbol(Side side, Index position, const std::vector<int>& tape) const
  {
    switch (kind) {
      case Kind::Periodic: {
        const auto& per = side == Side::Plus ? plus_period : minus_period;
        return per[position % per.size()];
      }
      case Kind::Sampled: return next(side, position, tape);
      default: throw Error(Errc::WindowUnderflow, "window underflow: no extension policy");
    }
  }
};

enum class Direction { Forward, Backward };

/// Point (x, y) of the bilateral shift at finite precision.  Symbols are kept
/// on two absolute tapes a_0 a_1 ... (plus) and a_{-1} a_{-2} ... (minus); the
/// point sits at origin o, so x_i = a_{o+i} and y_{-j} = a_{o-j}.
class BiPoint {
public:
  BiPoint() = default;

  /// x = x0 x1 ..., y given as y_{-m} ... y_{-1} (index -1 last).
  BiPoint(std::vector<int> x, const Word& y, ExtensionPolicy policy = {})
      : plus_(std::make_shared<const std::vector<int>>(std::move(x))),
        minus_(std::make_shared<const std::vector<int>>(tree_digits(y, Side::Minus))),
        policy_(std::make_shared<const ExtensionPolicy>(std::move(policy)))
  {
  }

  /// Materialised window [-m, k] relative to the current origin.
  long lo() const { return -static_cast<long>(minus_->size()) - origin_; }
  long hi() const { return static_cast<long>(plus_->size()) - 1 - origin_; }

  bool has(long i) const { return i >= lo() && i <= hi(); }

  /// x_i for i >= 0, y_i for i < 0.
  int at(long i) const
  {
    if (!has(i)) throw Error(Errc::WindowUnderflow, "coordinate " + std::to_string(i) + " outside the window");
    const long p = origin_ + i;
    return p >= 0 ? (*plus_)[static_cast<std::size_t>(p)] : (*minus_)[static_cast<std::size_t>(-p - 1)];
  }

  /// Copy whose window covers coordinate i, extending the tapes via the policy.
  BiPoint covering(long i) const
  {
    if (has(i)) return *this;
    BiPoint r = *this;
    const long p = origin_ + i;
    if (p >= 0) {
      const std::size_t need = static_cast<std::size_t>(p) + 1;
      r.plus_ = extend(*plus_, Side::Plus, std::max(need, 2 * plus_->size() + 8));
    } else {
      const std::size_t need = static_cast<std::size_t>(-p);
      r.minus_ = extend(*minus_, Side::Minus, std::max(need, 2 * minus_->size() + 8));
    }
    return r;
  }

  /// First `len` plus coordinates (x0 ...) and minus coordinates in tree order (y_{-1} ...).
  std::vector<int> x_digits(int len) const
  {
    std::vector<int> d(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) d[static_cast<std::size_t>(i)] = at(i);
    return d;
  }

  std::vector<int> y_digits(int len) const
  {
    std::vector<int> d(static_cast<std::size_t>(len));
    for (int j = 0; j < len; ++j) d[static_cast<std::size_t>(j)] = at(-1 - j);
    return d;
  }

  long origin() const { return origin_; }

private:
  friend BiPoint skew_apply(const BiPoint&, Direction);

  std::shared_ptr<const std::vector<int>> extend(const std::vector<int>& tape, Side side, std::size_t len) const
  {
    auto t = std::make_shared<std::vector<int>>(tape);
    t->reserve(len);
    while (t->size() < len) t->push_back(policy_->symbol(side, t->size(), *t));
    return t;
  }

  std::shared_ptr<const std::vector<int>> plus_ = std::make_shared<const std::vector<int>>();
  std::shared_ptr<const std::vector<int>> minus_ = std::make_shared<const std::vector<int>>();
  std::shared_ptr<const ExtensionPolicy> policy_ = std::make_shared<const ExtensionPolicy>();
  long origin_ = 0;
};

/// Forward: (x, y) -> (sigma x, y x0).  Backward: (x, y) -> (y_{-1} x, sigma y).
inline BiPoint skew_apply(const BiPoint& p, Direction dir)
{
  BiPoint r = p.covering(dir == Direction::Forward ? 0 : -1);
  r.origin_ += dir == Direction::Forward ? 1 : -1;
  // keep x0 and y_{-1} materialised so the result is non-degenerate
  return r.covering(0).covering(-1);
}

}  // namespace ashift
