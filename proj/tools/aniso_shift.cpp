// aniso-shift: batch driver for the experiments of the library.
//
//   aniso-shift validate <config>
//   aniso-shift run <config> [--out dir] [--seed u64] [--threads n]
//
// Exit status: 0 success, 1 I/O failure, 2 constraint violation, 3 non-convergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "aniso_shift/aniso_shift.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using json = nlohmann::ordered_json;
using namespace ashift;

namespace {

enum Exit { Ok = 0, IoFailure = 1, Constraint = 2, NoConvergence = 3 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kExperiments{"gibbs", "grid", "spectrum", "decay", "correlation", "graph", "srb"};

// ---------------------------------------------------------------------------
// Config

std::vector<double> parse_numbers(const std::string& text)
{
  std::string s = text;
  for (char& c : s)
    if (c == ',' || c == ';') c = ' ';
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ConfigError("not a number: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep)
{
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + sep) {
    if (c != sep) {
      cur += c;
      continue;
    }
    const auto a = cur.find_first_not_of(" \t"), b = cur.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(cur.substr(a, b - a + 1));
    cur.clear();
  }
  return out;
}

struct PotentialSpec {
  std::string text;  // as written, for the header block
  Potential pot;
};

/// "uniform", "constant:<c>", "bernoulli:<w...>", "markov:<row-major weights>",
/// or an explicit table given by the `range` and `table` keys.
Potential make_potential(Side side, int n, const std::string& preset)
{
  const auto colon = preset.find(':');
  const std::string name = preset.substr(0, colon);
  const std::vector<double> args = colon == std::string::npos ? std::vector<double>{} : parse_numbers(preset.substr(colon + 1));
  if (name == "uniform" && args.empty()) return Potential::uniform(side, n);
  if (name == "constant" && args.size() == 1) return Potential::constant(side, n, args[0]);
  if (name == "bernoulli") {
    if (args.size() != static_cast<std::size_t>(n)) throw ConfigError("bernoulli preset needs " + std::to_string(n) + " weights");
    return Potential::bernoulli(side, args);
  }
  if (name == "markov") {
    if (args.size() != static_cast<std::size_t>(n * n)) throw ConfigError("markov preset needs " + std::to_string(n * n) + " weights");
    return Potential::markov(side, n, args);
  }
  throw ConfigError("unknown potential preset '" + preset + "'");
}

PotentialSpec read_potential(const pt::ptree& tree, const std::string& section, Side side, int n)
{
  const auto sec = tree.get_child_optional(section);
  if (!sec) throw ConfigError("missing section [" + section + "]");
  PotentialSpec spec;
  const auto preset = sec->get_optional<std::string>("preset");
  const auto table = sec->get_optional<std::string>("table");
  if (preset && table) throw ConfigError("[" + section + "] gives both preset and table");
  if (preset) {
    spec.text = *preset;
    spec.pot = make_potential(side, n, *preset);
  } else if (table) {
    const int range = sec->get<int>("range", 1);
    spec.pot = Potential(side, n, range, parse_numbers(*table));
    spec.text = "table range " + std::to_string(range) + ": " + *table;
  } else {
    throw ConfigError("[" + section + "] needs preset or table");
  }
  spec.pot.beta = sec->get<double>("beta", 1.0);
  if (!(spec.pot.beta > 0 && spec.pot.beta <= 1)) throw ConfigError("[" + section + "] violated 0 < beta <= 1");
  return spec;
}

struct Config {
  std::string path;
  std::string hash;
  pt::ptree tree;
  std::string experiment;
  int alphabet = 2;
  std::uint64_t seed = 0;
  std::string out = "results";
  double s = 0.25, t = 0.5, beta = 1.0, epsilon = -1.0;
  int plus_depth = 8, minus_depth = 8;
  PotentialSpec phi_plus, psi_minus;
  double fp_tol = 1e-10;
  int fp_max_iter = 50;
  bool fp_marginal = true;

  template <class T>
  T param(const std::string& key, T fallback) const
  {
    return tree.get<T>(experiment + "." + key, fallback);
  }
  std::optional<std::string> param_text(const std::string& key) const
  {
    const auto v = tree.get_optional<std::string>(experiment + "." + key);
    return v ? std::optional<std::string>(*v) : std::nullopt;
  }
};

std::string sha256_hex(const std::string& bytes)
{
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw IoError("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

Config load_config(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  Config c;
  c.path = path;
  c.hash = sha256_hex(buf.str());
  try {
    std::istringstream text(buf.str());
    pt::read_ini(text, c.tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  try {
    c.experiment = c.tree.get<std::string>("experiment");
    if (std::find(kExperiments.begin(), kExperiments.end(), c.experiment) == kExperiments.end())
      throw ConfigError("unknown experiment '" + c.experiment + "'");
    c.alphabet = c.tree.get<int>("alphabet", 2);
    if (c.alphabet < 2 || c.alphabet > 9) throw ConfigError("alphabet size must lie in 2..9");
    c.seed = c.tree.get<std::uint64_t>("seed", 0);
    c.out = c.tree.get<std::string>("out", c.out);
    c.s = c.tree.get<double>("exponents.s");
    c.t = c.tree.get<double>("exponents.t");
    c.beta = c.tree.get<double>("exponents.beta", 1.0);
    c.epsilon = c.tree.get<double>("exponents.epsilon", -1.0);
    c.plus_depth = c.tree.get<int>("depths.plus", 8);
    c.minus_depth = c.tree.get<int>("depths.minus", 8);
    c.fp_tol = c.tree.get<double>("fixed_point.tol", 1e-10);
    c.fp_max_iter = c.tree.get<int>("fixed_point.max_iter", 50);
    const std::string norm = c.tree.get<std::string>("fixed_point.norm", "marginal");
    if (norm != "marginal" && norm != "anisotropic") throw ConfigError("fixed_point.norm must be marginal or anisotropic");
    c.fp_marginal = norm == "marginal";
  } catch (const pt::ptree_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.phi_plus = read_potential(c.tree, "phi_plus", Side::Plus, c.alphabet);
  c.psi_minus = read_potential(c.tree, "psi_minus", Side::Minus, c.alphabet);
  return c;
}

// ---------------------------------------------------------------------------
// Constraints

void require(bool ok, const std::string& condition, const std::string& values)
{
  if (!ok) throw Error(Errc::ExponentConstraint, "violated " + condition + " (" + values + ")");
}

std::string num(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double graph_epsilon(const Config& c) { return c.epsilon < 0 ? (c.beta * c.t - c.s) / 2 : c.epsilon; }

void check_constraints(const Config& c)
{
  ExponentConfig{c.s, c.t}.check_anisotropic();
  require(c.s < c.phi_plus.pot.beta, "s < beta(phi+)", "s = " + num(c.s) + ", beta(phi+) = " + num(c.phi_plus.pot.beta));
  require(c.t < c.psi_minus.pot.beta, "t < beta(psi-)", "t = " + num(c.t) + ", beta(psi-) = " + num(c.psi_minus.pot.beta));
  auto depth_ok = [](int d, int range, const char* name) {
    if (d < range || d > 24) throw Error(Errc::InvalidArgument, std::string("depths.") + name + " must lie in [range, 24]");
  };
  depth_ok(c.plus_depth, c.phi_plus.pot.range, "plus");
  depth_ok(c.minus_depth, c.psi_minus.pot.range, "minus");
  if (!(c.fp_tol > 0) || c.fp_max_iter < 1) throw ConfigError("fixed_point.tol and fixed_point.max_iter must be positive");
  if (c.experiment == "graph") {
    require(c.beta > 0 && c.beta <= 1, "0 < beta <= 1", "beta = " + num(c.beta));
    require(c.s < c.beta * c.t, "s < beta t", "s = " + num(c.s) + ", beta t = " + num(c.beta * c.t));
    const double e = graph_epsilon(c);
    require(e > 0 && e < c.beta * c.t - c.s, "0 < epsilon < beta t - s",
            "epsilon = " + num(e) + ", beta t - s = " + num(c.beta * c.t - c.s));
  }
}

// ---------------------------------------------------------------------------
// Output

struct Header {
  std::vector<std::pair<std::string, std::string>> fields;
};

Header make_header(const Config& c)
{
  Header h;
  h.fields = {{"config_sha256", c.hash},
              {"experiment", c.experiment},
              {"seed", std::to_string(c.seed)},
              {"alphabet", std::to_string(c.alphabet)},
              {"depth_plus", std::to_string(c.plus_depth)},
              {"depth_minus", std::to_string(c.minus_depth)},
              {"s", num(c.s)},
              {"t", num(c.t)},
              {"beta", num(c.beta)},
              {"epsilon", c.experiment == "graph" ? num(graph_epsilon(c)) : "unused"},
              {"phi_plus", c.phi_plus.text + " (beta " + num(c.phi_plus.pot.beta) + ")"},
              {"psi_minus", c.psi_minus.text + " (beta " + num(c.psi_minus.pot.beta) + ")"}};
  return h;
}

std::string cell(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class Csv {
public:
  Csv(const fs::path& path, const Header& h, const std::vector<std::string>& columns) : out_(path, std::ios::binary), path_(path)
  {
    if (!out_) throw IoError("cannot write " + path.string());
    for (const auto& [k, v] : h.fields) out_ << "# " << k << ": " << v << '\n';
    row(columns);
  }

  void row(const std::vector<std::string>& cells)
  {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    if (!out_) throw IoError("write failed on " + path_.string());
  }

private:
  std::ofstream out_;
  fs::path path_;
};

void write_json(const fs::path& path, const Header& h, json results)
{
  json doc;
  json head = json::object();
  for (const auto& [k, v] : h.fields) head[k] = v;
  doc["header"] = head;
  doc["results"] = std::move(results);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed on " + path.string());
}

json fit_json(const GeometricFit& f)
{
  return {{"rate", f.rate}, {"C", f.C}, {"points", f.points}, {"exact", f.exact}};
}

// ---------------------------------------------------------------------------
// Experiments

struct Run {
  const Config& cfg;
  fs::path dir;
  Header header;
  SolveOptions solve_opt;

  fs::path file(const std::string& name) const { return dir / name; }

  TransferConfig transfer() const
  {
    return make_transfer(cfg.phi_plus.pot, cfg.psi_minus.pot, {cfg.s, cfg.t}, cfg.plus_depth, cfg.minus_depth, solve_opt);
  }

  /// Fixed point of L; under the marginal criterion the last plus-marginal
  /// increment must fall below the tolerance, else the anisotropic one.
  FixedPointTrace fixed_point_trace(const TransferConfig& tc) const
  {
    FixedPointTrace tr = iterate_fixed_point(tc, {cfg.fp_tol, cfg.fp_max_iter, cfg.fp_marginal});
    if (!tr.converged)
      throw NotConverged("fixed point did not converge in the " + std::string(cfg.fp_marginal ? "marginal" : "anisotropic") +
                         " norm after " + std::to_string(tr.iterations) + " iterations (" +
                         (tr.budget_hit ? "minus depth budget reached" : "iteration cap") + "); last increment " +
                         num(cfg.fp_marginal && !tr.marginal_increments.empty() ? tr.marginal_increments.back() : tr.last_increment()) +
                         ", tolerance " + num(cfg.fp_tol));
    return tr;
  }

  void write_trace(const FixedPointTrace& tr) const
  {
    Csv csv(file("fixed_point.csv"), header, {"iteration", "increment", "marginal_increment"});
    for (std::size_t k = 0; k < tr.increments.size(); ++k)
      csv.row({std::to_string(k + 1), cell(tr.increments[k]), cell(tr.marginal_increments[k])});
  }

  json trace_json(const FixedPointTrace& tr) const
  {
    return {{"criterion", cfg.fp_marginal ? "marginal" : "anisotropic"},
            {"tolerance", cfg.fp_tol},
            {"iterations", tr.iterations},
            {"budget_hit", tr.budget_hit},
            {"last_increment", tr.last_increment()},
            {"last_marginal_increment", tr.marginal_increments.empty() ? 0.0 : tr.marginal_increments.back()}};
  }

  void gibbs() const
  {
    const std::string side = cfg.param<std::string>("side", "plus");
    if (side != "plus" && side != "minus") throw ConfigError("gibbs.side must be plus or minus");
    const Potential& pot = side == "plus" ? cfg.phi_plus.pot : cfg.psi_minus.pot;
    const int depth = side == "plus" ? cfg.plus_depth : cfg.minus_depth;
    const RPFData d = solve(pot, depth, solve_opt);
    const GibbsCertificate cert = verify_gibbs(d, pot);

    Csv csv(file("gibbs.csv"), header, {"level", "word", "reference_mass", "gibbs_mass"});
    for (int k = 0; k <= depth; ++k)
      for (Index a = 0; a < ipow(d.arity, k); ++a) {
        const Word w = word_from_tree(digits_of(a, d.arity, k), d.side);
        csv.row({std::to_string(k), w.str(), cell(d.ref(w)), cell(d.gibbs(w))});
      }
    write_json(file("gibbs.json"), header,
               {{"side", side},
                {"depth", depth},
                {"pressure", d.pressure},
                {"iterations", d.iterations},
                {"rho_min", d.rho_min()},
                {"rho_max", d.rho_max()},
                {"gibbs_ratio_min", cert.c_low},
                {"gibbs_ratio_max", cert.c_high},
                {"max_ergodic_average", max_ergodic_average(pot)}});
  }

  void grid() const
  {
    const TransferConfig tc = transfer();
    Csv csv(file("grid.csv"), header, {"side", "level", "word", "mass", "splits"});
    json sides = json::object();
    for (const GoodGrid* g : {&tc.grid_plus, &tc.grid_minus}) {
      for (int k = 0; k <= g->depth; ++k)
        for (Index a = 0; a < ipow(g->arity, k); ++a) {
          std::string sp;
          if (k < g->depth)
            for (const SplitNode& s : haar_split(*g, k, a).pairs)
              sp += (sp.empty() ? "" : " ") + std::to_string(s.lo) + ":" + std::to_string(s.cut) + ":" + std::to_string(s.hi);
          csv.row({side_name(g->side), std::to_string(k), word_from_tree(digits_of(a, g->arity, k), g->side).str(), cell(g->node_mass(k, a)), sp});
        }
      const Potential& pot = g->side == Side::Plus ? tc.phi_plus : tc.psi_minus;
      sides[side_name(g->side)] = {{"depth", g->depth},
                                   {"lambda1", g->lambda1},
                                   {"lambda2", g->lambda2},
                                   {"duality_constant", duality_constant(*g)},
                                   {"potential_seminorm", holder_seminorm(pot, *g, pot.beta)}};
    }
    write_json(file("grid.json"), header,
               {{"raw_pressure_plus", tc.raw_pressure_plus}, {"raw_pressure_minus", tc.raw_pressure_minus}, {"grids", sides}});
  }

  void spectrum() const
  {
    const TransferConfig tc = transfer();
    const int K = cfg.param<int>("K", 6), probe = cfg.param<int>("probe_depth", 2);
    if (K < 1 || probe < 0 || probe > cfg.plus_depth) throw ConfigError("spectrum.K must be positive and probe_depth within depths.plus");
    const std::vector<double> prof = norm_profile(tc, K, probe);
    Csv csv(file("spectrum.csv"), header, {"k", "norm_lower_bound"});
    for (std::size_t k = 0; k < prof.size(); ++k) csv.row({std::to_string(k), cell(prof[k])});
    const FixedPointTrace tr = fixed_point_trace(tc);
    write_trace(tr);
    write_json(file("spectrum.json"), header,
               {{"essential_radius_bound", essential_radius_bound(tc)},
                {"max_ergodic_average_plus", max_ergodic_average(tc.phi_plus)},
                {"max_ergodic_average_minus", max_ergodic_average(tc.psi_minus)},
                {"raw_pressure_plus", tc.raw_pressure_plus},
                {"raw_pressure_minus", tc.raw_pressure_minus},
                {"norm_profile_max", *std::max_element(prof.begin(), prof.end())},
                {"fixed_point", trace_json(tr)}});
  }

  /// Entries "p,m,c" separated by ';' (product atom ids); the root entry sets the mass.
  AnisoVector perturbation(const TransferConfig& tc) const
  {
    const std::string text = cfg.param<std::string>("perturbation", "0,0,1; 0,1,0.1; 1,0,0.2; 2,0,0.1");
    AnisoVector v{tc.arity(), cfg.s, cfg.t, {}};
    for (const std::string& e : split(text, ';')) {
      const std::vector<double> x = parse_numbers(e);
      if (x.size() != 3 || x[0] < 0 || x[1] < 0) throw ConfigError("decay.perturbation entries are 'plus_id,minus_id,coefficient'");
      v.entries.push_back({static_cast<Index>(x[0]), static_cast<Index>(x[1]), x[2]});
    }
    return v;
  }

  void decay() const
  {
    const TransferConfig tc = transfer();
    const int K = cfg.param<int>("K", 12);
    if (K < 2) throw ConfigError("decay.K must be at least 2");
    const FixedPointTrace tr = fixed_point_trace(tc);
    write_trace(tr);
    const SpectralReport r = decay_rate(tc, perturbation(tc), K, tr.nu);
    Csv csv(file("decay.csv"), header, {"k", "e_k", "e_marginal_k", "ratio", "ratio_marginal"});
    for (std::size_t k = 0; k < r.e.size(); ++k)
      csv.row({std::to_string(k), cell(r.e[k]), cell(r.e_marginal[k]), k ? cell(r.e[k] / r.e[k - 1]) : "",
               k ? cell(r.e_marginal[k] / r.e_marginal[k - 1]) : ""});
    write_json(file("decay.json"), header,
               {{"K", K},
                {"lambda_hat", r.fit.rate},
                {"lambda_hat_marginal", r.fit_marginal.rate},
                {"fit", fit_json(r.fit)},
                {"fit_marginal", fit_json(r.fit_marginal)},
                {"second_eigen_oracle", r.second_eigen_oracle},
                {"essential_radius_bound", r.essential_bound},
                {"rate_below_essential", r.rate_below_essential},
                {"rate_below_oracle", r.rate_below_oracle},
                {"bounded_by_fit", r.bounded_by_fit},
                {"fixed_point", trace_json(tr)}});
  }

  /// "one", "x<i>" (value of the plus digit x_i), "y<j>" (value of y_{-j}),
  /// or "rect:<minus word>|<plus word>".
  StepField observable(const std::string& spec) const
  {
    const int n = cfg.alphabet;
    auto build = [&](int dp, int dm, auto value) {
      std::vector<double> v(ipow(n, dp + dm));
      for (Index p = 0; p < ipow(n, dp); ++p)
        for (Index m = 0; m < ipow(n, dm); ++m) v[p * ipow(n, dm) + m] = value(digits_of(p, n, dp), digits_of(m, n, dm));
      return StepField::product(n, dp, dm, std::move(v));
    };
    if (spec == "one") return StepField::product(n, 0, 0, {1.0});
    if (spec.size() >= 2 && (spec[0] == 'x' || spec[0] == 'y') && spec.find_first_not_of("0123456789", 1) == std::string::npos) {
      const int i = std::stoi(spec.substr(1));
      if (spec[0] == 'x') return build(i + 1, 0, [i](const auto& x, const auto&) { return static_cast<double>(x[static_cast<std::size_t>(i)]); });
      if (i < 1) throw ConfigError("minus coordinates start at y1 (y_{-1})");
      return build(0, i, [i](const auto&, const auto& y) { return static_cast<double>(y[static_cast<std::size_t>(i - 1)]); });
    }
    if (spec.rfind("rect:", 0) == 0) {
      const Rectangle r = rectangle(spec.substr(5));
      const std::vector<int> yt = tree_digits(r.minus, Side::Minus);
      return build(static_cast<int>(r.plus.size()), static_cast<int>(yt.size()),
                   [&](const auto& x, const auto& y) { return x == r.plus.symbols && y == yt ? 1.0 : 0.0; });
    }
    throw ConfigError("unknown observable '" + spec + "'");
  }

  Rectangle rectangle(const std::string& text) const
  {
    const auto bar = text.find('|');
    if (bar == std::string::npos) throw ConfigError("rectangle '" + text + "' needs the form <minus>|<plus>");
    Rectangle r{Word::parse(text.substr(bar + 1)), Word::parse(text.substr(0, bar))};
    r.plus.check(Alphabet{cfg.alphabet});
    r.minus.check(Alphabet{cfg.alphabet});
    return r;
  }

  void correlation_run() const
  {
    const TransferConfig tc = transfer();
    const int K = cfg.param<int>("K", 8);
    if (K < 1) throw ConfigError("correlation.K must be positive");
    const std::string rs = cfg.param<std::string>("rho", "x0"), gs = cfg.param<std::string>("gamma", "x0");
    const StepField rho = observable(rs), gamma = observable(gs);
    const FixedPointTrace tr = fixed_point_trace(tc);
    write_trace(tr);
    const int need = std::max(tr.nu.minus_depth(), rho.minus_depth()) + K + tc.psi_minus.range - 1;
    if (need > tc.minus_budget())
      throw Error(Errc::BudgetExhausted, "correlations need depths.minus >= " + std::to_string(need) + " (fixed point depth " +
                                             std::to_string(tr.nu.minus_depth()) + " + K); raise depths.minus or fixed_point.tol");
    const MultiplierField mrho = make_multiplier(rho, cfg.t, tc.grid_plus, tc.grid_minus);
    const double mean_rho = evaluate(tr.nu, rho, tc.grid_plus, tc.grid_minus);
    const double mean_gamma = evaluate(tr.nu, gamma, tc.grid_plus, tc.grid_minus);
    const bool with_direct = cfg.param<bool>("direct", true);

    Csv csv(file("correlation.csv"), header, {"k", "correlation", "centred", "direct", "ratio"});
    std::vector<double> centred;
    for (int k = 0; k <= K; ++k) {
      const double c = correlation(tc, tr.nu, mrho, gamma, k);
      centred.push_back(c - mean_rho * mean_gamma);
      const bool direct_ok = with_direct && gamma.plus_depth() + k <= tc.plus_budget();
      csv.row({std::to_string(k), cell(c), cell(centred.back()), direct_ok ? cell(direct_correlation(tc, tr.nu, rho, gamma, k)) : "",
               k && centred[static_cast<std::size_t>(k) - 1] != 0.0 ? cell(centred.back() / centred[static_cast<std::size_t>(k) - 1]) : ""});
    }
    std::vector<double> mag;
    for (double c : centred) mag.push_back(std::abs(c));
    write_json(file("correlation.json"), header,
               {{"rho", rs},
                {"gamma", gs},
                {"K", K},
                {"mean_rho", mean_rho},
                {"mean_gamma", mean_gamma},
                {"fit", fit_json(fit_geometric(mag, 1, static_cast<std::size_t>(K)))},
                {"fixed_point", trace_json(tr)}});
  }

  /// "shift" copies plus digits into minus digits, "two-valued" sends the
  /// halves x0 = 0 / x0 != 0 to 0...0 / (n-1)...(n-1), "constant" sends every
  /// cell to 0...0, "random" draws targets from the seed.
  HolderMap holder_map(int Np, int Nm) const
  {
    const std::string kind = cfg.param<std::string>("map", "two-valued");
    const int n = cfg.alphabet;
    const Index P = ipow(n, Np), M = ipow(n, Nm), half = ipow(n, Np - 1);
    HolderMap u{Np, Nm, {}, cfg.beta};
    for (Index q = 0; q < P; ++q) {
      if (kind == "shift")
        u.target.push_back(Np >= Nm ? q / ipow(n, Np - Nm) : q * ipow(n, Nm - Np));
      else if (kind == "two-valued")
        u.target.push_back(q < half ? 0 : M - 1);
      else if (kind == "constant")
        u.target.push_back(0);
      else if (kind == "random")
        u.target.push_back(std::min(M - 1, static_cast<Index>(counter_uniform(cfg.seed, 7, q) * static_cast<double>(M))));
      else
        throw ConfigError("graph.map must be shift, two-valued, constant or random");
    }
    return u;
  }

  void graph() const
  {
    const TransferConfig tc = transfer();
    const int Np = cfg.param<int>("plus_depth", cfg.plus_depth), Nm = cfg.param<int>("minus_depth", cfg.minus_depth);
    if (Np < 1 || Nm < 1 || Np > cfg.plus_depth || Nm > cfg.minus_depth)
      throw Error(Errc::ResolutionMismatch, "graph depths must lie in 1..depths.plus and 1..depths.minus");
    const HolderMap u = certify_holder_map(holder_map(Np, Nm), tc.grid_plus, tc.grid_minus);
    const GraphMeasureResult r = graph_measure(u, BesovVector::unit(Side::Plus, cfg.alphabet, Space::b11(cfg.s)), tc.grid_plus,
                                               tc.grid_minus, cfg.s, cfg.t, graph_epsilon(cfg));
    Csv csv(file("graph.csv"), header, {"k", "increment"});
    for (std::size_t k = 0; k < r.increments.size(); ++k) csv.row({std::to_string(k), cell(r.increments[k])});
    write_json(file("graph.json"), header,
               {{"map", cfg.param<std::string>("map", "two-valued")},
                {"plus_depth", Np},
                {"minus_depth", Nm},
                {"map_seminorm", u.seminorm},
                {"epsilon", r.epsilon},
                {"rate_bound", std::pow(2.0, -(cfg.beta * cfg.t - cfg.s - r.epsilon))},
                {"fit", fit_json(r.fit)},
                {"rho_lp_norm", r.rho_lp},
                {"total_mass", evaluate(r.mu, StepField::product(cfg.alphabet, 0, 0, {1.0}), tc.grid_plus, tc.grid_minus)},
                {"aniso_norm", aniso_norm(r.mu)}});
  }

  void srb() const
  {
    const std::string which = cfg.param<std::string>("case", "C");
    if (which != "A" && which != "B" && which != "C") throw ConfigError("srb.case must be A, B or C");
    const SrbCase c = which == "A" ? SrbCase::A : which == "B" ? SrbCase::B : SrbCase::C;
    const auto sp_text = cfg.param_text("sampling_plus"), target_text = cfg.param_text("target");
    const Potential psi_plus = sp_text ? make_potential(Side::Plus, cfg.alphabet, *sp_text) : cfg.phi_plus.pot;
    const Potential target = target_text ? make_potential(Side::Plus, cfg.alphabet, *target_text) : cfg.phi_plus.pot;
    const int points = cfg.param<int>("points", 200), steps = cfg.param<int>("steps", 10000), depth = cfg.param<int>("depth", 8);
    if (points < 2 || steps < 1 || depth < 1) throw ConfigError("srb.points >= 2, srb.steps >= 1 and srb.depth >= 1 required");
    std::vector<Rectangle> obs;
    for (const std::string& r : split(cfg.param<std::string>("observables", "|0; |1; 0|; 1|"), ';')) obs.push_back(rectangle(r));

    const SrbReport rep = srb_experiment(c, psi_plus, cfg.psi_minus.pot, target, points, steps, obs, cfg.seed, depth, solve_opt);
    Csv csv(file("srb.csv"), header, {"observable", "direction", "mean", "stderr", "nu", "own", "z_nu", "z_own"});
    double zf = 0, zb = 0;
    for (const SrbRow& row : rep.rows) {
      const bool fwd = row.direction == Direction::Forward;
      csv.row({row.observable, fwd ? "forward" : "backward", cell(row.mean), cell(row.stderr_), cell(row.nu), cell(row.own), cell(row.z_nu()),
               cell(row.z_own())});
      (fwd ? zf : zb) = std::max(fwd ? zf : zb, std::abs(row.z_nu()));
    }
    write_json(file("srb.json"), header,
               {{"case", srb_case_name(rep.which)},
                {"sampling_plus", sp_text.value_or(cfg.phi_plus.text)},
                {"target", target_text.value_or(cfg.phi_plus.text)},
                {"points", rep.n_points},
                {"steps", rep.n_steps},
                {"max_abs_z_nu_forward", zf},
                {"max_abs_z_nu_backward", zb}});
  }

  void dispatch() const
  {
    const std::string& e = cfg.experiment;
    if (e == "gibbs") gibbs();
    else if (e == "grid") grid();
    else if (e == "spectrum") spectrum();
    else if (e == "decay") decay();
    else if (e == "correlation") correlation_run();
    else if (e == "graph") graph();
    else srb();
  }
};

int fail(int code, const std::string& what)
{
  std::cerr << "aniso-shift: " << what << '\n';
  return code;
}

template <class F>
int guarded(F&& body)
{
  try {
    body();
    return Ok;
  } catch (const NotConverged& e) {
    return fail(NoConvergence, e.what());
  } catch (const IoError& e) {
    return fail(IoFailure, e.what());
  } catch (const ConfigError& e) {
    return fail(Constraint, e.what());
  } catch (const pt::ptree_error& e) {
    return fail(Constraint, std::string("config: ") + e.what());
  } catch (const Error& e) {
    return fail(e.code() == Errc::NonConvergence ? NoConvergence : Constraint, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(IoFailure, e.what());
  }
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Anisotropic-space experiments for the bilateral shift"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;

  CLI::App* validate = app.add_subcommand("validate", "Parse a config and check its constraints");
  validate->add_option("config", config_path, "Config file")->required();

  CLI::App* run = app.add_subcommand("run", "Run the experiment selected by a config");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config's out key)");
  run->add_option("--seed", seed, "Seed (overrides the config's seed key)");
  run->add_option("--threads", threads, "Worker threads for the eigen solves")->check(CLI::Range(1, 256));

  CLI11_PARSE(app, argc, argv);

  return guarded([&] {
    Config cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    check_constraints(cfg);
    if (*validate) {
      std::cout << "ok: " << cfg.experiment << ", s = " << num(cfg.s) << ", t = " << num(cfg.t) << ", depths " << cfg.plus_depth << "/"
                << cfg.minus_depth << ", sha256 " << cfg.hash << '\n';
      return;
    }
    const fs::path dir = out_dir.empty() ? fs::path(cfg.out) : fs::path(out_dir);
    fs::create_directories(dir);
    Run r{cfg, dir, make_header(cfg), {1e-13, 100000, threads}};
    r.dispatch();
    std::cout << cfg.experiment << ": results in " << dir.string() << '\n';
  });
}
