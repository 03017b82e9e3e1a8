#include "doctest.h"
#include "support.hpp"

using namespace ashift;
using ashift::testing::Gen;
using ashift::testing::markov_plus;
using ashift::testing::step_operator;
using ashift::testing::uniform_minus;
using ashift::testing::uniform_plus;

namespace {

TransferConfig uniform_tc(double s = 0.25, double t = 0.5, int Np = 6, int Nm = 10)
{
  return make_transfer(uniform_plus, uniform_minus, {s, t}, Np, Nm);
}

TransferConfig markov_tc(int Np = 8, int Nm = 18) { return make_transfer(markov_plus, uniform_minus, {0.25, 0.5}, Np, Nm); }

StepField x0_sign() { return StepField::product(2, 1, 0, {1.0, -1.0}); }

AnisoVector markov_gibbs_product(const TransferConfig& tc)
{
  const StepField& r = tc.rpf_plus.rho;
  const StepField rho1 = StepField::one_sided(Side::Plus, 2, 1, {r[0], r[r.size() / 2]});
  return tensor(decompose(rho1, Space::b11(tc.exps.s), tc.grid_plus),
                BesovVector::unit(Side::Minus, 2, Space::b11_neg(tc.exps.t)));
}

}  // namespace

TEST_CASE("make_transfer checks exponents and normalises")
{
  CHECK_THROWS_AS(make_transfer(uniform_plus, uniform_minus, {0.5, 0.5}, 4, 4), Error);
  const TransferConfig tc = make_transfer(uniform_plus.shifted(1.0), uniform_minus, {0.25, 0.5}, 4, 6);
  CHECK(tc.raw_pressure_plus == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tc.plus_budget() == 4);
  CHECK(tc.minus_budget() == 6);
  for (double v : tc.phi_plus.table) CHECK(v == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("branch_forward examples")
{
  const TransferConfig tc = uniform_tc();
  const BesovVector a = BesovVector::unit(Side::Plus, 2, Space::b11(0.25), 1);
  const BesovVector f0 = branch_forward(tc, Word{0}, a), f1 = branch_forward(tc, Word{1}, a);
  REQUIRE(f0.coeffs.size() == 1);
  REQUIRE(f1.coeffs.size() == 1);
  CHECK(f0.coeffs[0].first == 0);
  CHECK(f0.coeffs[0].second == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f1.coeffs[0].second == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(std::abs(f0.coefficient(0) + f1.coefficient(0)) < 1e-14);

  // an atom on C+(0) is invisible to the branch through 1
  const BesovVector left = BesovVector::unit(Side::Plus, 2, Space::b11(0.25), atom_id(2, 1, 0, 0));
  CHECK(branch_forward(tc, Word{1}, left).coeffs.empty());
  CHECK(besov_norm(branch_forward(tc, Word{}, left) - left) < 1e-14);
}

TEST_CASE("branch_backward examples")
{
  for (double t : {0.3, 0.5, 0.9}) {
    const TransferConfig tc = uniform_tc(0.2, t);
    const BesovVector one = BesovVector::unit(Side::Minus, 2, Space::b11_neg(t));
    const BesovVector b = branch_backward(tc, Word{0}, one);
    CHECK(besov_norm(b) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(b.coefficient(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(b.coefficient(1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(besov_norm(branch_backward(tc, Word{}, one) - one) < 1e-15);
  }
}

TEST_CASE("uniform branches scale atoms by the mass ratio exactly")
{
  const double s = 0.3, t = 0.6;
  const TransferConfig tc = uniform_tc(s, t, 8, 12);
  Gen g(61);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = g.integer(0, 5), l = g.integer(0, 3);
    const Index node = static_cast<Index>(g.integer(0, static_cast<int>(ipow(2, d)) - 1));
    const Index id = atom_id(2, d, node, 0);
    const Word w = g.word(2, l);

    const BesovVector b = branch_backward(tc, w, BesovVector::unit(Side::Minus, 2, Space::b11_neg(t), id));
    CHECK(besov_norm(b) == doctest::Approx(std::pow(2.0, -l * t)).epsilon(1e-13));
    const Index moved = atom_id(2, d + l, address(tree_digits(w, Side::Minus), 2) * ipow(2, d) + node, 0);
    CHECK(b.coefficient(moved) == doctest::Approx(std::pow(2.0, -l * t)).epsilon(1e-13));

    // forward: an atom on P inside C+(w) goes to sigma^l P with ratio (|P| / |sigma^l P|)^s
    if (l <= d) {
      const Index inside = address(tree_digits(w, Side::Plus), 2) * ipow(2, d - l) + node % ipow(2, d - l);
      const BesovVector a = BesovVector::unit(Side::Plus, 2, Space::b11(s), atom_id(2, d, inside, 0));
      const BesovVector f = branch_forward(tc, w, a);
      CHECK(besov_norm(f) == doctest::Approx(std::pow(2.0, -l * s)).epsilon(1e-13));
    }
  }
}

TEST_CASE("branch-sum bound: uniform case is exactly 2^{-js} or 2|Q|^s")
{
  const double s = 0.4;
  const TransferConfig tc = uniform_tc(s, 0.7, 8, 8);
  for (int d = 0; d <= 4; ++d)
    for (int j = 1; j <= 6; ++j) {
      const BesovVector a = BesovVector::unit(Side::Plus, 2, Space::b11(s), atom_id(2, d, 0, 0));
      double sum = 0;
      for (const Word& w : all_words(2, j)) sum += besov_norm(branch_forward(tc, w, a));
      const double expect = j <= d ? std::pow(2.0, -j * s) : 2 * std::pow(2.0, -d * s);
      CHECK(sum == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("branch-sum constant stays bounded for a Markov potential")
{
  const TransferConfig tc = markov_tc(8, 8);
  double worst_short = 0, worst_long = 0;
  for (int d = 0; d <= 4; ++d)
    for (Index node = 0; node < ipow(2, d); ++node)
      for (int j = 1; j <= 6; ++j) {
        const BesovVector a = BesovVector::unit(Side::Plus, 2, Space::b11(0.25), atom_id(2, d, node, 0));
        double sum = 0;
        for (const Word& w : all_words(2, j)) sum += besov_norm(branch_forward(tc, w, a));
        (j <= 3 ? worst_short : worst_long) = std::max(j <= 3 ? worst_short : worst_long, sum);
      }
  CHECK(std::isfinite(worst_long));
  CHECK(worst_long <= 2 * worst_short);
}

TEST_CASE("backward branches carry the integral")
{
  Gen g(62);
  for (int trial = 0; trial < 20; ++trial) {
    const TransferConfig tc =
        make_transfer(uniform_plus, g.random_markov(Side::Minus, 2), {0.25, 0.5}, 4, 9);
    const BesovVector b = decompose(g.field(Side::Minus, 2, g.integer(0, 4)), Space::b11_neg(0.5), tc.grid_minus);
    const Word w = g.word(2, g.integer(0, 4));
    CHECK(branch_backward(tc, w, b).coefficient(0) == doctest::Approx(b.coefficient(0)).epsilon(1e-12));
  }
}

TEST_CASE("forward branches carry the integral in total")
{
  Gen g(63);
  for (int trial = 0; trial < 20; ++trial) {
    const TransferConfig tc = make_transfer(g.random_potential(Side::Plus, 2, g.integer(1, 2)), uniform_minus, {0.25, 0.5}, 6, 6);
    const BesovVector a = decompose(g.field(Side::Plus, 2, g.integer(0, 4)), Space::b11(0.25), tc.grid_plus);
    const int l = g.integer(1, 3);
    double total = 0;
    for (const Word& w : all_words(2, l)) total += branch_forward(tc, w, a).coefficient(0);
    CHECK(total == doctest::Approx(a.coefficient(0)).epsilon(1e-12));
  }
}

TEST_CASE("budget exhaustion is an error")
{
  const TransferConfig tc = uniform_tc(0.25, 0.5, 3, 3);
  const AnisoVector deep{2, 0.25, 0.5, {{atom_id(2, 3, 0, 0), 0, 1.0}}};
  for (const auto& [v, l] : {std::pair{deep, 1}, std::pair{uniform_product(tc), 4}}) {
    try {
      (void)apply(tc, v, l);
      FAIL("expected budget exhaustion");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BudgetExhausted);
    }
  }
  CHECK_THROWS_AS(branch_backward(tc, Word{0, 0, 0, 0}, BesovVector::unit(Side::Minus, 2, Space::b11_neg(0.5))), Error);
}

TEST_CASE("apply matches the step-level operator")
{
  Gen g(64);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = trial < 40 ? 2 : 3;
    const int maxd = n == 2 ? 4 : 2;
    const Potential phi = g.random_potential(Side::Plus, n, g.integer(1, 2));
    const Potential psi = g.random_potential(Side::Minus, n, g.integer(1, 2));
    const TransferConfig tc = make_transfer(phi, psi, {0.3, 0.6}, 6, 9);
    const AnisoVector v = g.aniso(n, g.integer(0, maxd), g.integer(0, maxd), 0.3, 0.6);
    const int l = g.integer(1, n == 2 ? 3 : 2);
    StepField h = aniso_reconstruct(v, tc.grid_plus, tc.grid_minus);
    for (int i = 0; i < l; ++i) h = step_operator(tc, h);
    const AnisoVector expect = aniso_decompose(h, tc.grid_plus, tc.grid_minus, 0.3, 0.6);
    const AnisoVector got = apply(tc, v, l);
    CHECK(aniso_norm(got - expect) <= 1e-12 * std::max(1.0, aniso_norm(expect)));
  }
}

TEST_CASE("apply conserves mass")
{
  Gen g(65);
  const TransferConfig tc = markov_tc(8, 14);
  const StepField one = StepField::constant(Side::Product, 2, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    AnisoVector v = g.aniso(2, g.integer(0, 2), g.integer(0, 2), 0.25, 0.5);
    const double mass = evaluate(v, one, tc.grid_plus, tc.grid_minus);
    for (int k = 1; k <= 6; ++k) {
      v = apply(tc, v, 1);
      CHECK(std::abs(evaluate(v, one, tc.grid_plus, tc.grid_minus) - mass) <= 1e-12);
    }
  }
}

TEST_CASE("uniform product is invariant; a plus atom moves to the minus side")
{
  const TransferConfig tc = uniform_tc();
  const AnisoVector u = aniso_decompose(StepField::constant(Side::Product, 2, 1.0), tc.grid_plus, tc.grid_minus, 0.25, 0.5);
  CHECK(aniso_norm(apply(tc, u, 1) - u) < 1e-15);

  // L(a (x) 1)(x, y) = a(y_{-1} x): the minus root atom with coefficient 1
  const AnisoVector v{2, 0.25, 0.5, {{1, 0, 1.0}}};
  const AnisoVector once = apply(tc, v, 1);
  CHECK(marginal_plus(once).coeffs.empty());
  CHECK(aniso_norm(once - AnisoVector{2, 0.25, 0.5, {{0, 1, 1.0}}}) < 1e-14);
  CHECK(aniso_norm(apply(tc, v, 2)) == doctest::Approx(std::pow(2.0, -0.5)).epsilon(1e-14));
}

TEST_CASE("essential radius bound examples")
{
  for (double s : {0.1, 0.25, 0.5})
    CHECK(essential_radius_bound(uniform_plus, uniform_minus, s, s + 0.2) == std::exp(s * -std::log(2.0)));
  CHECK(essential_radius_bound(uniform_plus, uniform_minus, 0.5, 0.5) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  for (auto [s, t] : {std::pair{0.5, 0.75}, std::pair{0.25, 0.5}, std::pair{0.9, 0.95}})
    CHECK(std::abs(essential_radius_bound(markov_plus, uniform_minus, s, t) - std::max(std::pow(0.7, s), std::pow(2.0, -t))) < 1e-12);
  // once the minus factor dominates, shrinking t raises the bound
  CHECK(essential_radius_bound(markov_plus, uniform_minus, 0.9, 0.2) > essential_radius_bound(markov_plus, uniform_minus, 0.9, 0.4));
}

TEST_CASE("fixed point: uniform case converges at once")
{
  const TransferConfig tc = uniform_tc();
  const FixedPointTrace tr = iterate_fixed_point(tc);
  CHECK(tr.converged);
  CHECK(tr.iterations == 0);
  CHECK(aniso_norm(fixed_point(tc) - uniform_product(tc)) == 0.0);
}

TEST_CASE("fixed point: Markov marginal is the Gibbs state")
{
  const TransferConfig tc = markov_tc();
  const FixedPointTrace tr = iterate_fixed_point(tc);
  CHECK(tr.budget_hit);
  CHECK_FALSE(tr.converged);
  CHECK(tr.marginal_increments.back() < 1e-10);
  const StepField dens = reconstruct(marginal_plus(tr.nu), tc.grid_plus, 6);
  for (Index a = 0; a < dens.size(); ++a)
    CHECK(std::abs(dens[a] * tc.grid_plus.mass[6][a] - tc.rpf_plus.gibbs_mass[6][a]) < 1e-8);
  CHECK(evaluate(tr.nu, StepField::constant(Side::Product, 2, 1.0), tc.grid_plus, tc.grid_minus) == doctest::Approx(1.0).epsilon(1e-12));

  try {
    (void)fixed_point(tc);
    FAIL("expected budget exhaustion");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BudgetExhausted);
    CHECK(std::string(e.what()).find("last increment") != std::string::npos);
  }
}

TEST_CASE("marginal stopping ends at the first marginal increment below tolerance")
{
  const TransferConfig tc = markov_tc(8, 20);
  const FixedPointTrace tr = iterate_fixed_point(tc, {1e-6, 50, true});
  REQUIRE(tr.converged);
  CHECK_FALSE(tr.budget_hit);
  const auto& m = tr.marginal_increments;
  CHECK(m.back() < 1e-6);
  for (std::size_t k = 0; k + 1 < m.size(); ++k) CHECK(m[k] >= 1e-6);
  // increments shrink by the second eigenvalue 0.3 from the second step on
  CHECK(tr.iterations == static_cast<int>(m.size()));
  CHECK(m[3] / m[2] == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("fixed point is invariant on shallow rectangles")
{
  const TransferConfig tc = markov_tc(8, 20);
  const FixedPointTrace tr = iterate_fixed_point(tc, {1e-10, 19});
  const AnisoVector next = apply(tc, tr.nu, 1);
  for (const auto& [m, p] : {std::pair{Word{}, Word{0, 1}}, std::pair{Word{1}, Word{0}}, std::pair{Word{0, 0}, Word{}}}) {
    const StepField gamma = StepField::indicator(Cylinder::product(p, m), 2);
    CHECK(std::abs(evaluate(tr.nu, gamma, tc.grid_plus, tc.grid_minus) - evaluate(next, gamma, tc.grid_plus, tc.grid_minus)) < 1e-10);
  }
}

TEST_CASE("decay_rate: uniform product is exact")
{
  const TransferConfig tc = uniform_tc();
  const SpectralReport r = decay_rate(tc, uniform_product(tc), 6, uniform_product(tc));
  for (double e : r.e) CHECK(e == 0.0);
  CHECK(r.fit.exact);
}

TEST_CASE("decay_rate: Markov marginal decays at the second eigenvalue")
{
  const TransferConfig tc = markov_tc();
  const AnisoVector nu = iterate_fixed_point(tc).nu;
  const AnisoVector v{2, 0.25, 0.5, {{0, 0, 1.0}, {0, 1, 0.1}, {1, 0, 0.2}, {2, 0, 0.1}}};
  const SpectralReport r = decay_rate(tc, v, 12, nu);
  CHECK(r.second_eigen_oracle == doctest::Approx(0.3).epsilon(1e-10));
  CHECK(r.fit_marginal.rate == doctest::Approx(0.3).epsilon(0.02 / 0.3));
  CHECK(r.bounded_by_fit);
  CHECK(r.essential_bound == doctest::Approx(std::max(std::pow(0.7, 0.25), std::pow(2.0, -0.5))).epsilon(1e-12));
  // the full anisotropic error is held up by the contraction of the minus side
  CHECK(r.fit.rate > r.fit_marginal.rate);
}

TEST_CASE("norm profile is bounded")
{
  const TransferConfig tc = uniform_tc(0.25, 0.5, 8, 12);
  const auto prof = norm_profile(tc, 4, 2);
  CHECK(prof[0] == 1.0);
  for (double x : prof) CHECK(x <= 2.0 + 1e-12);
}

TEST_CASE("correlations: uniform coordinates are independent")
{
  const TransferConfig tc = uniform_tc(0.25, 0.5, 8, 12);
  const MultiplierField rho = make_multiplier(x0_sign(), 0.5, tc.grid_plus, tc.grid_minus);
  for (int k = 1; k <= 6; ++k) CHECK(std::abs(correlation(tc, uniform_product(tc), rho, x0_sign(), k)) < 1e-15);
  CHECK(correlation(tc, uniform_product(tc), rho, x0_sign(), 0) == doctest::Approx(1.0));
}

TEST_CASE("correlations: Markov autocovariance")
{
  const TransferConfig tc = markov_tc();
  const AnisoVector mu = markov_gibbs_product(tc);
  const MultiplierField rho = make_multiplier(x0_sign(), 0.5, tc.grid_plus, tc.grid_minus);
  const double mean = evaluate(mu, x0_sign(), tc.grid_plus, tc.grid_minus);
  CHECK(mean == doctest::Approx(1.0 / 7).epsilon(1e-12));
  const double c0 = correlation(tc, mu, rho, x0_sign(), 0) - mean * mean;
  CHECK(c0 == doctest::Approx(48.0 / 49).epsilon(1e-12));
  for (int k = 1; k <= 8; ++k) {
    const double ck = correlation(tc, mu, rho, x0_sign(), k) - mean * mean;
    CHECK(std::abs(ck / c0 - std::pow(0.3, k)) < 1e-10);
  }
}

TEST_CASE("correlation agrees with the direct sum")
{
  Gen g(66);
  const Potential phi = g.random_potential(Side::Plus, 2, 2);
  const TransferConfig tc = make_transfer(phi, g.random_potential(Side::Minus, 2, 1), {0.3, 0.6}, 8, 10);
  for (int trial = 0; trial < 20; ++trial) {
    const AnisoVector mu = g.aniso(2, g.integer(0, 2), g.integer(0, 2), 0.3, 0.6);
    const StepField rho = g.product(2, g.integer(0, 2), g.integer(0, 2));
    const StepField gamma = g.product(2, g.integer(0, 3), g.integer(0, 3));
    const int k = g.integer(0, 3);
    const double a = correlation(tc, mu, make_multiplier(rho, 0.6, tc.grid_plus, tc.grid_minus), gamma, k);
    CHECK(a == doctest::Approx(direct_correlation(tc, mu, rho, gamma, k)).epsilon(1e-12));
  }
}

TEST_CASE("compose_shift moves coordinates across the origin")
{
  // gamma = 1 on x0 = 1; gamma o sigma^2 reads x2
  const StepField gamma = StepField::product(2, 1, 0, {0.0, 1.0});
  const StepField g2 = compose_shift(gamma, 2);
  CHECK(g2.plus_depth() == 3);
  CHECK(g2.at(std::vector<int>{0, 0, 1}, std::vector<int>{}) == 1.0);
  CHECK(g2.at(std::vector<int>{1, 1, 0}, std::vector<int>{}) == 0.0);
  // gamma = 1 on y_{-1} = 1; gamma o sigma reads x0
  const StepField back = compose_shift(StepField::product(2, 0, 1, {0.0, 1.0}), 1);
  CHECK(back.minus_depth() == 0);
  CHECK(back.values() == std::vector<double>{0.0, 1.0});
}

TEST_CASE("correlation at k = 0 with unit density is evaluation")
{
  const TransferConfig tc = markov_tc();
  const AnisoVector nu = iterate_fixed_point(tc, {1e-10, 10}).nu;
  const MultiplierField one = make_multiplier(StepField::constant(Side::Product, 2, 1.0), 0.5, tc.grid_plus, tc.grid_minus);
  const StepField gamma = StepField::indicator(Cylinder::product(Word{1}, Word{0}), 2);
  CHECK(correlation(tc, nu, one, gamma, 0) == doctest::Approx(evaluate(nu, gamma, tc.grid_plus, tc.grid_minus)).epsilon(1e-12));
}

TEST_CASE("srb: uniform case matches nu both ways")
{
  const std::vector<Rectangle> obs{{Word{0}, Word{}}, {Word{}, Word{1}}};
  const SrbReport r = srb_experiment(SrbCase::C, uniform_plus, uniform_minus, uniform_plus, 40, 2000, obs, 11);
  REQUIRE(r.rows.size() == 4);
  for (const SrbRow& row : r.rows) {
    CHECK(row.nu == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(row.z_nu()) < 3.0);
  }
}

TEST_CASE("srb: sampling measures decide the limits")
{
  const std::vector<Rectangle> obs{{Word{0}, Word{}}, {Word{}, Word{0}}};
  const Potential b37m = Potential::bernoulli(Side::Minus, {0.3, 0.7});
  const SrbReport rb = srb_experiment(SrbCase::B, uniform_plus, b37m, uniform_plus, 40, 2000, obs, 12);
  for (const SrbRow& row : rb.rows)
    if (row.direction == Direction::Backward) {
      CHECK(row.own == doctest::Approx(0.3).epsilon(1e-12));
      CHECK(std::abs(row.z_own()) < 3.0);
      CHECK(std::abs(row.z_nu()) > 5.0);
    }

  const Potential b37p = Potential::bernoulli(Side::Plus, {0.3, 0.7});
  const SrbReport ra = srb_experiment(SrbCase::A, b37p, uniform_minus, uniform_plus, 40, 2000, obs, 13);
  for (const SrbRow& row : ra.rows)
    if (row.direction == Direction::Forward) {
      CHECK(std::abs(row.z_own()) < 3.0);
      CHECK(std::abs(row.z_nu()) > 5.0);
    }
}

TEST_CASE("srb reports are deterministic in the seed")
{
  const std::vector<Rectangle> obs{{Word{0, 1}, Word{1}}};
  const auto a = srb_experiment(SrbCase::C, markov_plus, uniform_minus, markov_plus, 5, 300, obs, 7);
  const auto b = srb_experiment(SrbCase::C, markov_plus, uniform_minus, markov_plus, 5, 300, obs, 7);
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].mean == b.rows[i].mean);
}
