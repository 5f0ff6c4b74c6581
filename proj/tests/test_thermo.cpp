#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mixlim/audit.hpp"
#include "mixlim/thermo.hpp"

using namespace mixlim;

namespace {

MixtureSpec default_spec() {
  MixtureSpec s;
  s.N = 2;
  s.M = {1.0, 2.0};
  s.vbar = {1.0, 2.0};
  s.alpha = {2.0, 2.0};
  s.sbar = 9.0;
  return s;
}

}  // namespace

TEST_CASE("gbar: branch values and one-sided knot") {
  MixtureSpec s = default_spec();
  s.vbar = {1.0, 2.0};
  // knot s=1 with vbar=1, alpha=2: value 0, slope 1, right-sided g'' = -1/2
  const GEval a = gbar_eval(s, 0, 1.0);
  CHECK(a.value == doctest::Approx(0.0));
  CHECK(a.d1 == doctest::Approx(1.0));
  CHECK(a.d2 == doctest::Approx(-0.5));
  // power branch at s=4 with vbar=2, alpha=2
  const GEval b = gbar_eval(s, 1, 4.0);
  CHECK(b.value == doctest::Approx(4.0));
  CHECK(b.d1 == doctest::Approx(1.0));
  CHECK(b.d2 == doctest::Approx(-0.125));
  // log branch asymptotics for s -> 0+
  const GEval c = gbar_eval(s, 0, 1e-12);
  CHECK(c.value < -20.0);
  CHECK(c.d1 > 1e11);
  CHECK_THROWS_AS(gbar_eval(s, 0, 0.0), std::domain_error);
  CHECK_THROWS_AS(gbar_eval(s, 0, -1.0), std::domain_error);
}

TEST_CASE("gbar: blended C2 variant is continuous through the blend edges") {
  MixtureSpec s = default_spec();
  s.gkind = GKind::BlendedC2;
  s.blend_delta = 0.25;
  for (int i = 0; i < 2; ++i) {
    for (double edge : {0.75, 1.25}) {
      const GEval in = gbar_eval(s, i, edge * (edge < 1 ? 1.0000001 : 0.9999999));
      MixtureSpec plain = s;
      plain.gkind = GKind::PiecewiseLogPower;
      const GEval out = gbar_eval(plain, i, edge);
      CHECK(in.value == doctest::Approx(out.value).epsilon(1e-5));
      CHECK(in.d1 == doctest::Approx(out.d1).epsilon(1e-5));
      CHECK(in.d2 == doctest::Approx(out.d2).epsilon(1e-4));
    }
    // (A2) holds inside the blend
    for (double x = 0.76; x < 1.24; x += 0.02) {
      const GEval g = gbar_eval(s, i, x);
      CHECK(g.d1 > 0.0);
      CHECK(g.d2 < 0.0);
    }
  }
}

TEST_CASE("gm: normalization, affine limit and the rescaling bound") {
  MixtureSpec s = default_spec();
  for (double m : {1.0, 10.0, 100.0}) {
    const ThermoFamily fam = ThermoFamily::rescaled(s, m);
    for (int i = 0; i < 2; ++i) {
      const GEval g = gm_eval(fam, i, 0.0);
      CHECK(g.value == doctest::Approx(0.0));
      CHECK(g.d1 == doctest::Approx(s.vbar[i]));
      CHECK(g.d2 == doctest::Approx(gbar_eval(s, i, 1.0).d2 / m));
    }
  }
  // affine limit
  {
    const ThermoFamily fam = ThermoFamily::affine(s);
    const GEval g = gm_eval(fam, 1, 3.0);
    CHECK(g.value == doctest::Approx(6.0));
    CHECK(g.d1 == doctest::Approx(2.0));
    CHECK(g.d2 == 0.0);
  }
  // m=100, pi=5, vbar=1, alpha=2: within (1/2) sup|g''| pi^2/m of the
  // affine value (sup over [1, 1.05] is 1/2)
  {
    const ThermoFamily fam = ThermoFamily::rescaled(s, 100.0);
    const GEval g = gm_eval(fam, 0, 5.0);
    CHECK(std::fabs(g.value - 5.0) <= 0.5 * 0.5 * 25.0 / 100.0);
  }
  {
    const ThermoFamily fam = ThermoFamily::rescaled(s, 10.0);
    CHECK_THROWS_AS(gm_eval(fam, 0, -10.0), std::domain_error);
  }
}

TEST_CASE("fractions: worked example, single species, symmetry") {
  MixtureSpec s = default_spec();
  const Fractions fr = fractions(s, {0.3, 0.2});
  CHECK(fr.x[0] == doctest::Approx(0.75));
  CHECK(fr.x[1] == doctest::Approx(0.25));
  CHECK(fr.y[0] == doctest::Approx(0.6));
  CHECK(fr.y[1] == doctest::Approx(0.4));
  CHECK(fr.n == doctest::Approx(0.4));
  // y_i = M_i x_i / sum_j M_j x_j
  const double denom = s.M[0] * fr.x[0] + s.M[1] * fr.x[1];
  for (int i = 0; i < 2; ++i)
    CHECK(fr.y[i] == doctest::Approx(s.M[i] * fr.x[i] / denom));
  // single species
  const Fractions one = fractions(s, {0.7, 0.0});
  CHECK(one.x[0] == doctest::Approx(1.0));
  CHECK(one.x[1] == doctest::Approx(0.0));
  // symmetry with equal masses
  MixtureSpec eq = s;
  eq.M = {1.0, 1.0};
  const Fractions sym = fractions(eq, {0.4, 0.4});
  CHECK(sym.x[0] == doctest::Approx(0.5));
  CHECK(sym.y[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(fractions(s, {0.0, 0.0}), std::domain_error);
}

TEST_CASE("mixing entropy: worked value and homogeneity") {
  MixtureSpec s = default_spec();
  const MixEntropy me = mix_entropy(s, {0.3, 0.2});
  CHECK(me.k == doctest::Approx(0.3 * std::log(0.75) + 0.1 * std::log(0.25))
                    .epsilon(1e-12));
  CHECK(me.k == doctest::Approx(-0.22493405784752333).epsilon(1e-12));
  // Dk . rho = k, D2k . rho = 0
  CHECK(me.dk[0] * 0.3 + me.dk[1] * 0.2 == doctest::Approx(me.k).epsilon(1e-12));
  const Vec z = matvec(me.d2k, {0.3, 0.2});
  CHECK(std::fabs(z[0]) <= 1e-12);
  CHECK(std::fabs(z[1]) <= 1e-12);
  CHECK_THROWS_AS(mix_entropy(s, {0.3, 0.0}), std::domain_error);
}

TEST_CASE("equation of state: closed-form oracle for common alpha") {
  MixtureSpec s = default_spec();
  const ThermoFamily fam = ThermoFamily::rescaled(s, 100.0);
  // w = rho.vbar = 0.7 <= 1 -> p = w
  CHECK(eos_pressure(fam, {0.3, 0.2}) == doctest::Approx(0.7).epsilon(1e-12));
  // reference state
  CHECK(eos_pressure(fam, {0.5, 0.25}) == doctest::Approx(1.0).epsilon(1e-12));
  // w = 2, alpha = 2 -> p = w^2 = 4
  CHECK(eos_pressure(fam, {1.0, 0.5}) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_THROWS_AS(eos_pressure(fam, {0.0, 0.0}), std::domain_error);
}

TEST_CASE("pi_m: definition and the affine constraint guard") {
  MixtureSpec s = default_spec();
  // on the constraint surface pi = 0 for every m
  for (double m : {10.0, 10000.0}) {
    const ThermoFamily fam = ThermoFamily::rescaled(s, m);
    CHECK(std::fabs(pi_m(fam, {0.5, 0.25})) <= 1e-9);
  }
  // m=10, w=2 -> p=4 -> pi = 30
  CHECK(pi_m(ThermoFamily::rescaled(s, 10.0), {1.0, 0.5}) ==
        doctest::Approx(30.0).epsilon(1e-10));
  // m=100, p=1.03 -> pi = 3 (single-species state with w = sqrt(1.03))
  CHECK(pi_m(ThermoFamily::rescaled(s, 100.0), {std::sqrt(1.03), 0.0}) ==
        doctest::Approx(3.0).epsilon(1e-9));
  const ThermoFamily aff = ThermoFamily::affine(s);
  CHECK(pi_m(aff, {0.5, 0.25}) == 0.0);
  CHECK_THROWS_AS(pi_m(aff, {0.6, 0.25}), std::domain_error);
}

TEST_CASE("free energy: constraint surface, zero state, coercivity") {
  MixtureSpec s = default_spec();
  const ThermoFamily fam = ThermoFamily::rescaled(s, 100.0);
  // on the constraint surface f = k(rho)
  const Vec rho = {0.5, 0.25};
  CHECK(free_energy(fam, rho) ==
        doctest::Approx(mix_entropy(s, rho).k).epsilon(1e-10));
  // continuous extension at zero
  CHECK(free_energy(fam, {0.0, 0.0}) == doctest::Approx(100.0));
  // affine family on the constraint
  CHECK(free_energy(ThermoFamily::affine(s), rho) ==
        doctest::Approx(mix_entropy(s, rho).k).epsilon(1e-12));
  CHECK_THROWS_AS(free_energy(ThermoFamily::affine(s), Vec{0.6, 0.25}),
                  std::domain_error);
  // coercivity f >= c0 |rho|^gamma for large states, uniformly over m
  const double gamma = s.gamma_growth();
  double c0 = 1e300;
  for (double m : {1.0, 10.0, 100.0, 10000.0}) {
    const ThermoFamily f2 = ThermoFamily::rescaled(s, m);
    for (double scale : {10.0, 30.0, 100.0}) {
      for (double frac : {0.2, 0.5, 0.8}) {
        const Vec big = {scale * frac, scale * (1.0 - frac)};
        const double nrm = std::sqrt(big[0] * big[0] + big[1] * big[1]);
        c0 = std::min(c0, free_energy(f2, big) / std::pow(nrm, gamma));
      }
    }
  }
  CHECK(c0 > 0.01);
}

TEST_CASE("chemical potentials: reference state and the incompressible form") {
  MixtureSpec s = default_spec();
  const ThermoFamily fam = ThermoFamily::rescaled(s, 100.0);
  const Vec rho = {0.5, 0.25};
  const Vec mu = chemical_potentials(fam, rho);
  const Fractions fr = fractions(s, rho);
  for (int i = 0; i < 2; ++i)
    CHECK(mu[i] ==
          doctest::Approx(s.RT / s.M[i] * std::log(fr.x[i])).epsilon(1e-9));
  // affine-limit potentials with an external pressure
  const Vec mi = mu_incompressible(s, rho, 0.7);
  for (int i = 0; i < 2; ++i)
    CHECK(mi[i] == doctest::Approx(0.7 * s.vbar[i] +
                                   s.RT / s.M[i] * std::log(fr.x[i])));
  CHECK_THROWS_AS(chemical_potentials(fam, Vec{0.5, 0.0}), std::domain_error);
  CHECK_THROWS_AS(chemical_potentials(ThermoFamily::affine(s), rho),
                  std::domain_error);
}

TEST_CASE("hessian: exact symmetry and positive definiteness") {
  MixtureSpec s = default_spec();
  const ThermoFamily fam = ThermoFamily::rescaled(s, 100.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int k = 0; k < 50; ++k) {
    const Vec rho = {u(rng), u(rng)};
    const Mat h = hessian(fam, rho);
    CHECK(h[1] == h[2]);  // symmetric by construction, bitwise
    CHECK(min_eigenvalue_sym(h, 2) > 0.0);
  }
  CHECK_THROWS_AS(hessian(ThermoFamily::affine(s), Vec{0.5, 0.25}),
                  std::domain_error);
}

TEST_CASE("potentials -> densities: forced pi = 0 solution and round trip") {
  MixtureSpec s = default_spec();
  s.M = {1.0, 1.0};
  const ThermoFamily fam = ThermoFamily::rescaled(s, 100.0);
  // mu = (ln 1/2, ln 1/2): sum exp(mu_i - g_i(0)) = 1 at pi = 0 exactly
  double pi = -1.0;
  const Vec rho = potentials_to_densities(fam, {std::log(0.5), std::log(0.5)}, &pi);
  CHECK(std::fabs(pi) <= 1e-12);
  const Fractions fr = fractions(s, rho);
  CHECK(fr.x[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fr.x[1] == doctest::Approx(0.5).epsilon(1e-12));
  // x = 1/2 with M = (1,1), vbar = (1,2): n (1/2 + 1) = 1 -> rho = (1/3, 1/3)
  CHECK(rho[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(rho[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // round trip on the default masses
  MixtureSpec s2 = default_spec();
  const ThermoFamily fam2 = ThermoFamily::rescaled(s2, 100.0);
  const Vec r0 = {0.42, 0.17};
  const Vec back = potentials_to_densities(fam2, chemical_potentials(fam2, r0));
  CHECK(back[0] == doctest::Approx(r0[0]).epsilon(1e-9));
  CHECK(back[1] == doctest::Approx(r0[1]).epsilon(1e-9));
}

TEST_CASE("Gibbs-Duhem holds pointwise") {
  MixtureSpec s = default_spec();
  for (double m : {1.0, 100.0, 10000.0}) {
    const ThermoFamily fam = ThermoFamily::rescaled(s, m);
    for (const Vec& rho : {Vec{0.3, 0.2}, Vec{1.4, 0.9}, Vec{0.05, 0.6}}) {
      const double pi = pi_m(fam, rho);
      const double f = free_energy(fam, rho);
      const Vec mu = chemical_potentials(fam, rho);
      const double gd = -f + rho[0] * mu[0] + rho[1] * mu[1];
      CHECK(std::fabs(gd - pi) <= 1e-9 * (1.0 + std::fabs(pi)));
    }
  }
}

TEST_CASE("thermo point evaluation bundles the invariants") {
  MixtureSpec s = default_spec();
  const ThermoFamily fam = ThermoFamily::rescaled(s, 50.0);
  const ThermoPoint tp = evaluate(fam, {0.4, 0.3});
  CHECK(tp.x[0] + tp.x[1] == doctest::Approx(1.0).epsilon(1e-14));
  double eos = 0.0;
  for (int i = 0; i < 2; ++i) eos += tp.rho[i] * gbar_eval(s, i, tp.p_hat).d1;
  CHECK(eos == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(-tp.f + tp.rho[0] * tp.mu[0] + tp.rho[1] * tp.mu[1] ==
        doctest::Approx(tp.pi_m).epsilon(1e-9));
}

TEST_CASE("property audit passes on the default mixture") {
  const AuditReport rep = thermo_audit(default_spec(), 1000, 42);
  for (const AuditCheck& c : rep.checks) {
    INFO(c.name, " worst=", c.worst, " tol=", c.tol);
    CHECK(c.pass);
  }
}

TEST_CASE("property audit rejects a non-concave family") {
  MixtureSpec s = default_spec();
  s.gkind = GKind::BrokenNonconcave;
  const AuditReport rep = thermo_audit(s, 200, 42);
  CHECK_FALSE(rep.all_pass);
  CHECK(rep.checks.front().name == "eos-monotonicity");
  CHECK_FALSE(rep.checks.front().pass);
}
