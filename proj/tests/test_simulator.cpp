#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <complex>
#include <random>

#include "models.hpp"
#include "oracles.hpp"
#include "phasebal/simulator.hpp"

using namespace phasebal;

namespace {

ClosedLoopModel build_cl(const models::Example& e) {
  return assemble_closed_loop(kron_reduce(assemble(e.model, e.converters)),
                              e.model, e.converters);
}

double rel_gap(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const double scale = std::max({1e-12, A.cwiseAbs().maxCoeff(),
                                 B.cwiseAbs().maxCoeff()});
  return (A - B).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_CASE("the stock disturbance splits its power between phases a and c") {
  const models::Example e = models::sweep_small();
  const LoadStep s = ac_load(e.model, 5, 0.3, 0.7);
  CHECK(s.node == 5);
  CHECK(s.t_start == 0.7);
  REQUIRE(s.dP.size() == 3);
  CHECK(s.dP(0) == doctest::Approx(0.15));
  CHECK(s.dP(1) == 0.0);
  CHECK(s.dP(2) == doctest::Approx(0.15));
  CHECK(s.dQ(0) == doctest::Approx(0.05));
  CHECK(s.dQ(1) == 0.0);
  CHECK(s.dQ(2) == doctest::Approx(0.05));
  CHECK_THROWS_AS(ac_load(e.model, 4, 0.3), SemanticError);  // single-phase
  CHECK_THROWS_AS(ac_load(e.model, 99, 0.3), SemanticError);
}

TEST_CASE("unbalance metrics on hand-computable samples") {
  const Eigen::Vector3d z = Eigen::Vector3d::Zero();

  SUBCASE("uniform deviations are balanced") {
    const Eigen::Vector3d shift = Eigen::Vector3d::Constant(0.07);
    const Eigen::Vector3d p = Eigen::Vector3d::Constant(0.4);
    const UnbalancePoint pt = unbalance_point(shift, shift, p, p);
    CHECK(!pt.degenerate);
    CHECK(pt.V_UF < 1e-14);
    CHECK(pt.V_UF_N < 1e-14);
    CHECK(pt.P_UF < 1e-14);
    CHECK(pt.Q_UF < 1e-14);
  }

  SUBCASE("single-phase magnitude rise") {
    const double eps = 0.12;
    const UnbalancePoint pt =
        unbalance_point(z, Eigen::Vector3d(eps, 0, 0), z, z);
    CHECK(pt.V_UF == doctest::Approx(eps / (3.0 + eps)).epsilon(1e-12));
    CHECK(pt.V_UF_N ==
          doctest::Approx(eps * std::sqrt(2.0) / 3.0).epsilon(1e-12));
  }

  SUBCASE("single-phase angle advance") {
    const double d = 0.3;
    const std::complex<double> j(0.0, 1.0);
    const double neg = std::abs(std::exp(j * d) - 1.0);
    const double pos = std::abs(std::exp(j * d) + 2.0);
    const UnbalancePoint pt =
        unbalance_point(Eigen::Vector3d(d, 0, 0), z, z, z);
    CHECK(pt.V_UF == doctest::Approx(neg / pos).epsilon(1e-12));
  }

  SUBCASE("power spread") {
    const UnbalancePoint pt = unbalance_point(
        z, z, Eigen::Vector3d(2, 1, 1), Eigen::Vector3d(0, 3, 0));
    CHECK(pt.P_UF == doctest::Approx(std::sqrt(2.0) / 3.0).epsilon(1e-12));
    CHECK(pt.Q_UF == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("collapsed positive sequence is flagged") {
    const Eigen::Vector3d dead = Eigen::Vector3d::Constant(-1.0);
    const UnbalancePoint pt = unbalance_point(z, dead, z, z);
    CHECK(pt.degenerate);
    CHECK(std::isnan(pt.V_UF));
  }
}

TEST_CASE("the drift direction is a fixed point of the free flow") {
  const ClosedLoopModel cl = build_cl(models::sweep_small());
  const Trajectory traj = simulate(cl, cl.xi_x, {}, 1.0, 0.1);
  for (int s = 0; s < traj.t.size(); ++s)
    CHECK((traj.X.col(s) - cl.xi_x).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("the free response dissipates the scaled energy") {
  const ClosedLoopModel cl = build_cl(models::sweep_small());
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXd x0(cl.n_states());
  for (int i = 0; i < x0.size(); ++i) x0(i) = d(rng);

  const Trajectory traj = simulate(cl, x0, {}, 5.0, 0.01);
  double prev = std::numeric_limits<double>::infinity();
  for (int s = 0; s < traj.t.size(); ++s) {
    const double e = traj.X.col(s).cwiseQuotient(cl.m_sqrt).squaredNorm();
    CHECK(e <= prev + 1e-9);
    prev = e;
  }
}

TEST_CASE("exact propagation matches Runge-Kutta integration") {
  struct Case {
    models::Example e;
    LoadStep load;
  };
  std::vector<Case> cases;
  {
    models::Example e = models::five_bus_radial();
    cases.push_back({e, ac_load(e.model, 4, 0.25, 0.5)});
  }
  {
    models::Example e = models::ygd_chain(1.0);
    cases.push_back({e, ac_load(e.model, 4, 0.25, 0.5)});
  }
  {
    models::Example e = models::sweep_small();
    cases.push_back({e, ac_load(e.model, 5, 0.25, 0.5)});
  }
  {
    models::Example e = models::two_feeders();
    LoadStep s;
    s.node = 5;
    s.t_start = 0.5;
    s.dP = Eigen::VectorXd::Constant(1, 0.1);
    s.dQ = Eigen::VectorXd::Constant(1, 0.02);
    cases.push_back({e, s});
  }

  // binary-exact step so the load switch-on lands on a shared sample time;
  // fine enough that fourth-order truncation stays under the gate below
  const double dt = 1.0 / 4096.0;
  for (const Case& c : cases) {
    const ClosedLoopModel cl = build_cl(c.e);
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cl.n_states());
    const Trajectory a = simulate(cl, x0, {c.load}, 10.0, dt);
    const Trajectory b = rk4_simulate(cl, x0, {c.load}, 10.0, dt);
    REQUIRE(a.t.size() == b.t.size());
    CHECK(rel_gap(a.X, b.X) < 1e-6);
    CHECK(rel_gap(a.omega, b.omega) < 1e-5);
  }
}

TEST_CASE("load starts between samples are honored exactly") {
  const ClosedLoopModel cl = build_cl(models::sweep_small());
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cl.n_states());
  const LoadStep load = ac_load(models::sweep_small().model, 5, 0.3, 0.25);

  // sample spacing chosen so 0.25 falls strictly inside a step of the coarse
  // grid while both grids stay binary-exact
  const Trajectory coarse = simulate(cl, x0, {load}, 0.5625, 0.1875);
  REQUIRE(coarse.t.size() == 4);
  CHECK(coarse.X.col(1).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(coarse.X.col(2).lpNorm<Eigen::Infinity>() > 0.0);

  const double fine_dt = 1.0 / 8192.0;
  const Trajectory fine = rk4_simulate(cl, x0, {load}, 0.5625, fine_dt);
  const Eigen::VectorXd ref = fine.X.col(fine.t.size() - 1);
  CHECK((coarse.X.col(3) - ref).lpNorm<Eigen::Infinity>() <
        1e-6 * std::max(1.0, ref.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("simulation input validation") {
  const ClosedLoopModel cl = build_cl(models::sweep_small());
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cl.n_states());

  CHECK_THROWS_AS(simulate(cl, Eigen::VectorXd::Zero(3), {}, 1.0, 0.1),
                  DimensionMismatch);
  Eigen::VectorXd bad = x0;
  bad(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(simulate(cl, bad, {}, 1.0, 0.1), SemanticError);
  CHECK_THROWS_AS(simulate(cl, x0, {}, 1.0, 0.0), SemanticError);
  CHECK_THROWS_AS(simulate(cl, x0, {}, 1.0, -0.1), SemanticError);
  CHECK_THROWS_AS(simulate(cl, x0, {}, -1.0, 0.1), SemanticError);

  LoadStep s;
  s.node = 99;
  s.dP = Eigen::VectorXd::Zero(3);
  s.dQ = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(simulate(cl, x0, {s}, 1.0, 0.1), SemanticError);

  s.node = 5;
  s.dP = Eigen::VectorXd::Zero(2);
  s.dQ = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(simulate(cl, x0, {s}, 1.0, 0.1), DimensionMismatch);
}

TEST_CASE("steady state of the unloaded system is the origin") {
  const models::Example e = models::sweep_small();
  const ClosedLoopModel cl = build_cl(e);
  const StabilityCertificate cert = certify(cl);
  REQUIRE(cert.verdict == StabilityCertificate::Verdict::Stable);

  const SteadyState rest = steady_state(cl, {}, cert);
  CHECK(rest.omega == 0.0);
  CHECK(rest.x_perp.norm() == 0.0);
  CHECK(rest.residual == 0.0);

  const LoadStep one = ac_load(e.model, 5, 0.2);
  LoadStep two = one;
  two.dP *= 2.0;
  two.dQ *= 2.0;
  const SteadyState s1 = steady_state(cl, {one}, cert);
  const SteadyState s2 = steady_state(cl, {two}, cert);
  CHECK(s2.omega == doctest::Approx(2.0 * s1.omega).epsilon(1e-12));
  CHECK((s2.x_perp - 2.0 * s1.x_perp).lpNorm<Eigen::Infinity>() <
        1e-10 * s1.x_perp.lpNorm<Eigen::Infinity>());
  CHECK(s1.residual < 1e-9);
}

TEST_CASE("steady state refuses an uncertified system") {
  const models::Example e = models::ygd_chain(0.0);
  const ClosedLoopModel cl = build_cl(e);
  const StabilityCertificate cert = certify(cl);
  REQUIRE(cert.verdict != StabilityCertificate::Verdict::Stable);
  CHECK_THROWS_AS(steady_state(cl, {}, cert), Error);
}

TEST_CASE("every unit of consumption lowers the common frequency alike") {
  const models::Example e = models::sweep_small();
  const ClosedLoopModel cl = build_cl(e);
  const StabilityCertificate cert = certify(cl);

  // five droop channels share the slack at m_d = 0.05
  SUBCASE("balanced three-phase load at an interior bus") {
    LoadStep s;
    s.node = 5;
    s.dP = Eigen::VectorXd::Constant(3, 0.1);
    s.dQ = Eigen::VectorXd::Zero(3);
    const SteadyState ss = steady_state(cl, {s}, cert);
    CHECK(ss.omega == doctest::Approx(-0.05 * 0.3 / 5.0).epsilon(1e-12));
  }
  SUBCASE("two-phase pattern draws the same total") {
    const SteadyState ss = steady_state(cl, {ac_load(e.model, 5, 0.3)}, cert);
    CHECK(ss.omega == doctest::Approx(-0.05 * 0.3 / 5.0).epsilon(1e-9));
  }
  SUBCASE("single-phase load at an exterior bus") {
    LoadStep s;
    s.node = 4;
    s.dP = Eigen::VectorXd::Constant(1, 0.2);
    s.dQ = Eigen::VectorXd::Constant(1, 0.05);
    const SteadyState ss = steady_state(cl, {s}, cert);
    CHECK(ss.omega == doctest::Approx(-0.05 * 0.2 / 5.0).epsilon(1e-12));
  }
}

TEST_CASE("long horizons settle on the drifting steady state") {
  const models::Example e = models::sweep_small();
  const ClosedLoopModel cl = build_cl(e);
  const StabilityCertificate cert = certify(cl);
  const LoadStep load = ac_load(e.model, 5, 0.4);
  const SteadyState ss = steady_state(cl, {load}, cert);

  const double T = 120.0;  // slowest mode ~0.094: transient is ~1e-7 by then
  const Trajectory traj =
      simulate(cl, Eigen::VectorXd::Zero(cl.n_states()), {load}, T, 0.01);
  const int last = static_cast<int>(traj.t.size()) - 1;

  const Eigen::VectorXd w = traj.omega.col(last);
  CHECK(w.maxCoeff() - w.minCoeff() < 1e-6);
  CHECK(std::abs(w(0) - ss.omega) < 1e-6);

  const Eigen::VectorXd predicted = ss.x_perp + T * ss.omega * cl.xi_x;
  CHECK((traj.X.col(last) - predicted).lpNorm<Eigen::Infinity>() <
        1e-4 * std::max(1.0, predicted.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("interior voltages on the trajectory satisfy the reduction") {
  const models::Example e = models::sweep_small();
  const ClosedLoopModel cl = build_cl(e);
  const Trajectory traj = simulate(
      cl, Eigen::VectorXd::Zero(cl.n_states()), {ac_load(e.model, 5, 0.4)},
      1.0, 0.1);
  for (int s = 0; s < traj.t.size(); ++s) {
    const Eigen::VectorXd again =
        recover_interior(cl.red, traj.S_int.col(s), traj.V_ext.col(s));
    CHECK((traj.V_int.col(s) - again).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("unbalance factors along a trajectory") {
  const models::Example e = models::sweep_small();
  const ClosedLoopModel cl = build_cl(e);
  const Trajectory traj = simulate(
      cl, Eigen::VectorXd::Zero(cl.n_states()), {ac_load(e.model, 5, 0.4, 0.5)},
      2.0, 0.05);

  const UnbalanceReport rep = unbalance_factors(traj, 5);
  CHECK(rep.bus == 5);
  REQUIRE(rep.samples.size() == static_cast<size_t>(traj.t.size()));
  CHECK(rep.samples.front().V_UF < 1e-12);
  CHECK(rep.samples.back().V_UF > 1e-4);
  CHECK(rep.samples.back().V_UF_N > 1e-4);

  CHECK_THROWS_AS(unbalance_factors(traj, 99), SemanticError);
  CHECK_THROWS_AS(unbalance_factors(traj, 4), SemanticError);
}

TEST_CASE("balancing gain lowers the steady unbalance") {
  auto chain = [](auto make, NodeId load_bus, NodeId measure) {
    const LoadStep load = ac_load(make(0.0).model, load_bus, 0.4);
    std::vector<UnbalancePoint> pts;
    for (double k : {0.0, 1.0, 10.0, 30.0}) {
      const models::Example e = make(k);
      const ClosedLoopModel cl = build_cl(e);
      const StabilityCertificate cert = certify(cl);
      REQUIRE(cert.verdict == StabilityCertificate::Verdict::Stable);
      pts.push_back(steady_state_unbalance(
          cl, steady_state(cl, {load}, cert), {load}, measure));
      REQUIRE(!pts.back().degenerate);
    }
    for (size_t i = 1; i < pts.size(); ++i)
      CHECK(pts[i].V_UF_N <= pts[i - 1].V_UF_N);
    CHECK(pts.back().V_UF_N < pts.front().V_UF_N);
    CHECK(pts.back().V_UF < pts.front().V_UF);
  };
  chain([](double k) { return models::sweep_small(k); }, 5, 3);
  chain([](double k) { return models::sweep_twin(k); }, 2, 1);
}

TEST_CASE("correlation study over metric pairs") {
  auto pt = [](double vuf, double vufn, bool degen = false) {
    UnbalancePoint p;
    p.V_UF = vuf;
    p.V_UF_N = vufn;
    p.degenerate = degen;
    return p;
  };

  SUBCASE("proportional metrics correlate perfectly") {
    const CorrelationStudy cs =
        correlation_study({pt(0.1, 0.2), pt(0.2, 0.4), pt(0.3, 0.6)});
    REQUIRE(cs.defined);
    CHECK(cs.r == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("opposed metrics correlate negatively") {
    const CorrelationStudy cs =
        correlation_study({pt(0.1, 0.6), pt(0.2, 0.4), pt(0.3, 0.2)});
    REQUIRE(cs.defined);
    CHECK(cs.r == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("degenerate points are excluded") {
    const CorrelationStudy cs = correlation_study(
        {pt(0.1, 0.2), pt(0.2, 0.4), pt(0.3, 0.6),
         pt(std::numeric_limits<double>::quiet_NaN(), 99.0, true)});
    REQUIRE(cs.defined);
    CHECK(cs.r == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant metrics have no correlation") {
    const CorrelationStudy cs =
        correlation_study({pt(0.1, 0.2), pt(0.1, 0.4), pt(0.1, 0.6)});
    CHECK(!cs.defined);
    CHECK(!cs.note.empty());
  }
  SUBCASE("fewer than two usable points") {
    const CorrelationStudy cs = correlation_study({pt(0.1, 0.2)});
    CHECK(!cs.defined);
    CHECK(cs.note.find("fewer") != std::string::npos);
  }
}

TEST_CASE("grid sweep yields ordered rows with shared frequency droop") {
  const models::Example e = models::sweep_small();
  SweepSpec spec;
  spec.k_bal_values = {0.0, 30.0};
  spec.load_values = {0.2, 0.4};
  spec.sweep_buses = {5};
  spec.measure_bus = 3;

  const SweepResult res = run_sweep(e.model, e.converters, spec);
  REQUIRE(res.rows.size() == 4);
  const double grid[4][2] = {{0, 0.2}, {0, 0.4}, {30, 0.2}, {30, 0.4}};
  for (int i = 0; i < 4; ++i) {
    const SweepRow& r = res.rows[static_cast<size_t>(i)];
    CHECK(r.k_bal == grid[i][0]);
    CHECK(r.load == grid[i][1]);
    CHECK(r.stable);
    CHECK(r.error.empty());
    CHECK(r.omega == doctest::Approx(-0.05 * r.load / 5.0).epsilon(1e-9));
    CHECK(!r.metrics.degenerate);
  }
  CHECK(res.rows[2].metrics.V_UF_N < res.rows[0].metrics.V_UF_N);
  CHECK(res.rows[3].metrics.V_UF_N < res.rows[1].metrics.V_UF_N);

  const SweepResult again = run_sweep(e.model, e.converters, spec);
  for (size_t i = 0; i < res.rows.size(); ++i) {
    CHECK(res.rows[i].omega == again.rows[i].omega);
    CHECK(res.rows[i].metrics.V_UF_N == again.rows[i].metrics.V_UF_N);
  }

  SweepSpec bad = spec;
  bad.sweep_buses = {99};
  CHECK_THROWS_AS(run_sweep(e.model, e.converters, bad), SemanticError);
  bad = spec;
  bad.k_bal_values.clear();
  CHECK_THROWS_AS(run_sweep(e.model, e.converters, bad), SemanticError);
}

TEST_CASE("trajectory channels are labeled by node") {
  const models::Example e = models::sweep_small();
  const ClosedLoopModel cl = build_cl(e);
  const Trajectory traj =
      simulate(cl, Eigen::VectorXd::Zero(cl.n_states()), {}, 0.2, 0.1);

  REQUIRE(traj.omega_labels.size() == 5);
  CHECK(traj.omega_labels[0] == "omega_1");
  CHECK(traj.omega_labels[4] == "omega_4");

  REQUIRE(traj.phase_labels.size() == 13);
  CHECK(traj.phase_labels[0] == "1_a");
  CHECK(traj.phase_labels[2] == "1_c");
  CHECK(traj.phase_labels[3] == "3_a");
  CHECK(traj.phase_labels[6] == "4");
  CHECK(traj.phase_labels[7] == "2_a");
  CHECK(traj.phase_labels[10] == "5_a");

  CHECK(traj.V_ext.rows() == 14);  // angle and magnitude per exterior phase
  CHECK(traj.V_int.rows() == 12);
  CHECK(traj.P.rows() == 7);
  CHECK(traj.Q.rows() == 7);
}
