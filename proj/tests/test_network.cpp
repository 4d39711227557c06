#include <doctest.h>

#include <cmath>

#include "edfr/network.hpp"
#include "support.hpp"

using edfr::Generator;
using edfr::GeneratorFleet;
using edfr::Line;
using edfr::Network;

namespace {

Network two_node() { return Network::build({"a", "b"}, {{0, 1, 2.0, 5.0}}); }

}  // namespace

TEST_CASE("two-node flow operators") {
  const Network net = two_node();
  CHECK(net.node_count() == 2);
  CHECK(net.line_count() == 1);

  // H = B C^T Lap^+ for a single line of susceptance 2
  CHECK(net.shift_factors()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(net.shift_factors()(0, 1) == doctest::Approx(-0.5).epsilon(1e-12));

  const Eigen::VectorXd ev = net.laplacian_eigenvalues();
  CHECK(ev(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ev(1) == doctest::Approx(4.0).epsilon(1e-10));

  Eigen::MatrixXd expected_pinv(2, 2);
  expected_pinv << 0.125, -0.125, -0.125, 0.125;
  CHECK((net.laplacian_pinv() - expected_pinv).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::Vector2d p(2.0, -2.0);
  CHECK(net.line_flows(p)(0) == doctest::Approx(2.0).epsilon(1e-10));

  Eigen::Vector2d phi(1.0, 0.0);
  CHECK(net.potential_flows(phi)(0) == doctest::Approx(2.0).epsilon(1e-12));

  CHECK(net.capacities()(0) == 5.0);
  CHECK(net.node_index("a") == 0);
  CHECK(net.node_index("b") == 1);
  CHECK_THROWS_AS((void)net.node_index("zz"), edfr::Error);
}

TEST_CASE("triangle spectrum and flow split") {
  const Network net =
      Network::build({"1", "2", "3"}, {{0, 1, 1.0, 10}, {1, 2, 1.0, 10}, {0, 2, 1.0, 10}});
  const Eigen::VectorXd ev = net.laplacian_eigenvalues();
  CHECK(ev(0) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(ev(1) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(ev(2) == doctest::Approx(3.0).epsilon(1e-10));

  Eigen::Vector3d p(3.0, 0.0, -3.0);
  const Eigen::VectorXd f = net.line_flows(p);
  CHECK(f(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(f(1) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(f(2) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("construction rejects bad inputs") {
  CHECK_THROWS_AS(Network::build({"a", "b"}, {{0, 1, 0.0, 5.0}}), edfr::NonpositiveSusceptance);
  CHECK_THROWS_AS(Network::build({"a", "b"}, {{0, 1, -1.0, 5.0}}), edfr::NonpositiveSusceptance);
  CHECK_THROWS_AS(Network::build({"a", "b", "c", "d"}, {{0, 1, 1.0, 5.0}, {2, 3, 1.0, 5.0}}),
                  edfr::DisconnectedGraph);

  const Network net = two_node();
  CHECK_THROWS_AS((void)net.line_flows(Eigen::Vector2d(1.0, 0.0)), edfr::UnbalancedInjection);
  CHECK_THROWS_AS((void)net.line_flows(Eigen::Vector3d::Zero()), edfr::DimensionMismatch);
}

TEST_CASE("quadratic cost evaluations") {
  const edfr::QuadCost c{1.0, 2.0, 4.0};
  CHECK(c.value(3.0) == doctest::Approx(25.0));
  CHECK(c.marginal(3.0) == doctest::Approx(14.0));
  CHECK(c.inverse_marginal(14.0) == doctest::Approx(3.0));
}

TEST_CASE("fleet validation") {
  GeneratorFleet fleet;
  fleet.dispatch.assign(1, Generator{});
  fleet.regulation.assign(1, Generator{});
  fleet.dispatch[0] = {true, 0.0, 10.0, {0.0, 1.0, 1.0}};
  CHECK_NOTHROW(fleet.validate());

  fleet.dispatch[0].cost.c = 0.0;
  CHECK_THROWS_AS(fleet.validate(), edfr::InvalidParameters);
  fleet.dispatch[0].cost.c = 1e-7;
  CHECK_THROWS_AS(fleet.validate(), edfr::InvalidParameters);
  CHECK_NOTHROW(fleet.validate(1e-8));

  fleet.dispatch[0].cost.c = 1.0;
  fleet.dispatch[0].lo = 11.0;
  CHECK_THROWS_AS(fleet.validate(), edfr::InvalidParameters);
}

TEST_CASE("operating point feasibility report") {
  const Network net = Network::build({"a", "b"}, {{0, 1, 2.0, 7.0}});
  GeneratorFleet fleet;
  fleet.dispatch.assign(2, Generator{});
  fleet.regulation.assign(2, Generator{});
  fleet.dispatch[0] = {true, 0.0, 10.0, {0.0, 1.0, 1.0}};
  fleet.regulation[1] = {true, 0.0, 5.0, {0.0, 1.0, 1.0}};

  Eigen::Vector2d demand(0.0, 8.0);
  Eigen::Vector2d q_b(6.0, 0.0), q_p(0.0, 2.0), r(0.0, 0.0);
  CHECK(edfr::check_feasible(net, fleet, q_b, q_p, r, demand).feasible);

  auto rep = edfr::check_feasible(net, fleet, Eigen::Vector2d(11.0, 0.0), q_p,
                                  Eigen::Vector2d(0.0, -3.0), demand);
  CHECK_FALSE(rep.feasible);
  bool saw_dispatch = false, saw_balance = false;
  for (const auto& v : rep.violations) {
    if (v.kind == "dispatch-bound") saw_dispatch = true;
    if (v.kind == "balance") saw_balance = true;
  }
  CHECK(saw_dispatch);
  CHECK(saw_balance);

  // regulation band and line limit
  rep = edfr::check_feasible(net, fleet, Eigen::Vector2d(6.0, 0.0), q_p, Eigen::Vector2d(0.0, 4.0),
                             Eigen::Vector2d(0.0, 12.0));
  CHECK_FALSE(rep.feasible);
  bool saw_reg = false;
  for (const auto& v : rep.violations)
    if (v.kind == "regulation-bound") saw_reg = true;
  CHECK(saw_reg);

  const Network tight = Network::build({"a", "b"}, {{0, 1, 2.0, 5.0}});
  rep = edfr::check_feasible(tight, fleet, q_b, q_p, r, demand);
  CHECK_FALSE(rep.feasible);
  bool saw_line = false;
  for (const auto& v : rep.violations)
    if (v.kind == "line-limit") saw_line = true;
  CHECK(saw_line);
}

TEST_CASE("network invariant suite") {
  const auto r = support::suite_network_invariants(101, 40);
  INFO(r.detail, " worst ", r.worst);
  CHECK(r.pass);
}
