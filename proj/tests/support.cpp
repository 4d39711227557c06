#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "edfr/casestudy.hpp"
#include "edfr/io.hpp"
#include "edfr/market.hpp"
#include "edfr/qp.hpp"

namespace support {

double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

edfr::Network random_network(Rng& rng, int n_nodes, int extra_lines, double capacity) {
  std::vector<std::string> ids;
  for (int i = 0; i < n_nodes; ++i) ids.push_back("n" + std::to_string(i));
  std::vector<edfr::Line> lines;
  for (int i = 1; i < n_nodes; ++i)
    lines.push_back({uniform_int(rng, 0, i - 1), i, uniform(rng, 0.5, 5.0), capacity});
  for (int e = 0; e < extra_lines && n_nodes >= 2; ++e) {
    const int a = uniform_int(rng, 0, n_nodes - 1);
    const int b = uniform_int(rng, 0, n_nodes - 1);
    if (a == b) continue;
    lines.push_back({a, b, uniform(rng, 0.5, 5.0), capacity});
  }
  return edfr::Network::build(ids, lines);
}

RandomInstance random_instance(Rng& rng, const InstanceSpec& spec) {
  for (int attempt = 0; attempt < 120; ++attempt) {
    const int n = uniform_int(rng, std::max(2, spec.min_nodes), spec.max_nodes);

    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
    std::vector<edfr::Line> lines;
    for (int i = 1; i < n; ++i)
      lines.push_back({uniform_int(rng, 0, i - 1), i, uniform(rng, 0.5, 5.0), 1e6});
    const int extra = uniform_int(rng, 0, 2);
    for (int e = 0; e < extra; ++e) {
      const int a = uniform_int(rng, 0, n - 1);
      const int b = uniform_int(rng, 0, n - 1);
      if (a != b) lines.push_back({a, b, uniform(rng, 0.5, 5.0), 1e6});
    }
    const edfr::Network net0 = edfr::Network::build(ids, lines);

    edfr::GeneratorFleet fleet;
    fleet.dispatch.assign(n, edfr::Generator{});
    fleet.regulation.assign(n, edfr::Generator{});
    int n_reg = 0, n_disp = 0;
    auto make_gen = [&](bool regulation) {
      edfr::Generator g;
      g.present = true;
      g.lo = regulation ? uniform(rng, -8.0, 4.0) : uniform(rng, 0.0, 8.0);
      g.hi = g.lo + uniform(rng, 8.0, regulation ? 40.0 : 50.0);
      g.cost.a = uniform(rng, 0.0, 5.0);
      g.cost.b = uniform(rng, 1.0, 40.0);
      g.cost.c = uniform(rng, 0.05, 2.0);
      return g;
    };
    for (int i = 0; i < n; ++i) {
      if (uniform(rng, 0.0, 1.0) < 0.7) {
        fleet.dispatch[i] = make_gen(false);
        ++n_disp;
      }
      if (uniform(rng, 0.0, 1.0) < 0.7 &&
          (spec.max_reg_nodes == 0 || n_reg < spec.max_reg_nodes)) {
        fleet.regulation[i] = make_gen(true);
        ++n_reg;
      }
    }
    if (n_disp == 0) fleet.dispatch[0] = make_gen(false);
    if (n_reg == 0) fleet.regulation[n - 1] = make_gen(true);

    double lo_b = 0, hi_b = 0, lo_r = 0, hi_r = 0;
    for (int i = 0; i < n; ++i) {
      if (fleet.dispatch[i].present) lo_b += fleet.dispatch[i].lo, hi_b += fleet.dispatch[i].hi;
      if (fleet.regulation[i].present) lo_r += fleet.regulation[i].lo, hi_r += fleet.regulation[i].hi;
    }
    const double lb = lo_b + lo_r, ub = hi_b + hi_r;

    Eigen::VectorXd d1(n);
    for (int i = 0; i < n; ++i) d1(i) = uniform(rng, 1.0, 20.0);
    const double target = lb + uniform(rng, 0.3, 0.7) * (ub - lb);
    d1 *= target / d1.sum();

    int k = uniform_int(rng, 1, spec.max_periods);
    int ns = uniform_int(rng, 1, spec.max_samples);
    while (1 + ns * (k - 1) > spec.max_outcomes) {
      if (ns > 1)
        --ns;
      else
        --k;
    }
    const double shrink = attempt >= 30 ? 0.2 : 1.0;
    const double sigma = uniform(rng, 0.002, 0.012) * shrink;
    const double mu = uniform(rng, -0.004, 0.004) * shrink;
    const edfr::ScenarioTree tree = edfr::sample_random_walk(d1, mu, sigma, k, ns, rng());

    // the whole tree must stay servable with one fixed dispatch setpoint
    const double margin = 1e-3 * (ub - lb + 1.0);
    double q_lo = lo_b, q_hi = hi_b;
    bool ok = true;
    for (const auto& o : tree.outcomes) {
      const double d = o.demand.sum();
      if (d < lb + margin || d > ub - margin) ok = false;
      q_lo = std::max(q_lo, d - hi_r);
      q_hi = std::min(q_hi, d - lo_r);
    }
    if (!ok || q_hi - q_lo < margin) continue;

    // witness schedule -> flows -> capacities with controlled slack
    const double qb_w = 0.5 * (q_lo + q_hi);
    const double t_b = hi_b > lo_b ? (qb_w - lo_b) / (hi_b - lo_b) : 0.0;
    Eigen::VectorXd base_gen = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
      if (fleet.dispatch[i].present)
        base_gen(i) = fleet.dispatch[i].lo + t_b * (fleet.dispatch[i].hi - fleet.dispatch[i].lo);

    Eigen::VectorXd worst_flow = Eigen::VectorXd::Zero(net0.line_count());
    for (const auto& o : tree.outcomes) {
      const double d = o.demand.sum();
      const double t_s = hi_r > lo_r ? (d - qb_w - lo_r) / (hi_r - lo_r) : 0.0;
      Eigen::VectorXd inj = base_gen - o.demand;
      for (int i = 0; i < n; ++i)
        if (fleet.regulation[i].present)
          inj(i) += fleet.regulation[i].lo + t_s * (fleet.regulation[i].hi - fleet.regulation[i].lo);
      worst_flow = worst_flow.cwiseMax(net0.line_flows(inj).cwiseAbs());
    }
    const bool tight = spec.allow_congestion && uniform(rng, 0.0, 1.0) < 0.6;
    for (std::size_t l = 0; l < lines.size(); ++l)
      lines[l].capacity_mw = tight ? worst_flow(static_cast<int>(l)) * uniform(rng, 1.02, 1.3) + 0.2
                                   : worst_flow(static_cast<int>(l)) * uniform(rng, 1.5, 2.5) + 5.0;

    RandomInstance inst;
    inst.net = edfr::Network::build(ids, lines);
    inst.fleet = std::move(fleet);
    inst.tree = tree;
    return inst;
  }
  throw std::runtime_error("random_instance: no feasible draw in 120 attempts");
}

std::optional<GridResult> grid_search_fr(const edfr::Network& net,
                                         const edfr::GeneratorFleet& fleet,
                                         const edfr::VariableMap& vm, const Eigen::VectorXd& q_b,
                                         const Eigen::VectorXd& demand, double final_step) {
  const int np = vm.n_regulation();
  if (np < 1 || np > 3) return std::nullopt;
  const int n = net.node_count();

  Eigen::VectorXd lo(np), hi(np);
  std::vector<edfr::QuadCost> cost(np);
  for (int j = 0; j < np; ++j) {
    const auto& g = fleet.regulation[vm.regulation_nodes[j]];
    lo(j) = g.lo;
    hi(j) = g.hi;
    cost[j] = g.cost;
  }
  const double target = demand.sum() - q_b.sum();

  Eigen::VectorXd inj0 = -demand;
  for (int j = 0; j < vm.n_dispatch(); ++j) inj0(vm.dispatch_nodes[j]) += q_b(j);
  const Eigen::MatrixXd& shift = net.shift_factors();

  auto evaluate = [&](const Eigen::VectorXd& y) -> std::optional<double> {
    for (int j = 0; j < np; ++j)
      if (y(j) < lo(j) - 1e-9 || y(j) > hi(j) + 1e-9) return std::nullopt;
    Eigen::VectorXd inj = inj0;
    for (int j = 0; j < np; ++j) inj(vm.regulation_nodes[j]) += y(j);
    const Eigen::VectorXd flow = shift * inj;
    for (int l = 0; l < net.line_count(); ++l) {
      const double cap = net.lines()[l].capacity_mw;
      if (std::abs(flow(l)) > cap + 1e-7 * (1.0 + cap)) return std::nullopt;
    }
    double obj = 0.0;
    for (int j = 0; j < np; ++j) obj += cost[j].value(y(j));
    return obj;
  };

  const int d = np - 1;
  if (d == 0) {
    Eigen::VectorXd y(1);
    y(0) = target;
    const auto obj = evaluate(y);
    if (!obj) return std::nullopt;
    return GridResult{*obj, y};
  }

  // With the last unit absorbing the balance, every flow is affine in the
  // free coordinates: flow = fbase + sum_j y_j * gcol_j.  Each constraint is
  // then an interval in one coordinate at fixed others, so the search can
  // walk the feasible polytope exactly instead of hoping a rectangular grid
  // lands inside it (binding line limits leave slivers any grid misses).
  const int nl = net.line_count();
  const int last = vm.regulation_nodes[d];
  const Eigen::VectorXd fbase = shift * inj0 + target * shift.col(last);
  Eigen::MatrixXd gcol(nl, d);
  for (int j = 0; j < d; ++j) gcol.col(j) = shift.col(vm.regulation_nodes[j]) - shift.col(last);
  const double eps_g = 1e-12 * (1.0 + 2.0 * shift.cwiseAbs().maxCoeff());
  Eigen::VectorXd cap_eff(nl);
  for (int l = 0; l < nl; ++l)  // half the evaluator's slack keeps edge probes acceptable
    cap_eff(l) = net.lines()[l].capacity_mw + 5e-8 * (1.0 + net.lines()[l].capacity_mw);

  Eigen::VectorXd wlo(d), whi(d);
  for (int j = 0; j < d; ++j) wlo(j) = lo(j), whi(j) = hi(j);

  bool have_best = false;
  Eigen::VectorXd best(np);
  double best_obj = 0.0;
  auto probe = [&](const Eigen::VectorXd& y) {
    const auto obj = evaluate(y);
    if (obj && (!have_best || *obj < best_obj)) {
      have_best = true;
      best_obj = *obj;
      best = y;
    }
  };

  // Exact feasible interval of the innermost coordinate with the others fixed
  // (their flow contribution folded into f0); empty when first > second.
  auto inner_interval = [&](const Eigen::VectorXd& f0, double other_sum, double win_lo,
                            double win_hi) {
    double a = std::max(win_lo, target - other_sum - hi(d));
    double b = std::min(win_hi, target - other_sum - lo(d));
    for (int l = 0; l < nl; ++l) {
      const double g = gcol(l, d - 1);
      if (std::abs(g) <= eps_g) {
        if (std::abs(f0(l)) > cap_eff(l)) return std::make_pair(1.0, 0.0);
        continue;
      }
      const double t1 = (-cap_eff(l) - f0(l)) / g;
      const double t2 = (cap_eff(l) - f0(l)) / g;
      a = std::max(a, std::min(t1, t2));
      b = std::min(b, std::max(t1, t2));
    }
    return std::make_pair(a, b);
  };

  auto scan1 = [&](int points) {
    const auto [A, B] = inner_interval(fbase, 0.0, wlo(0), whi(0));
    if (A > B) return;
    Eigen::VectorXd y(np);
    const int p = B > A ? points : 1;
    for (int i = 0; i < p; ++i) {
      y(0) = p == 1 ? 0.5 * (A + B) : A + (B - A) * i / (p - 1);
      y(1) = target - y(0);
      probe(y);
    }
  };

  // Two free coordinates: the inner interval's width is concave in the outer
  // one (min of affine upper ends minus max of affine lower ends), so the
  // outer feasible set is a single interval; ternary search finds its widest
  // point and bisection its edges.
  auto outer_range = [&]() -> std::optional<std::pair<double, double>> {
    double c_lo = std::max(wlo(0), target - whi(1) - hi(d));
    double c_hi = std::min(whi(0), target - wlo(1) - lo(d));
    for (int l = 0; l < nl; ++l) {  // lines blind to the inner coordinate clip the outer one
      if (std::abs(gcol(l, 1)) > eps_g) continue;
      const double g = gcol(l, 0);
      if (std::abs(g) <= eps_g) {
        if (std::abs(fbase(l)) > cap_eff(l)) return std::nullopt;
        continue;
      }
      const double t1 = (-cap_eff(l) - fbase(l)) / g;
      const double t2 = (cap_eff(l) - fbase(l)) / g;
      c_lo = std::max(c_lo, std::min(t1, t2));
      c_hi = std::min(c_hi, std::max(t1, t2));
    }
    if (c_lo > c_hi) return std::nullopt;
    auto width = [&](double y0) {
      const auto [a, b] = inner_interval(fbase + y0 * gcol.col(0), y0, wlo(1), whi(1));
      return b - a;
    };
    double a = c_lo, b = c_hi;
    for (int it = 0; it < 200 && b - a > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
      const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
      if (width(m1) < width(m2))
        a = m1;
      else
        b = m2;
    }
    const double peak = 0.5 * (a + b);
    if (width(peak) < 0.0) return std::nullopt;
    double e_lo = c_lo, e_hi = c_hi;
    if (width(c_lo) < 0.0) {
      double u = c_lo, v = peak;
      for (int it = 0; it < 100; ++it) {
        const double m = 0.5 * (u + v);
        (width(m) < 0.0 ? u : v) = m;
      }
      e_lo = v;
    }
    if (width(c_hi) < 0.0) {
      double u = peak, v = c_hi;
      for (int it = 0; it < 100; ++it) {
        const double m = 0.5 * (u + v);
        (width(m) < 0.0 ? v : u) = m;
      }
      e_hi = u;
    }
    return std::make_pair(e_lo, e_hi);
  };

  auto scan2 = [&](int points) {
    const auto range = outer_range();
    if (!range) return;
    const auto [r_lo, r_hi] = *range;
    Eigen::VectorXd y(np);
    const int p1 = r_hi > r_lo ? points : 1;
    for (int i1 = 0; i1 < p1; ++i1) {
      y(0) = p1 == 1 ? 0.5 * (r_lo + r_hi) : r_lo + (r_hi - r_lo) * i1 / (p1 - 1);
      const auto [A, B] = inner_interval(fbase + y(0) * gcol.col(0), y(0), wlo(1), whi(1));
      if (A > B) continue;
      const int p2 = B > A ? points : 1;
      for (int i2 = 0; i2 < p2; ++i2) {
        y(1) = p2 == 1 ? 0.5 * (A + B) : A + (B - A) * i2 / (p2 - 1);
        y(2) = target - y(0) - y(1);
        probe(y);
      }
    }
  };

  double step = 0.0;
  for (int iter = 0; iter < 60; ++iter) {
    const int points = 33;
    double span = 0.0;
    for (int j = 0; j < d; ++j) span = std::max(span, whi(j) - wlo(j));
    step = span / (points - 1);
    if (d == 1)
      scan1(points);
    else
      scan2(points);
    if (!have_best) return std::nullopt;  // the scans cover the polytope exactly
    if (step <= final_step || span <= 0.0) break;
    for (int j = 0; j < d; ++j) {
      wlo(j) = std::max(lo(j), best(j) - 1.6 * step);
      whi(j) = std::min(hi(j), best(j) + 1.6 * step);
    }
  }
  return GridResult{best_obj, best};
}

edfr::DfrInstance dfr_three_bus() {
  std::vector<edfr::Line> lines{{0, 1, 1.0, 10.0}, {1, 2, 1.0, 10.0}, {0, 2, 1.0, 3.0}};
  edfr::DfrInstance inst;
  inst.net = edfr::Network::build({"1", "2", "3"}, lines);
  inst.fleet.dispatch.assign(3, edfr::Generator{});
  inst.fleet.regulation.assign(3, edfr::Generator{});
  const double b[3] = {1.0, 2.0, 4.0};
  for (int i = 0; i < 3; ++i) {
    edfr::Generator g;
    g.present = true;
    g.lo = 0.0;
    g.hi = 10.0;
    g.cost = {0.0, b[i], 1.0};
    inst.fleet.regulation[i] = g;
  }
  inst.q_b = Eigen::VectorXd(0);
  inst.q_p = Eigen::Vector3d(3.0, 3.0, 3.0);
  inst.demand = Eigen::Vector3d(0.0, 0.0, 9.0);
  return inst;
}

// ---- suites -----------------------------------------------------------------

SuiteResult suite_network_invariants(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SuiteResult r;
  r.name = "network-invariants";
  r.cases = cases;
  for (int c = 0; c < cases; ++c) {
    const int n = uniform_int(rng, 2, 8);
    const edfr::Network net = random_network(rng, n, uniform_int(rng, 0, 3), uniform(rng, 1, 100));
    Eigen::VectorXd p(n);
    for (int i = 0; i < n; ++i) p(i) = uniform(rng, -50, 50);
    p.array() -= p.mean();

    const Eigen::MatrixXd& lap = net.laplacian();
    const Eigen::MatrixXd& pinv = net.laplacian_pinv();
    const Eigen::MatrixXd& shift = net.shift_factors();

    double worst = (shift * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff();
    worst = std::max(worst, (lap * (pinv * p) - p).cwiseAbs().maxCoeff() / (1.0 + p.cwiseAbs().maxCoeff()));
    worst = std::max(worst, (pinv * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff());
    worst = std::max(worst, (net.line_flows(p) - shift * p).cwiseAbs().maxCoeff());

    const Eigen::VectorXd ev = net.laplacian_eigenvalues();
    int zero_modes = 0;
    for (int i = 0; i < ev.size(); ++i)
      if (ev(i) <= 1e-9 * std::max(1.0, ev(ev.size() - 1))) ++zero_modes;
    if (zero_modes != 1) {
      r.pass = false;
      r.detail = "zero mode count " + std::to_string(zero_modes);
    }
    const Eigen::VectorXd colsum = net.incidence().colwise().sum();
    if (colsum.size() > 0 && colsum.cwiseAbs().maxCoeff() != 0.0) r.pass = false;

    r.worst = std::max(r.worst, worst);
  }
  if (r.worst > 1e-8) r.pass = false;
  return r;
}

SuiteResult suite_tree_invariants(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SuiteResult r;
  r.name = "tree-invariants";
  r.cases = cases;
  for (int c = 0; c < cases; ++c) {
    const int n = uniform_int(rng, 1, 6);
    Eigen::VectorXd d1(n);
    for (int i = 0; i < n; ++i) d1(i) = uniform(rng, 1, 30);
    const int k = uniform_int(rng, 1, 6);
    const int ns = uniform_int(rng, 1, 5);
    const double sigma = uniform(rng, 0.0, 0.05);
    const double mu = uniform(rng, -0.01, 0.01);
    const std::uint64_t s = rng();

    const auto tree = edfr::sample_random_walk(d1, mu, sigma, k, ns, s);
    if (!edfr::validate_tree(tree).empty()) {
      r.pass = false;
      r.detail = "structural violation";
    }
    r.worst = std::max(r.worst, std::abs(tree.total_mass() - k));
    const int expected = k > 1 ? 1 + ns * (k - 1) : 1;
    if (tree.size() != expected) r.pass = false;

    const auto again = edfr::sample_random_walk(d1, mu, sigma, k, ns, s);
    for (int i = 0; i < tree.size(); ++i)
      if ((tree.outcomes[i].demand - again.outcomes[i].demand).cwiseAbs().maxCoeff() != 0.0)
        r.pass = false;

    const auto paths = edfr::sample_paths(tree);
    if (static_cast<int>(paths.size()) != (k > 1 ? ns : 1)) r.pass = false;
    std::vector<int> visits(tree.size(), 0);
    for (const auto& path : paths) {
      if (static_cast<int>(path.size()) != k) r.pass = false;
      for (std::size_t j = 1; j < path.size(); ++j)
        if (tree.outcomes[path[j]].parent != tree.outcomes[path[j - 1]].id) r.pass = false;
      for (int idx : path) ++visits[idx];
    }
    for (int i = 0; i < tree.size(); ++i) {
      const int expect_visits = tree.outcomes[i].parent == -1 ? static_cast<int>(paths.size()) : 1;
      if (visits[i] != expect_visits) r.pass = false;
    }
  }
  if (r.worst > 1e-12) r.pass = false;
  return r;
}

SuiteResult suite_qp_kkt(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SuiteResult r;
  r.name = "qp-kkt";
  r.cases = cases;
  for (int c = 0; c < cases; ++c) {
    const auto inst = random_instance(rng);
    const auto vm = edfr::VariableMap::build(inst.fleet);
    const auto prog = edfr::build_system_program(inst.net, inst.fleet, inst.tree, vm);
    const auto sol = edfr::solve(prog);
    const auto rep = edfr::kkt_residual(prog, sol);
    r.worst = std::max(r.worst, rep.max_residual() / (1.0 + std::abs(sol.objective)));

    // a corrupted balance dual must light up the stationarity residual
    auto bad = sol;
    bad.duals[0].rows(0) += 1.0;
    if (edfr::kkt_residual(prog, bad).stationarity < 0.1) {
      r.pass = false;
      r.detail = "dual perturbation undetected";
    }
  }
  if (r.worst > 1e-6) r.pass = false;
  return r;
}

SuiteResult suite_fr_fast(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SuiteResult r;
  r.name = "fast-rebalance";
  r.cases = cases;
  int hits = 0, total = 0;
  for (int c = 0; c < cases; ++c) {
    InstanceSpec spec;
    spec.allow_congestion = c % 2 == 0;
    const auto inst = random_instance(rng, spec);
    const auto vm = edfr::VariableMap::build(inst.fleet);
    const auto ed = edfr::solve_ed(inst.net, inst.fleet, inst.tree.root().demand, inst.tree.K,
                                   Eigen::VectorXd::Zero(inst.net.node_count()));
    for (const auto& o : inst.tree.outcomes) {
      ++total;
      const auto fast = edfr::fr_fast(inst.net, inst.fleet, vm, ed.q_b, o.demand);
      if (!fast) continue;
      try {
        const auto full = edfr::solve_fr(inst.net, inst.fleet, ed.q_b, ed.q_p, o.demand);
        ++hits;
        r.worst = std::max(r.worst, (*fast - full.y).cwiseAbs().maxCoeff() /
                                        (1.0 + full.y.cwiseAbs().maxCoeff()));
      } catch (const edfr::Infeasible&) {
        r.pass = false;  // the fast path claimed a schedule the solver rejects
        r.detail = "fast path on infeasible outcome";
      }
    }
  }
  if (r.worst > 1e-6) r.pass = false;
  if (hits * 4 < total) {
    r.pass = false;
    r.detail = "fast path hit " + std::to_string(hits) + "/" + std::to_string(total);
  }
  if (r.detail.empty())
    r.detail = "fast path hit " + std::to_string(hits) + "/" + std::to_string(total);
  return r;
}

SuiteResult suite_bid_identities(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SuiteResult r;
  r.name = "bid-identities";
  r.cases = cases;
  for (int c = 0; c < cases; ++c) {
    edfr::Generator g;
    g.present = true;
    g.lo = uniform(rng, -5, 5);
    g.hi = g.lo + uniform(rng, 2, 40);
    g.cost.a = uniform(rng, 0, 5);
    g.cost.b = uniform(rng, 0.5, 30);
    g.cost.c = uniform(rng, 0.05, 3);
    const double gamma = uniform(rng, 0.3, 3.0);
    const edfr::SupplyBid truthful{gamma, gamma};

    for (int i = 0; i <= 6; ++i) {
      const double q = g.lo + (g.hi - g.lo) * i / 6.0;
      const double scale = 1.0 + std::abs(g.cost.value(q));
      r.worst = std::max(r.worst, std::abs(edfr::bid_cost(g, truthful, q) -
                                           (g.cost.value(q) - g.cost.value(g.lo))) /
                                      scale);
      r.worst = std::max(r.worst,
                         std::abs(edfr::bid_marginal(g, truthful, q) - g.cost.marginal(q)) / scale);
      if (i > 0 && i < 6) {
        const double back = edfr::supply_quantity(g, truthful, edfr::bid_marginal(g, truthful, q));
        r.worst = std::max(r.worst, std::abs(back - q) / (1.0 + std::abs(q)));
      }
    }

    // halving the slope parameter doubles implied output sensitivity
    const edfr::SupplyBid shaded{2.0 * gamma, gamma};
    const double q1 = g.lo + 0.25 * (g.hi - g.lo), q2 = g.lo + 0.75 * (g.hi - g.lo);
    const double slope =
        (edfr::bid_marginal(g, shaded, q2) - edfr::bid_marginal(g, shaded, q1)) / (q2 - q1);
    r.worst = std::max(r.worst, std::abs(slope - 0.5 * g.cost.c) / (1.0 + g.cost.c));

    bool threw = false;
    try {
      edfr::bid_cost(g, truthful, g.hi + 1.0);
    } catch (const edfr::OutOfBounds&) {
      threw = true;
    }
    if (!threw) {
      r.pass = false;
      r.detail = "no out-of-bounds throw";
    }
  }
  if (r.worst > 1e-9) r.pass = false;
  return r;
}

SuiteResult suite_controller_bounds(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SuiteResult r;
  r.name = "controller-bounds";
  r.cases = cases;
  for (int c = 0; c < cases; ++c) {
    const auto ri = random_instance(rng);
    const auto vm = edfr::VariableMap::build(ri.fleet);
    const int n = ri.net.node_count();

    edfr::DfrInstance inst;
    inst.net = ri.net;
    inst.fleet = ri.fleet;
    inst.demand = ri.tree.root().demand;
    inst.barrier = (c % 3 == 0) ? 0.0 : (c % 3 == 1 ? 0.01 : 1.0);
    inst.q_b = Eigen::VectorXd(vm.n_dispatch());
    for (int j = 0; j < vm.n_dispatch(); ++j) {
      const auto& g = ri.fleet.dispatch[vm.dispatch_nodes[j]];
      inst.q_b(j) = 0.5 * (g.lo + g.hi);
    }
    inst.q_p = Eigen::VectorXd(vm.n_regulation());
    for (int j = 0; j < vm.n_regulation(); ++j) {
      const auto& g = ri.fleet.regulation[vm.regulation_nodes[j]];
      inst.q_p(j) = 0.5 * (g.lo + g.hi);
    }

    Eigen::VectorXd omega(n), pi(n);
    for (int i = 0; i < n; ++i) omega(i) = uniform(rng, -50, 50), pi(i) = uniform(rng, -50, 50);
    const Eigen::VectorXd resp = edfr::controller_response(inst, omega, pi);

    for (int i = 0; i < n; ++i) {
      const auto& g = ri.fleet.regulation[i];
      if (!g.present) {
        r.worst = std::max(r.worst, std::abs(resp(i)));
        continue;
      }
      double q_p_i = 0.0;
      for (int j = 0; j < vm.n_regulation(); ++j)
        if (vm.regulation_nodes[j] == i) q_p_i = inst.q_p(j);
      const double y = q_p_i + resp(i);
      if (y < g.lo - 1e-9 || y > g.hi + 1e-9) {
        r.pass = false;
        r.detail = "capacity band violated";
      }
      if (inst.barrier > 0.0 && !(y > g.lo && y < g.hi)) {
        r.pass = false;
        r.detail = "barrier response touched the band edge";
      }
    }

    // production never increases with local frequency
    Eigen::VectorXd omega2 = omega;
    const int bump = uniform_int(rng, 0, n - 1);
    omega2(bump) += uniform(rng, 0.1, 5.0);
    const Eigen::VectorXd resp2 = edfr::controller_response(inst, omega2, pi);
    if (resp2(bump) > resp(bump) + 1e-12) {
      r.pass = false;
      r.detail = "response not monotone in frequency";
    }
  }
  if (r.worst > 1e-9) r.pass = false;
  return r;
}

SuiteResult suite_io_roundtrip(std::uint64_t seed, int cases) {
  Rng rng(seed);
  SuiteResult r;
  r.name = "io-roundtrip";
  r.cases = cases;
  for (int c = 0; c < cases; ++c) {
    const auto ri = random_instance(rng);
    edfr::ProblemInstance pi;
    pi.net = ri.net;
    pi.fleet = ri.fleet;
    pi.tree = ri.tree;
    pi.has_tree = true;

    const std::string text = edfr::instance_to_json(pi).dump();
    const auto back = edfr::instance_from_json(edfr::json::parse(text));

    bool same = back.net.node_ids() == ri.net.node_ids() &&
                back.net.line_count() == ri.net.line_count() && back.has_tree &&
                back.tree.size() == ri.tree.size();
    if (same) {
      for (int l = 0; l < ri.net.line_count(); ++l) {
        const auto &a = ri.net.lines()[l], &b = back.net.lines()[l];
        same = same && a.tail == b.tail && a.head == b.head && a.susceptance == b.susceptance &&
               a.capacity_mw == b.capacity_mw;
      }
      for (int i = 0; i < ri.net.node_count() && same; ++i) {
        const auto cmp = [&](const edfr::Generator& x, const edfr::Generator& y) {
          return x.present == y.present && x.lo == y.lo && x.hi == y.hi && x.cost.a == y.cost.a &&
                 x.cost.b == y.cost.b && x.cost.c == y.cost.c;
        };
        same = cmp(ri.fleet.dispatch[i], back.fleet.dispatch[i]) &&
               cmp(ri.fleet.regulation[i], back.fleet.regulation[i]);
      }
      for (int s = 0; s < ri.tree.size() && same; ++s) {
        const auto &a = ri.tree.outcomes[s], &b = back.tree.outcomes[s];
        same = a.id == b.id && a.period == b.period && a.parent == b.parent && a.p == b.p &&
               (a.demand - b.demand).cwiseAbs().maxCoeff() == 0.0;
      }
    }
    if (!same) {
      r.pass = false;
      r.detail = "round trip not exact";
      r.worst = 1.0;
    }
  }
  return r;
}

std::vector<SuiteResult> all_suites(std::uint64_t seed, int cases) {
  return {
      suite_network_invariants(seed + 1, cases), suite_tree_invariants(seed + 2, cases),
      suite_qp_kkt(seed + 3, cases),             suite_fr_fast(seed + 4, cases),
      suite_bid_identities(seed + 5, cases),     suite_controller_bounds(seed + 6, cases),
      suite_io_roundtrip(seed + 7, cases),
  };
}

}  // namespace support
