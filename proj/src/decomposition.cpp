#include "edfr/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace edfr {

namespace {

int root_index(const ScenarioTree& tree) {
  for (size_t i = 0; i < tree.outcomes.size(); ++i)
    if (tree.outcomes[i].period == 1) return static_cast<int>(i);
  throw InvalidParameters("scenario tree has no root outcome");
}

void require_valid_tree(const ScenarioTree& tree, const Network& net) {
  const auto viols = validate_tree(tree);
  if (!viols.empty())
    throw InvalidParameters("scenario tree invalid: " + viols.front().kind + " (" +
                            viols.front().detail + ")");
  for (const Outcome& o : tree.outcomes)
    if (o.demand.size() != net.node_count())
      throw DimensionMismatch("outcome demand length must equal node count");
}

void require_nodal(const Eigen::VectorXd& v, const Network& net, const char* name) {
  if (v.size() != net.node_count())
    throw DimensionMismatch(std::string(name) + " must have one entry per node");
}

double rel_dev(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionMismatch("rel_dev: length mismatch");
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / (1.0 + b.cwiseAbs().maxCoeff());
}

// Balance row + one row per line over a single variable group laid out as
// (dispatch cols | regulation cols); either group may be absent.
void grid_rows(const Network& net, const VariableMap& vm, const Eigen::VectorXd& demand,
               bool with_dispatch, bool with_regulation, Eigen::MatrixXd& rows,
               Eigen::VectorXd& row_lo, Eigen::VectorXd& row_hi) {
  const int L = net.line_count();
  const int nb = with_dispatch ? vm.n_dispatch() : 0;
  const int np = with_regulation ? vm.n_regulation() : 0;
  rows = Eigen::MatrixXd::Zero(1 + L, nb + np);
  row_lo.resize(1 + L);
  row_hi.resize(1 + L);

  rows.row(0).setOnes();
  row_lo(0) = row_hi(0) = demand.sum();

  const Eigen::MatrixXd& H = net.shift_factors();
  const Eigen::VectorXd hd = L > 0 ? Eigen::VectorXd(H * demand) : Eigen::VectorXd();
  for (int l = 0; l < L; ++l) {
    for (int j = 0; j < nb; ++j) rows(1 + l, j) = H(l, vm.dispatch_nodes[j]);
    for (int j = 0; j < np; ++j) rows(1 + l, nb + j) = H(l, vm.regulation_nodes[j]);
    row_lo(1 + l) = -net.lines()[l].capacity_mw + hd(l);
    row_hi(1 + l) = net.lines()[l].capacity_mw + hd(l);
  }
}

void fill_generator_block(const GeneratorFleet& fleet, const std::vector<int>& nodes, bool dispatch,
                          double cost_scale, const Eigen::VectorXd* delta, VarBlock& vb,
                          double& constant) {
  const int n = static_cast<int>(nodes.size());
  vb.quad.resize(n);
  vb.lin.resize(n);
  vb.lo.resize(n);
  vb.hi.resize(n);
  for (int j = 0; j < n; ++j) {
    const Generator& g = dispatch ? fleet.dispatch[nodes[j]] : fleet.regulation[nodes[j]];
    vb.quad(j) = cost_scale * g.cost.c;
    // The price offset is in per-period units, so it scales with the horizon
    // exactly like the production cost it adjusts.
    vb.lin(j) = cost_scale * (g.cost.b - (delta ? (*delta)(nodes[j]) : 0.0));
    vb.lo(j) = g.lo;
    vb.hi(j) = g.hi;
    constant += cost_scale * g.cost.a;
  }
}

}  // namespace

VariableMap VariableMap::build(const GeneratorFleet& fleet) {
  VariableMap vm;
  for (int n = 0; n < fleet.node_count(); ++n) {
    if (fleet.dispatch[n].present) vm.dispatch_nodes.push_back(n);
    if (fleet.regulation[n].present) vm.regulation_nodes.push_back(n);
  }
  return vm;
}

Eigen::VectorXd VariableMap::expand_dispatch(const Eigen::VectorXd& packed, int n_nodes) const {
  if (packed.size() != n_dispatch())
    throw DimensionMismatch("expand_dispatch: packed length mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_nodes);
  for (int j = 0; j < n_dispatch(); ++j) out(dispatch_nodes[j]) = packed(j);
  return out;
}

Eigen::VectorXd VariableMap::expand_regulation(const Eigen::VectorXd& packed, int n_nodes) const {
  if (packed.size() != n_regulation())
    throw DimensionMismatch("expand_regulation: packed length mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_nodes);
  for (int j = 0; j < n_regulation(); ++j) out(regulation_nodes[j]) = packed(j);
  return out;
}

StagedProgram build_system_program(const Network& net, const GeneratorFleet& fleet,
                                   const ScenarioTree& tree, const VariableMap& vm) {
  StagedProgram prog;
  fill_generator_block(fleet, vm.dispatch_nodes, true, static_cast<double>(tree.K), nullptr,
                       prog.first, prog.constant);
  for (const Outcome& o : tree.outcomes) {
    OutcomeBlock ob;
    ob.weight = o.p;
    fill_generator_block(fleet, vm.regulation_nodes, false, 1.0, nullptr, ob.vars, prog.constant);
    // fill_generator_block added cost_scale * a once; the outcome is weighted
    // by p, so rescale the constant contribution accordingly.
    for (int j = 0; j < vm.n_regulation(); ++j)
      prog.constant += (o.p - 1.0) * fleet.regulation[vm.regulation_nodes[j]].cost.a;
    Eigen::MatrixXd rows;
    Eigen::VectorXd lo, hi;
    grid_rows(net, vm, o.demand, true, true, rows, lo, hi);
    ob.rows_first = rows.leftCols(vm.n_dispatch());
    ob.rows_second = rows.rightCols(vm.n_regulation());
    ob.row_lo = lo;
    ob.row_hi = hi;
    prog.outcomes.push_back(std::move(ob));
  }
  return prog;
}

StagedProgram build_ed_program(const Network& net, const GeneratorFleet& fleet,
                               const Eigen::VectorXd& demand, int horizon,
                               const Eigen::VectorXd& delta, const VariableMap& vm) {
  if (horizon < 1) throw InvalidParameters("horizon must be at least 1");
  require_nodal(demand, net, "demand");
  require_nodal(delta, net, "delta");
  StagedProgram prog;
  prog.first = VarBlock::empty();
  OutcomeBlock ob;
  ob.weight = 1.0;
  const double K = static_cast<double>(horizon);
  VarBlock disp, reg;
  fill_generator_block(fleet, vm.dispatch_nodes, true, K, &delta, disp, prog.constant);
  fill_generator_block(fleet, vm.regulation_nodes, false, K, nullptr, reg, prog.constant);
  const int nb = vm.n_dispatch(), np = vm.n_regulation();
  ob.vars.quad.resize(nb + np);
  ob.vars.lin.resize(nb + np);
  ob.vars.lo.resize(nb + np);
  ob.vars.hi.resize(nb + np);
  ob.vars.quad << disp.quad, reg.quad;
  ob.vars.lin << disp.lin, reg.lin;
  ob.vars.lo << disp.lo, reg.lo;
  ob.vars.hi << disp.hi, reg.hi;
  Eigen::MatrixXd rows;
  Eigen::VectorXd lo, hi;
  grid_rows(net, vm, demand, true, true, rows, lo, hi);
  ob.rows_first.resize(rows.rows(), 0);
  ob.rows_second = rows;
  ob.row_lo = lo;
  ob.row_hi = hi;
  prog.outcomes.push_back(std::move(ob));
  return prog;
}

StagedProgram build_robust_ed_program(const Network& net, const GeneratorFleet& fleet,
                                      const ScenarioTree& tree, const Eigen::VectorXd& delta,
                                      const VariableMap& vm) {
  require_nodal(delta, net, "delta");
  const int ridx = root_index(tree);
  StagedProgram prog;
  const double K = static_cast<double>(tree.K);
  VarBlock disp, reg;
  fill_generator_block(fleet, vm.dispatch_nodes, true, K, &delta, disp, prog.constant);
  fill_generator_block(fleet, vm.regulation_nodes, false, K, nullptr, reg, prog.constant);
  const int nb = vm.n_dispatch(), np = vm.n_regulation();
  prog.first.quad.resize(nb + np);
  prog.first.lin.resize(nb + np);
  prog.first.lo.resize(nb + np);
  prog.first.hi.resize(nb + np);
  prog.first.quad << disp.quad, reg.quad;
  prog.first.lin << disp.lin, reg.lin;
  prog.first.lo << disp.lo, reg.lo;
  prog.first.hi << disp.hi, reg.hi;

  // Root outcome: setpoints must serve the root demand with zero recourse.
  {
    OutcomeBlock ob;
    ob.weight = 1.0;
    ob.vars = VarBlock::empty();
    Eigen::MatrixXd rows;
    Eigen::VectorXd lo, hi;
    grid_rows(net, vm, tree.outcomes[ridx].demand, true, true, rows, lo, hi);
    ob.rows_first = rows;
    ob.rows_second.resize(rows.rows(), 0);
    ob.row_lo = lo;
    ob.row_hi = hi;
    prog.outcomes.push_back(std::move(ob));
  }
  // Every later outcome must admit a feasible regulation response.
  for (size_t s = 0; s < tree.outcomes.size(); ++s) {
    if (static_cast<int>(s) == ridx) continue;
    const Outcome& o = tree.outcomes[s];
    OutcomeBlock ob;
    ob.weight = o.p;
    const int nr = vm.n_regulation();
    ob.vars.quad = Eigen::VectorXd::Zero(nr);
    ob.vars.lin = Eigen::VectorXd::Zero(nr);
    ob.vars.lo.resize(nr);
    ob.vars.hi.resize(nr);
    for (int j = 0; j < nr; ++j) {
      const Generator& g = fleet.regulation[vm.regulation_nodes[j]];
      ob.vars.lo(j) = g.lo;
      ob.vars.hi(j) = g.hi;
    }
    Eigen::MatrixXd rows;
    Eigen::VectorXd lo, hi;
    grid_rows(net, vm, o.demand, true, true, rows, lo, hi);
    ob.rows_first.resize(rows.rows(), nb + np);
    ob.rows_first.setZero();
    ob.rows_first.leftCols(nb) = rows.leftCols(nb);
    ob.rows_second = rows.rightCols(nr);
    ob.row_lo = lo;
    ob.row_hi = hi;
    prog.outcomes.push_back(std::move(ob));
  }
  return prog;
}

StagedProgram build_fr_program(const Network& net, const GeneratorFleet& fleet,
                               const Eigen::VectorXd& q_b_packed,
                               const Eigen::VectorXd& q_p_packed, const Eigen::VectorXd& demand,
                               const VariableMap& vm) {
  require_nodal(demand, net, "demand");
  if (q_b_packed.size() != vm.n_dispatch() || q_p_packed.size() != vm.n_regulation())
    throw DimensionMismatch("setpoint lengths must match the generator map");
  StagedProgram prog;
  prog.first = VarBlock::empty();
  OutcomeBlock ob;
  ob.weight = 1.0;
  fill_generator_block(fleet, vm.regulation_nodes, false, 1.0, nullptr, ob.vars, prog.constant);
  const Eigen::VectorXd effective =
      demand - vm.expand_dispatch(q_b_packed, net.node_count());
  Eigen::MatrixXd rows;
  Eigen::VectorXd lo, hi;
  grid_rows(net, vm, effective, false, true, rows, lo, hi);
  ob.rows_first.resize(rows.rows(), 0);
  ob.rows_second = rows;
  ob.row_lo = lo;
  ob.row_hi = hi;
  prog.outcomes.push_back(std::move(ob));
  return prog;
}

namespace {

void split_line_duals(const OutcomeDuals& d, int L, double scale, double& lambda,
                      Eigen::VectorXd& mu_lo, Eigen::VectorXd& mu_hi) {
  lambda = d.rows(0) * scale;
  mu_lo.resize(L);
  mu_hi.resize(L);
  for (int l = 0; l < L; ++l) {
    mu_lo(l) = d.mu_lo(1 + l) * scale;
    mu_hi(l) = d.mu_hi(1 + l) * scale;
  }
}

}  // namespace

SystemSolution solve_system(const Network& net, const GeneratorFleet& fleet,
                            const ScenarioTree& tree, const SolveOptions& opts) {
  fleet.validate();
  if (fleet.node_count() != net.node_count())
    throw DimensionMismatch("fleet node count must equal network node count");
  require_valid_tree(tree, net);
  const VariableMap vm = VariableMap::build(fleet);
  const StagedProgram prog = build_system_program(net, fleet, tree, vm);
  const ConvexSolution sol = solve(prog, opts);

  SystemSolution out;
  out.vm = vm;
  out.q_b = sol.first;
  const int L = net.line_count();
  for (size_t s = 0; s < tree.outcomes.size(); ++s) {
    out.y.push_back(sol.second[s]);
    double lam;
    Eigen::VectorXd ml, mh;
    split_line_duals(sol.duals[s], L, 1.0, lam, ml, mh);
    out.lambda.push_back(lam);
    out.mu_lo.push_back(ml);
    out.mu_hi.push_back(mh);
    out.nodal.push_back(nodal_prices(lam, ml, mh, net));
  }
  out.q_p = out.y[root_index(tree)];
  out.expected_cost = sol.objective;
  out.kkt = sol.kkt;
  out.iterations = sol.iterations;
  out.warnings = sol.warnings;
  return out;
}

EdSolution solve_ed(const Network& net, const GeneratorFleet& fleet, const Eigen::VectorXd& demand,
                    int horizon, const Eigen::VectorXd& delta, const SolveOptions& opts) {
  fleet.validate();
  if (fleet.node_count() != net.node_count())
    throw DimensionMismatch("fleet node count must equal network node count");
  const VariableMap vm = VariableMap::build(fleet);
  const StagedProgram prog = build_ed_program(net, fleet, demand, horizon, delta, vm);
  const ConvexSolution sol = solve(prog, opts);

  EdSolution out;
  out.vm = vm;
  out.delta = delta;
  const int nb = vm.n_dispatch();
  out.q_b = sol.second[0].head(nb);
  out.q_p = sol.second[0].tail(vm.n_regulation());
  split_line_duals(sol.duals[0], net.line_count(), 1.0, out.lambda, out.mu_lo, out.mu_hi);
  out.nodal = nodal_prices(out.lambda, out.mu_lo, out.mu_hi, net);
  const double K = static_cast<double>(horizon);
  out.cost = K * (fleet.dispatch_cost(vm.expand_dispatch(out.q_b, net.node_count())) +
                  fleet.regulation_cost(vm.expand_regulation(out.q_p, net.node_count())));
  out.objective = sol.objective;
  out.kkt = sol.kkt;
  out.warnings = sol.warnings;
  return out;
}

EdSolution solve_ed_robust(const Network& net, const GeneratorFleet& fleet,
                           const ScenarioTree& tree, const Eigen::VectorXd& delta,
                           const SolveOptions& opts) {
  fleet.validate();
  if (fleet.node_count() != net.node_count())
    throw DimensionMismatch("fleet node count must equal network node count");
  require_valid_tree(tree, net);
  const VariableMap vm = VariableMap::build(fleet);
  const StagedProgram prog = build_robust_ed_program(net, fleet, tree, delta, vm);
  const ConvexSolution sol = solve(prog, opts);

  EdSolution out;
  out.vm = vm;
  out.delta = delta;
  const int nb = vm.n_dispatch();
  out.q_b = sol.first.head(nb);
  out.q_p = sol.first.tail(vm.n_regulation());
  split_line_duals(sol.duals[0], net.line_count(), 1.0, out.lambda, out.mu_lo, out.mu_hi);
  out.nodal = nodal_prices(out.lambda, out.mu_lo, out.mu_hi, net);
  const double K = static_cast<double>(tree.K);
  out.cost = K * (fleet.dispatch_cost(vm.expand_dispatch(out.q_b, net.node_count())) +
                  fleet.regulation_cost(vm.expand_regulation(out.q_p, net.node_count())));
  out.objective = sol.objective;
  for (size_t s = 1; s < sol.second.size(); ++s)
    out.recourse_witness.push_back(sol.second[s] - out.q_p);
  out.kkt = sol.kkt;
  out.warnings = sol.warnings;
  return out;
}

FrSolution solve_fr(const Network& net, const GeneratorFleet& fleet,
                    const Eigen::VectorXd& q_b_packed, const Eigen::VectorXd& q_p_packed,
                    const Eigen::VectorXd& demand, const SolveOptions& opts) {
  fleet.validate();
  if (fleet.node_count() != net.node_count())
    throw DimensionMismatch("fleet node count must equal network node count");
  const VariableMap vm = VariableMap::build(fleet);
  const StagedProgram prog = build_fr_program(net, fleet, q_b_packed, q_p_packed, demand, vm);
  const ConvexSolution sol = solve(prog, opts);

  FrSolution out;
  out.y = sol.second[0];
  out.recourse = out.y - q_p_packed;
  split_line_duals(sol.duals[0], net.line_count(), 1.0, out.lambda, out.mu_lo, out.mu_hi);
  out.nodal = nodal_prices(out.lambda, out.mu_lo, out.mu_hi, net);
  out.cost = fleet.regulation_cost(vm.expand_regulation(out.y, net.node_count()));
  out.kkt = sol.kkt;
  out.warnings = sol.warnings;
  return out;
}

std::vector<FrSolution> solve_fr_batch(const Network& net, const GeneratorFleet& fleet,
                                       const Eigen::VectorXd& q_b_packed,
                                       const Eigen::VectorXd& q_p_packed,
                                       const std::vector<Eigen::VectorXd>& demands,
                                       const SolveOptions& opts) {
  const int n = static_cast<int>(demands.size());
  std::vector<std::optional<FrSolution>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](int i) {
    try {
      slots[i] = solve_fr(net, fleet, q_b_packed, q_p_packed, demands[i], opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (opts.parallel == Parallelism::OpenMp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) body(i);
#else
    for (int i = 0; i < n; ++i) body(i);
#endif
  } else {
    for (int i = 0; i < n; ++i) body(i);
  }
  for (int i = 0; i < n; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
  std::vector<FrSolution> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(std::move(*slots[i]));
  return out;
}

Eigen::VectorXd optimal_delta(const SystemSolution& sys, const ScenarioTree& tree) {
  if (sys.nodal.size() != tree.outcomes.size())
    throw DimensionMismatch("solution and tree outcome counts disagree");
  const int ridx = root_index(tree);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(sys.nodal[ridx].size());
  for (size_t s = 0; s < tree.outcomes.size(); ++s) delta += tree.outcomes[s].p * sys.nodal[s];
  delta -= static_cast<double>(tree.K) * sys.nodal[ridx];
  // Per-period average of the price differences; the probabilities carry one
  // unit of mass per period, so the raw sum is horizon-scaled.
  delta /= static_cast<double>(tree.K);
  return delta;
}

double expected_cost(const GeneratorFleet& fleet, const VariableMap& vm, const ScenarioTree& tree,
                     const Eigen::VectorXd& q_b_packed, const std::vector<Eigen::VectorXd>& ys) {
  if (ys.size() != tree.outcomes.size())
    throw DimensionMismatch("one regulation vector per outcome required");
  const int n_nodes = fleet.node_count();
  double total = static_cast<double>(tree.K) *
                 fleet.dispatch_cost(vm.expand_dispatch(q_b_packed, n_nodes));
  for (size_t s = 0; s < tree.outcomes.size(); ++s)
    total += tree.outcomes[s].p *
             fleet.regulation_cost(vm.expand_regulation(ys[s], n_nodes));
  return total;
}

DecompositionReport verify_decomposition(const Network& net, const GeneratorFleet& fleet,
                                         const ScenarioTree& tree, double tol,
                                         const SolveOptions& opts) {
  DecompositionReport rep;
  rep.tol = tol;
  const SystemSolution sys = solve_system(net, fleet, tree, opts);
  rep.delta = optimal_delta(sys, tree);
  const EdSolution ed = solve_ed(net, fleet, tree.outcomes[root_index(tree)].demand, tree.K,
                                 rep.delta, opts);
  rep.setpoint_deviation = std::max(rel_dev(ed.q_b, sys.q_b), rel_dev(ed.q_p, sys.q_p));

  std::vector<FrSolution> frs;
  for (size_t s = 0; s < tree.outcomes.size(); ++s) {
    frs.push_back(solve_fr(net, fleet, ed.q_b, ed.q_p, tree.outcomes[s].demand, opts));
    rep.recourse_deviation = std::max(rep.recourse_deviation, rel_dev(frs[s].y, sys.y[s]));
  }
  std::vector<Eigen::VectorXd> ys;
  for (const FrSolution& fr : frs) ys.push_back(fr.y);
  const double composed = expected_cost(fleet, sys.vm, tree, ed.q_b, ys);
  rep.objective_deviation =
      std::abs(composed - sys.expected_cost) / (1.0 + std::abs(sys.expected_cost));

  // Price identity at nodes where no generator bound interferes in any of the
  // re-solved problems.
  const VariableMap& vm = sys.vm;
  auto interior = [](double v, double lo, double hi) {
    const double m = 1e-6 * (1.0 + std::abs(hi - lo));
    return v > lo + m && v < hi - m;
  };
  for (int n = 0; n < net.node_count(); ++n) {
    int dj = -1, rj = -1;
    for (int j = 0; j < vm.n_dispatch(); ++j)
      if (vm.dispatch_nodes[j] == n) dj = j;
    for (int j = 0; j < vm.n_regulation(); ++j)
      if (vm.regulation_nodes[j] == n) rj = j;
    if (dj < 0 || rj < 0) continue;
    if (!interior(ed.q_b(dj), fleet.dispatch[n].lo, fleet.dispatch[n].hi)) continue;
    bool all_interior = true;
    for (const FrSolution& fr : frs)
      all_interior = all_interior && interior(fr.y(rj), fleet.regulation[n].lo, fleet.regulation[n].hi);
    if (!all_interior) continue;
    double expected_price = 0.0;
    for (size_t s = 0; s < tree.outcomes.size(); ++s)
      expected_price += tree.outcomes[s].p * frs[s].nodal(n);
    const double resid =
        std::abs(rep.delta(n) - (expected_price - ed.nodal(n)) / static_cast<double>(tree.K));
    rep.converse_residual = std::max(rep.converse_residual, resid);
    rep.interior_nodes.push_back(n);
  }
  rep.converse_vacuous = rep.interior_nodes.empty();
  rep.exact = rep.setpoint_deviation <= tol && rep.recourse_deviation <= tol &&
              rep.objective_deviation <= tol;
  return rep;
}

}  // namespace edfr
