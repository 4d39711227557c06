#include "edfr/dfr.hpp"

#include <algorithm>
#include <cmath>

namespace edfr {

namespace {

// Inverse of the (optionally barrier-augmented) regulation marginal on
// (lo, hi): solves marginal(y) = target with a bisection-safeguarded Newton.
double invert_marginal(const Generator& g, double barrier, double target) {
  const double lo = g.lo, hi = g.hi;
  if (hi - lo <= 1e-12 * (1.0 + std::abs(lo) + std::abs(hi))) return lo;
  if (barrier <= 0.0) return std::clamp(g.cost.inverse_marginal(target), lo, hi);

  const double span = hi - lo;
  double a = lo + 1e-12 * span, b = hi - 1e-12 * span;
  double y = 0.5 * (lo + hi);
  for (int it = 0; it < 80; ++it) {
    const double glo = y - lo, ghi = hi - y;
    const double f = g.cost.marginal(y) - barrier / glo + barrier / ghi - target;
    if (std::abs(f) <= 1e-13 * (1.0 + std::abs(target))) break;
    if (f > 0)
      b = y;
    else
      a = y;
    const double fp = g.cost.c + barrier / (glo * glo) + barrier / (ghi * ghi);
    double next = y - f / fp;
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (next == y) break;
    y = next;
  }
  return y;
}

struct Sim {
  const DfrInstance& inst;
  VariableMap vm;
  int N, L;
  Eigen::VectorXd base;  // dispatch injection minus demand, nodal
  Eigen::VectorXd caps;
  DfrGains gains;

  Sim(const DfrInstance& i, const DfrGains& g)
      : inst(i), vm(VariableMap::build(i.fleet)), N(i.net.node_count()),
        L(i.net.line_count()), caps(i.net.capacities()), gains(g) {
    base = vm.expand_dispatch(inst.q_b, N) - inst.demand;
  }

  // Production of each regulation generator given its local signals.
  Eigen::VectorXd production(const Eigen::VectorXd& omega, const Eigen::VectorXd& pi_p) const {
    Eigen::VectorXd y(vm.n_regulation());
    for (int j = 0; j < vm.n_regulation(); ++j) {
      const int n = vm.regulation_nodes[j];
      y(j) = invert_marginal(inst.fleet.regulation[n], inst.barrier, -omega(n) - pi_p(n));
    }
    return y;
  }

  Eigen::VectorXd injection(const Eigen::VectorXd& y) const {
    Eigen::VectorXd inj = base;
    for (int j = 0; j < vm.n_regulation(); ++j) inj(vm.regulation_nodes[j]) += y(j);
    return inj;
  }

  static double project(double x, double rate) { return (x <= 0.0 && rate < 0.0) ? 0.0 : rate; }

  DfrState field(const DfrState& s) const {
    const Eigen::VectorXd y = production(s.omega, s.pi_p);
    const Eigen::VectorXd inj = injection(y);
    const Eigen::MatrixXd& Lap = inst.net.laplacian();

    DfrState d;
    d.theta = s.omega;
    d.omega = (inj - inst.damping * s.omega - Lap * s.theta) / inst.inertia;
    d.pi_p = gains.zeta_pi * (inj - Lap * s.phi);
    const Eigen::VectorXd flows = inst.net.potential_flows(s.phi);
    d.mu_hi.resize(L);
    d.mu_lo.resize(L);
    for (int l = 0; l < L; ++l) {
      d.mu_hi(l) = gains.zeta_mu * project(s.mu_hi(l), flows(l) - caps(l));
      d.mu_lo(l) = gains.zeta_mu * project(s.mu_lo(l), -caps(l) - flows(l));
    }
    Eigen::VectorXd line_term = Eigen::VectorXd::Zero(N);
    if (L > 0) {
      Eigen::VectorXd bmu(L);
      for (int l = 0; l < L; ++l)
        bmu(l) = inst.net.lines()[l].susceptance * (s.mu_hi(l) - s.mu_lo(l));
      line_term = inst.net.incidence() * bmu;
    }
    d.phi = gains.chi_phi * (Lap * s.pi_p - line_term);
    return d;
  }
};

DfrState axpy(const DfrState& s, double h, const DfrState& d) {
  DfrState out;
  out.theta = s.theta + h * d.theta;
  out.omega = s.omega + h * d.omega;
  out.pi_p = s.pi_p + h * d.pi_p;
  out.phi = s.phi + h * d.phi;
  out.mu_hi = (s.mu_hi + h * d.mu_hi).cwiseMax(0.0);
  out.mu_lo = (s.mu_lo + h * d.mu_lo).cwiseMax(0.0);
  return out;
}

double state_norm(const DfrState& s) {
  double m = 0.0;
  for (const Eigen::VectorXd* v : {&s.theta, &s.omega, &s.pi_p, &s.phi, &s.mu_hi, &s.mu_lo})
    if (v->size() > 0) m = std::max(m, v->cwiseAbs().maxCoeff());
  return m;
}

void check_state_dims(const DfrInstance& inst, const DfrState& s) {
  const int N = inst.net.node_count(), L = inst.net.line_count();
  if (s.theta.size() != N || s.omega.size() != N || s.pi_p.size() != N || s.phi.size() != N ||
      s.mu_hi.size() != L || s.mu_lo.size() != L)
    throw DimensionMismatch("state vector lengths do not match the network");
}

}  // namespace

void DfrInstance::validate() const {
  fleet.validate();
  if (fleet.node_count() != net.node_count())
    throw DimensionMismatch("fleet node count must equal network node count");
  if (demand.size() != net.node_count())
    throw DimensionMismatch("demand must have one entry per node");
  const VariableMap vm = VariableMap::build(fleet);
  if (q_b.size() != vm.n_dispatch() || q_p.size() != vm.n_regulation())
    throw DimensionMismatch("setpoint lengths must match the generator map");
  if (!(inertia > 0) || !(damping > 0)) throw InvalidParameters("inertia and damping must be > 0");
  if (barrier < 0) throw InvalidParameters("barrier must be >= 0");
}

Eigen::VectorXd controller_response(const DfrInstance& inst, const Eigen::VectorXd& omega,
                                    const Eigen::VectorXd& pi_p) {
  inst.validate();
  if (omega.size() != inst.net.node_count() || pi_p.size() != inst.net.node_count())
    throw DimensionMismatch("signal lengths must equal node count");
  Sim sim(inst, {});
  const Eigen::VectorXd y = sim.production(omega, pi_p);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(inst.net.node_count());
  for (int j = 0; j < sim.vm.n_regulation(); ++j)
    r(sim.vm.regulation_nodes[j]) = y(j) - inst.q_p(j);
  return r;
}

DfrState initial_state(const DfrInstance& inst) {
  inst.validate();
  const int N = inst.net.node_count(), L = inst.net.line_count();
  const VariableMap vm = VariableMap::build(inst.fleet);
  DfrState s;
  s.theta = Eigen::VectorXd::Zero(N);
  s.omega = Eigen::VectorXd::Zero(N);
  s.pi_p = Eigen::VectorXd::Zero(N);
  s.phi = Eigen::VectorXd::Zero(N);
  s.mu_hi = Eigen::VectorXd::Zero(L);
  s.mu_lo = Eigen::VectorXd::Zero(L);
  for (int j = 0; j < vm.n_regulation(); ++j) {
    const int n = vm.regulation_nodes[j];
    const Generator& g = inst.fleet.regulation[n];
    double m = g.cost.marginal(inst.q_p(j));
    if (inst.barrier > 0) {
      const double glo = std::max(inst.q_p(j) - g.lo, 1e-12);
      const double ghi = std::max(g.hi - inst.q_p(j), 1e-12);
      m += -inst.barrier / glo + inst.barrier / ghi;
    }
    s.pi_p(n) = -m;
  }
  return s;
}

DfrState equilibrium_from_fr(const DfrInstance& inst, const FrSolution& fr) {
  inst.validate();
  const int N = inst.net.node_count();
  const VariableMap vm = VariableMap::build(inst.fleet);
  if (fr.y.size() != vm.n_regulation())
    throw DimensionMismatch("regulation solution length must match the generator map");
  DfrState s;
  Eigen::VectorXd inj = vm.expand_dispatch(inst.q_b, N) - inst.demand;
  for (int j = 0; j < vm.n_regulation(); ++j) inj(vm.regulation_nodes[j]) += fr.y(j);
  s.theta = inst.net.laplacian_pinv() * inj;
  s.phi = s.theta;
  s.omega = Eigen::VectorXd::Zero(N);
  s.pi_p = -fr.nodal;
  s.mu_hi = fr.mu_hi;
  s.mu_lo = fr.mu_lo;
  // Inactive-line duals come back from the optimizer as tiny positives; the
  // stationary point needs them exactly zero or the projection keeps their
  // full negative drift.
  double mu_scale = 0.0;
  if (s.mu_hi.size() > 0)
    mu_scale = std::max(s.mu_hi.maxCoeff(), s.mu_lo.maxCoeff());
  const double snap = 1e-7 * (1.0 + mu_scale);
  for (Eigen::Index l = 0; l < s.mu_hi.size(); ++l) {
    if (s.mu_hi(l) < snap) s.mu_hi(l) = 0.0;
    if (s.mu_lo(l) < snap) s.mu_lo(l) = 0.0;
  }
  return s;
}

Trajectory simulate(const DfrInstance& inst, const DfrState& init, const DfrOptions& opts) {
  inst.validate();
  check_state_dims(inst, init);
  if (!(opts.dt > 0) || !(opts.t_end >= 0)) throw InvalidParameters("dt > 0 and t_end >= 0 required");
  Sim sim(inst, opts.gains);
  const int steps = static_cast<int>(std::llround(opts.t_end / opts.dt));

  Trajectory traj;
  traj.steps = steps;
  DfrState s = init;
  s.mu_hi = s.mu_hi.cwiseMax(0.0);
  s.mu_lo = s.mu_lo.cwiseMax(0.0);

  auto record = [&](double t, const DfrState& st) {
    TrajectoryPoint pt;
    pt.t = t;
    pt.state = st;
    const Eigen::VectorXd y = sim.production(st.omega, st.pi_p);
    pt.r = Eigen::VectorXd::Zero(sim.N);
    double cost = 0.0;
    for (int j = 0; j < sim.vm.n_regulation(); ++j) {
      const int n = sim.vm.regulation_nodes[j];
      pt.r(n) = y(j) - inst.q_p(j);
      cost += inst.fleet.regulation[n].cost.value(y(j));
    }
    pt.objective = cost + 0.5 * inst.damping * st.omega.squaredNorm();
    traj.points.push_back(std::move(pt));
  };

  record(0.0, s);
  for (int k = 0; k < steps; ++k) {
    const double h = opts.dt;
    const DfrState k1 = sim.field(s);
    const DfrState k2 = sim.field(axpy(s, 0.5 * h, k1));
    const DfrState k3 = sim.field(axpy(s, 0.5 * h, k2));
    const DfrState k4 = sim.field(axpy(s, h, k3));
    DfrState next;
    next.theta = s.theta + (h / 6.0) * (k1.theta + 2 * k2.theta + 2 * k3.theta + k4.theta);
    next.omega = s.omega + (h / 6.0) * (k1.omega + 2 * k2.omega + 2 * k3.omega + k4.omega);
    next.pi_p = s.pi_p + (h / 6.0) * (k1.pi_p + 2 * k2.pi_p + 2 * k3.pi_p + k4.pi_p);
    next.phi = s.phi + (h / 6.0) * (k1.phi + 2 * k2.phi + 2 * k3.phi + k4.phi);
    next.mu_hi = (s.mu_hi + (h / 6.0) * (k1.mu_hi + 2 * k2.mu_hi + 2 * k3.mu_hi + k4.mu_hi))
                     .cwiseMax(0.0);
    next.mu_lo = (s.mu_lo + (h / 6.0) * (k1.mu_lo + 2 * k2.mu_lo + 2 * k3.mu_lo + k4.mu_lo))
                     .cwiseMax(0.0);
    s = std::move(next);
    if (state_norm(s) > 1e9)
      throw NumericalBlowup("state norm passed 1e9 at t=" + std::to_string((k + 1) * h));
    if (opts.record_every > 0 && (k + 1) % opts.record_every == 0 && k + 1 < steps)
      record((k + 1) * h, s);
  }
  if (steps > 0) record(steps * opts.dt, s);
  traj.final_state = s;
  traj.t_end = steps * opts.dt;
  return traj;
}

double EquilibriumReport::max_residual() const {
  return std::max({field_residual, frequency, balance_residual, price_residual, flow_violation,
                   complementarity});
}

EquilibriumReport check_equilibrium(const DfrInstance& inst, const DfrState& state,
                                    const DfrGains& gains) {
  inst.validate();
  check_state_dims(inst, state);
  Sim sim(inst, gains);
  const DfrState d = sim.field(state);

  EquilibriumReport rep;
  rep.field_residual = state_norm(d);
  rep.frequency = state.omega.size() ? state.omega.cwiseAbs().maxCoeff() : 0.0;

  const Eigen::VectorXd y = sim.production(state.omega, state.pi_p);
  const Eigen::VectorXd inj = sim.injection(y);
  rep.balance_residual =
      (inj - inst.damping * state.omega - inst.net.laplacian() * state.theta)
          .cwiseAbs()
          .maxCoeff();

  Eigen::VectorXd line_term = Eigen::VectorXd::Zero(sim.N);
  if (sim.L > 0) {
    Eigen::VectorXd bmu(sim.L);
    for (int l = 0; l < sim.L; ++l)
      bmu(l) = inst.net.lines()[l].susceptance * (state.mu_hi(l) - state.mu_lo(l));
    line_term = inst.net.incidence() * bmu;
  }
  rep.price_residual =
      (inst.net.laplacian() * state.pi_p - line_term).cwiseAbs().maxCoeff();

  if (sim.L > 0) {
    const Eigen::VectorXd phys = inst.net.potential_flows(state.theta);
    const Eigen::VectorXd virt = inst.net.potential_flows(state.phi);
    for (int l = 0; l < sim.L; ++l) {
      rep.flow_violation = std::max(rep.flow_violation, std::abs(phys(l)) - sim.caps(l));
      rep.complementarity =
          std::max({rep.complementarity, std::abs(state.mu_hi(l) * (virt(l) - sim.caps(l))),
                    std::abs(state.mu_lo(l) * (-sim.caps(l) - virt(l)))});
    }
    rep.flow_violation = std::max(rep.flow_violation, 0.0);
  }
  return rep;
}

}  // namespace edfr
