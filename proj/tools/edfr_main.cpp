// Command-line front end: scheduling decomposition, real-time regulation
// simulation, market equilibrium verification, and the 24-bus sweep.
#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "edfr/casestudy.hpp"
#include "edfr/decomposition.hpp"
#include "edfr/dfr.hpp"
#include "edfr/io.hpp"
#include "edfr/market.hpp"

namespace {

using edfr::json;

json vec_json(const Eigen::VectorXd& v) { return edfr::vector_to_json(v); }

Eigen::VectorXd resolve_delta(const std::string& spec, const edfr::ProblemInstance& inst,
                              const edfr::SolveOptions& opts) {
  const int n = inst.net.node_count();
  if (spec == "zero") return Eigen::VectorXd::Zero(n);
  if (spec == "auto") {
    const auto sys = edfr::solve_system(inst.net, inst.fleet, inst.tree, opts);
    return edfr::optimal_delta(sys, inst.tree);
  }
  return edfr::vector_from_json(edfr::read_json_file(spec));
}

int run_decompose(const std::string& instance_path, const std::string& delta_spec, bool robust,
                  bool verify, double tol, const std::string& out_path) {
  const auto inst = edfr::instance_from_json(edfr::read_json_file(instance_path));
  if (!inst.has_tree) throw edfr::InvalidParameters("decompose: instance has no scenario tree");
  edfr::SolveOptions opts;
  opts.tol = tol;

  const Eigen::VectorXd delta = resolve_delta(delta_spec, inst, opts);
  const auto vm = edfr::VariableMap::build(inst.fleet);
  const int n = inst.net.node_count();

  edfr::EdSolution ed =
      robust ? edfr::solve_ed_robust(inst.net, inst.fleet, inst.tree, delta, opts)
             : edfr::solve_ed(inst.net, inst.fleet, inst.tree.root().demand, inst.tree.K, delta,
                              opts);

  json out;
  out["delta"] = vec_json(delta);
  out["delta_source"] = delta_spec == "auto" || delta_spec == "zero" ? delta_spec : "file";
  out["robust"] = robust;
  out["nodes"] = inst.net.node_ids();
  out["dispatch_setpoint"] = vec_json(vm.expand_dispatch(ed.q_b, n));
  out["regulation_setpoint"] = vec_json(vm.expand_regulation(ed.q_p, n));
  out["nodal_price"] = vec_json(ed.nodal);
  out["balance_price"] = ed.lambda;
  out["cost"] = ed.cost;
  out["objective"] = ed.objective;
  out["kkt_max_residual"] = ed.kkt.max_residual();
  out["warnings"] = ed.warnings;

  if (verify) {
    const auto rep = edfr::verify_decomposition(inst.net, inst.fleet, inst.tree, 1e-5, opts);
    json v;
    v["delta"] = vec_json(rep.delta);
    v["setpoint_deviation"] = rep.setpoint_deviation;
    v["recourse_deviation"] = rep.recourse_deviation;
    v["objective_deviation"] = rep.objective_deviation;
    v["converse_residual"] = rep.converse_residual;
    v["converse_vacuous"] = rep.converse_vacuous;
    v["exact"] = rep.exact;
    out["verification"] = v;
    std::printf("decomposition %s: setpoint dev %.3e, recourse dev %.3e, converse residual %.3e\n",
                rep.exact ? "exact" : "NOT exact", rep.setpoint_deviation, rep.recourse_deviation,
                rep.converse_residual);
  }

  if (!out_path.empty()) edfr::write_json_file(out_path, out);
  std::printf("schedule cost %.6f, kkt residual %.3e%s\n", ed.cost, ed.kkt.max_residual(),
              out_path.empty() ? "" : (", written to " + out_path).c_str());
  return verify ? 0 : 0;
}

int run_dfr_sim(const std::string& instance_path, double dt, double t_end, int record,
                const edfr::DfrGains& gains, const std::string& out_path) {
  auto inst = edfr::dfr_instance_from_json(edfr::read_json_file(instance_path));
  inst.validate();

  edfr::DfrOptions opts;
  opts.dt = dt;
  opts.t_end = t_end;
  opts.gains = gains;
  const int steps = static_cast<int>(t_end / dt);
  opts.record_every = record > 0 ? record : std::max(1, steps / 1000);

  const auto traj = edfr::simulate(inst, edfr::initial_state(inst), opts);

  if (!out_path.empty()) {
    const int n = inst.net.node_count();
    const int l = inst.net.line_count();
    std::string csv = "t";
    for (int i = 0; i < n; ++i) csv += ",omega_" + inst.net.node_ids()[i];
    for (int i = 0; i < n; ++i) csv += ",r_" + inst.net.node_ids()[i];
    for (int i = 0; i < n; ++i) csv += ",pi_" + inst.net.node_ids()[i];
    for (int i = 0; i < l; ++i) csv += ",mu_hi_" + std::to_string(i);
    for (int i = 0; i < l; ++i) csv += ",mu_lo_" + std::to_string(i);
    csv += ",objective\n";
    char buf[64];
    for (const auto& pt : traj.points) {
      std::snprintf(buf, sizeof buf, "%.6f", pt.t);
      csv += buf;
      auto append = [&](const Eigen::VectorXd& v) {
        for (int i = 0; i < v.size(); ++i) {
          std::snprintf(buf, sizeof buf, ",%.10g", v(i));
          csv += buf;
        }
      };
      append(pt.state.omega);
      append(pt.r);
      append(pt.state.pi_p);
      append(pt.state.mu_hi);
      append(pt.state.mu_lo);
      std::snprintf(buf, sizeof buf, ",%.10g\n", pt.objective);
      csv += buf;
    }
    edfr::write_text_file(out_path, csv);
  }

  const auto rep = edfr::check_equilibrium(inst, traj.final_state, gains);
  std::printf("t = %.3f s (%d steps): |omega| %.3e, field residual %.3e, flow violation %.3e, "
              "complementarity %.3e\n",
              traj.t_end, traj.steps, rep.frequency, rep.field_residual, rep.flow_violation,
              rep.complementarity);
  return 0;
}

int run_market_verify(const std::string& instance_path, const std::string& bids_path,
                      const std::string& delta_spec, double tol, const std::string& out_path) {
  const auto inst = edfr::instance_from_json(edfr::read_json_file(instance_path));
  if (!inst.has_tree) throw edfr::InvalidParameters("market-verify: instance has no scenario tree");
  edfr::SolveOptions opts;

  edfr::BidSet bids;
  Eigen::VectorXd delta;
  std::string bid_source;
  if (bids_path.empty()) {
    const auto eq = edfr::construct_equilibrium(inst.net, inst.fleet, inst.tree, opts);
    bids = eq.bids;
    delta = delta_spec == "auto" ? eq.delta : resolve_delta(delta_spec, inst, opts);
    bid_source = "constructed";
  } else {
    bids = edfr::bids_from_json(edfr::read_json_file(bids_path));
    delta = resolve_delta(delta_spec, inst, opts);
    bid_source = bids_path;
  }

  const auto mkt = edfr::clear_market(inst.net, inst.fleet, inst.tree, bids, delta, tol, opts);

  json cert;
  cert["bid_source"] = bid_source;
  cert["equilibrium"] = mkt.equilibrium;
  cert["max_gap"] = mkt.max_gap;
  cert["tol"] = mkt.tol;
  cert["delta"] = vec_json(mkt.delta);
  cert["dispatch_price"] = vec_json(mkt.prices.pi_b);
  json pi_p = json::array();
  for (const auto& v : mkt.prices.pi_p) pi_p.push_back(vec_json(v));
  cert["regulation_price"] = pi_p;
  cert["dispatch_profit"] = mkt.dispatch_profit;
  cert["regulation_profit"] = mkt.regulation_profit;
  json checks = json::array();
  for (const auto& c : mkt.checks) {
    json jc;
    jc["kind"] = c.kind;
    jc["node"] = c.node;
    jc["outcome"] = c.outcome;
    jc["band"] = c.band;
    jc["assigned"] = c.assigned;
    jc["optimal"] = c.optimal;
    jc["gap"] = c.gap;
    checks.push_back(jc);
  }
  cert["checks"] = checks;
  if (!out_path.empty()) edfr::write_json_file(out_path, cert);

  std::printf("market %s an equilibrium: max best-response gap %.3e (tol %.1e)\n",
              mkt.equilibrium ? "IS" : "is NOT", mkt.max_gap, mkt.tol);
  return mkt.equilibrium ? 0 : 2;
}

int run_casestudy(const std::string& config_path, const std::string& data_dir,
                  const std::string& out_dir, bool parallel) {
  const auto cs = edfr::load_rts24(data_dir);
  const auto cfg = edfr::sweep_config_from_toml(config_path);
  const auto par = parallel ? edfr::Parallelism::OpenMp : edfr::Parallelism::Serial;

  const auto res = edfr::run_sweep(cs.net, cs.fleet, cs.base_demand, cfg, par);
  edfr::write_sweep_report(res, out_dir);

  for (std::size_t a = 0; a < res.delta_star.size(); ++a)
    std::printf("mu_d %+.6f: offset mean %+.4f [%+.4f, %+.4f], reference expected cost %.2f\n",
                cfg.mu_d[a], res.delta_star_mean[a], res.delta_star[a].minCoeff(),
                res.delta_star[a].maxCoeff(), res.reference_expected_cost[a]);
  std::printf("%-10s %-10s %-10s %12s %12s %6s\n", "mu_d", "mu_eps", "sigma_eps", "matched[%]",
              "expected[%]", "infeas");
  for (const auto& cell : res.cells)
    std::printf("%-10.6f %-10.4f %-10.4f %12.6f %12.6f %6d\n", cell.mu_d, cell.mu_eps,
                cell.sigma_eps, cell.mean_matched_pct, cell.mean_expected_pct, cell.n_infeasible);

  // the exact offset must reproduce the joint schedule: zero-noise cells sit at 0
  bool ok = true;
  for (const auto& cell : res.cells) {
    if (cell.mu_eps == 0.0 && cell.sigma_eps == 0.0 &&
        (std::abs(cell.mean_matched_pct) > 1e-4 || std::abs(cell.mean_expected_pct) > 1e-4)) {
      std::printf("zero-noise cell off zero: mu_d %.6f matched %.3e expected %.3e\n", cell.mu_d,
                  cell.mean_matched_pct, cell.mean_expected_pct);
      ok = false;
    }
  }
  std::printf("report written to %s: %s\n", out_dir.c_str(), ok ? "OK" : "FAILED");
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"economic dispatch / frequency regulation co-optimization"};
  app.require_subcommand(1);

  std::string instance, out, delta_spec = "auto", bids_path, config_path, data_dir = "data/rts24";
  double tol = 1e-9, dt = 1e-3, t_end = 10.0, mtol = 1e-5;
  int record = 0;
  bool robust = false, verify = false, parallel = false;
  edfr::DfrGains gains;

  auto* dec = app.add_subcommand("decompose", "split the joint schedule at the exact price offset");
  dec->add_option("--instance", instance, "instance json (network, generators, tree)")->required();
  dec->add_option("--delta", delta_spec, "auto | zero | path to a json vector");
  dec->add_flag("--robust", robust, "enforce recourse room for every tree outcome");
  dec->add_flag("--verify", verify, "re-solve the joint problem and report deviations");
  dec->add_option("--tol", tol, "solver tolerance");
  dec->add_option("--out", out, "report json path");

  auto* sim = app.add_subcommand("dfr-sim", "integrate the distributed regulation dynamics");
  sim->add_option("--instance", instance, "regulation instance json")->required();
  sim->add_option("--dt", dt, "step size [s]");
  sim->add_option("--T", t_end, "horizon [s]");
  sim->add_option("--record", record, "steps between trajectory records");
  sim->add_option("--zeta-pi", gains.zeta_pi, "price integrator gain");
  sim->add_option("--zeta-mu", gains.zeta_mu, "line-dual integrator gain");
  sim->add_option("--chi-phi", gains.chi_phi, "virtual-angle integrator gain");
  sim->add_option("--out", out, "trajectory csv path");

  auto* mkt = app.add_subcommand("market-verify", "check cleared quantities against best responses");
  mkt->add_option("--instance", instance, "instance json (network, generators, tree)")->required();
  mkt->add_option("--bids", bids_path, "bid set json; omitted = construct the truthful profile");
  mkt->add_option("--delta", delta_spec, "auto | zero | path to a json vector");
  mkt->add_option("--tol", mtol, "best-response gap tolerance");
  mkt->add_option("--out", out, "certificate json path");

  auto* cs = app.add_subcommand("casestudy", "offset-estimation sweep on the 24-bus system");
  cs->add_option("--config", config_path, "sweep toml")->required();
  cs->add_option("--data", data_dir, "case data directory");
  cs->add_option("--out", out, "report output directory")->required();
  cs->add_flag("--parallel", parallel, "run sweep samples concurrently");

  CLI11_PARSE(app, argc, argv);

  try {
    if (dec->parsed()) return run_decompose(instance, delta_spec, robust, verify, tol, out);
    if (sim->parsed()) return run_dfr_sim(instance, dt, t_end, record, gains, out);
    if (mkt->parsed()) return run_market_verify(instance, bids_path, delta_spec, mtol, out);
    if (cs->parsed()) return run_casestudy(config_path, data_dir, out, parallel);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
