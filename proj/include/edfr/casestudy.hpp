#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edfr/decomposition.hpp"
#include "edfr/network.hpp"
#include "edfr/scenario.hpp"

namespace edfr {

// 24-bus reliability test system loaded from csv files: nodes.csv
// (node,demand_mw), lines.csv (tail,head,reactance,capacity_mw) and
// generators.csv (node,group) with one row per unit.  Units are sliced out of
// their group's aggregate range in equal shares and re-aggregated per node and
// kind with a two-point fit of the marginal-cost range.
struct Rts24Case {
  Network net;
  GeneratorFleet fleet;
  Eigen::VectorXd base_demand;  // MW per node, ordered like net.node_ids()
};

Rts24Case load_rts24(const std::string& data_dir);

// Offset-estimation sweep: for each demand drift mu_d, build one scenario
// tree and the exact offset delta*; for each (mu_eps, sigma_eps) cell draw
// n_samples perturbed offsets delta* + eps, schedule against each and replay
// the schedule over the tree.
struct SweepConfig {
  std::uint64_t seed = 1;
  int n_samples = 50;
  int periods = 20;
  double period_duration_s = 15.0;
  double sigma_d = 0.001;                     // demand walk volatility per period
  std::vector<double> mu_d = {-0.0002, 0.0, 0.0002};
  std::vector<double> mu_eps = {-10.0, 0.0, 10.0};
  std::vector<double> sigma_eps = {0.0, 5.0, 10.0, 20.0, 40.0};

  void validate() const;
};

// Flat key = value config reader; unknown keys are an error.
SweepConfig sweep_config_from_toml(const std::string& path);

struct SweepSample {
  int sample = 0;
  bool feasible = true;             // all per-outcome re-balances solvable
  double matched_increase_pct = 0.0;   // realized cost on the sample's own path
  double expected_increase_pct = 0.0;  // expected cost over the whole tree
};

struct SweepCell {
  double mu_d = 0.0;
  double mu_eps = 0.0;
  double sigma_eps = 0.0;
  std::vector<SweepSample> samples;
  int n_infeasible = 0;
  double mean_matched_pct = 0.0;    // over feasible samples
  double mean_expected_pct = 0.0;
};

struct SweepResult {
  SweepConfig config;
  std::vector<Eigen::VectorXd> delta_star;   // per mu_d, nodal
  std::vector<double> delta_star_mean;       // per mu_d, nodal mean
  std::vector<double> reference_expected_cost;  // per mu_d, zero-error schedule
  std::vector<Eigen::MatrixXd> path_demand_totals;  // per mu_d: n_samples x periods
  std::vector<SweepCell> cells;              // mu_d-major, then mu_eps, then sigma_eps
};

SweepResult run_sweep(const Network& net, const GeneratorFleet& fleet, const Eigen::VectorXd& d1,
                      const SweepConfig& config, Parallelism par = Parallelism::Serial);

// sweep.csv (per sample), summary.csv (per cell), delta.csv (per drift) and
// one svg figure per drift value.  Deterministic byte for byte.
void write_sweep_report(const SweepResult& result, const std::string& out_dir);

// Closed-form re-balance: equal-marginal water-filling over the regulation
// fleet, accepted only when the resulting flows clear every line limit with
// margin, in which case it equals the full re-balance exactly.  Returns the
// packed regulation production, or nullopt when a limit interferes.
std::optional<Eigen::VectorXd> fr_fast(const Network& net, const GeneratorFleet& fleet,
                                       const VariableMap& vm, const Eigen::VectorXd& q_b_packed,
                                       const Eigen::VectorXd& demand);

// Root-to-leaf outcome index chains, one per leaf, ordered by leaf id.
std::vector<std::vector<int>> sample_paths(const ScenarioTree& tree);

}  // namespace edfr
