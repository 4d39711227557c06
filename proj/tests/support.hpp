#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "edfr/decomposition.hpp"
#include "edfr/dfr.hpp"
#include "edfr/network.hpp"
#include "edfr/scenario.hpp"

namespace support {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
int uniform_int(Rng& rng, int lo, int hi);

// Connected random network: spanning tree plus a few extra lines, uniform
// susceptances, capacities as given (one value for all lines).
edfr::Network random_network(Rng& rng, int n_nodes, int extra_lines, double capacity);

struct InstanceSpec {
  int min_nodes = 2;
  int max_nodes = 5;
  int max_periods = 4;
  int max_samples = 3;
  int max_outcomes = 7;
  int max_reg_nodes = 0;      // 0 = no cap
  bool allow_congestion = true;
};

struct RandomInstance {
  edfr::Network net;
  edfr::GeneratorFleet fleet;
  edfr::ScenarioTree tree;
};

// Feasible-by-construction random instance: the generator keeps a witness
// schedule inside every box and line limit, so the joint problem is always
// solvable; capacities are tightened around the witness flows when
// congestion is allowed.
RandomInstance random_instance(Rng& rng, const InstanceSpec& spec = {});

// Derivative-free re-balance oracle: eliminates one regulation variable
// through the balance row, intersects the box and line limits into exact
// feasible intervals for the remaining coordinates, and zooms a grid over
// those intervals down to the given final step.  Requires 1..3 regulation
// variables.
struct GridResult {
  double objective = 0.0;
  Eigen::VectorXd y;
};
std::optional<GridResult> grid_search_fr(const edfr::Network& net,
                                         const edfr::GeneratorFleet& fleet,
                                         const edfr::VariableMap& vm, const Eigen::VectorXd& q_b,
                                         const Eigen::VectorXd& demand, double step);

// Three-bus regulation instance whose re-balance optimum rests on a binding
// line limit; setpoints sum to the demand.
edfr::DfrInstance dfr_three_bus();

// ---- reusable invariant suites ---------------------------------------------
// Each runs `cases` randomized checks and reports the worst residual seen.
struct SuiteResult {
  std::string name;
  int cases = 0;
  double worst = 0.0;
  bool pass = true;
  std::string detail;
};

SuiteResult suite_network_invariants(std::uint64_t seed, int cases);
SuiteResult suite_tree_invariants(std::uint64_t seed, int cases);
SuiteResult suite_qp_kkt(std::uint64_t seed, int cases);
SuiteResult suite_fr_fast(std::uint64_t seed, int cases);
SuiteResult suite_bid_identities(std::uint64_t seed, int cases);
SuiteResult suite_controller_bounds(std::uint64_t seed, int cases);
SuiteResult suite_io_roundtrip(std::uint64_t seed, int cases);

std::vector<SuiteResult> all_suites(std::uint64_t seed, int cases);

}  // namespace support
