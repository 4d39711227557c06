#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "edfr/network.hpp"
#include "edfr/qp.hpp"
#include "edfr/scenario.hpp"

namespace edfr {

// Maps between nodal vectors and the packed generator variables actually
// optimized over.  Packed order is ascending node index.
struct VariableMap {
  std::vector<int> dispatch_nodes;
  std::vector<int> regulation_nodes;

  int n_dispatch() const { return static_cast<int>(dispatch_nodes.size()); }
  int n_regulation() const { return static_cast<int>(regulation_nodes.size()); }

  static VariableMap build(const GeneratorFleet& fleet);

  Eigen::VectorXd expand_dispatch(const Eigen::VectorXd& packed, int n_nodes) const;
  Eigen::VectorXd expand_regulation(const Eigen::VectorXd& packed, int n_nodes) const;
};

// Joint scheduling problem over the whole scenario tree: one dispatch
// setpoint, one regulation trajectory per outcome (setpoint plus recourse in
// a single variable).  Rows per outcome: 0 = power balance, 1..L = line
// limits.
StagedProgram build_system_program(const Network& net, const GeneratorFleet& fleet,
                                   const ScenarioTree& tree, const VariableMap& vm);

// Single-period scheduling with the per-period nodal price offset delta
// (price units) credited to the dispatch variables in every period; recourse
// pinned to zero.
StagedProgram build_ed_program(const Network& net, const GeneratorFleet& fleet,
                               const Eigen::VectorXd& demand, int horizon,
                               const Eigen::VectorXd& delta, const VariableMap& vm);

// Like build_ed_program but with explicit zero-cost recourse blocks enforcing
// that every non-root outcome of the tree stays servable.
StagedProgram build_robust_ed_program(const Network& net, const GeneratorFleet& fleet,
                                      const ScenarioTree& tree, const Eigen::VectorXd& delta,
                                      const VariableMap& vm);

// Minimum-cost regulation re-balance around fixed setpoints for one realized
// demand.  The dispatch injection is folded into an effective demand.
StagedProgram build_fr_program(const Network& net, const GeneratorFleet& fleet,
                               const Eigen::VectorXd& q_b_packed,
                               const Eigen::VectorXd& q_p_packed, const Eigen::VectorXd& demand,
                               const VariableMap& vm);

struct SystemSolution {
  VariableMap vm;
  Eigen::VectorXd q_b;                    // packed dispatch setpoint
  Eigen::VectorXd q_p;                    // packed regulation setpoint (root outcome)
  std::vector<Eigen::VectorXd> y;         // per outcome, packed q_p + recourse
  std::vector<double> lambda;             // per outcome balance dual
  std::vector<Eigen::VectorXd> mu_lo;     // per outcome line duals, lower side
  std::vector<Eigen::VectorXd> mu_hi;
  std::vector<Eigen::VectorXd> nodal;     // per outcome nodal prices
  double expected_cost = 0.0;
  KktReport kkt;
  int iterations = 0;
  std::vector<std::string> warnings;
};

struct EdSolution {
  VariableMap vm;
  Eigen::VectorXd q_b, q_p;               // packed setpoints
  double lambda = 0.0;                     // horizon-scaled balance dual
  Eigen::VectorXd mu_lo, mu_hi;            // horizon-scaled line duals
  Eigen::VectorXd nodal;                   // horizon-scaled nodal prices
  Eigen::VectorXd delta;                   // per-period offset the problem was built with
  double cost = 0.0;                       // physical production cost over the horizon
  double objective = 0.0;                  // cost minus the offset revenue term
  std::vector<Eigen::VectorXd> recourse_witness;  // robust variant only
  KktReport kkt;
  std::vector<std::string> warnings;
};

struct FrSolution {
  Eigen::VectorXd y;             // packed regulation production
  Eigen::VectorXd recourse;      // y minus the setpoint
  double lambda = 0.0;
  Eigen::VectorXd mu_lo, mu_hi;
  Eigen::VectorXd nodal;
  double cost = 0.0;             // regulation production cost at y
  KktReport kkt;
  std::vector<std::string> warnings;
};

SystemSolution solve_system(const Network& net, const GeneratorFleet& fleet,
                            const ScenarioTree& tree, const SolveOptions& opts = {});

EdSolution solve_ed(const Network& net, const GeneratorFleet& fleet, const Eigen::VectorXd& demand,
                    int horizon, const Eigen::VectorXd& delta, const SolveOptions& opts = {});

EdSolution solve_ed_robust(const Network& net, const GeneratorFleet& fleet,
                           const ScenarioTree& tree, const Eigen::VectorXd& delta,
                           const SolveOptions& opts = {});

FrSolution solve_fr(const Network& net, const GeneratorFleet& fleet,
                    const Eigen::VectorXd& q_b_packed, const Eigen::VectorXd& q_p_packed,
                    const Eigen::VectorXd& demand, const SolveOptions& opts = {});

// One re-balance per demand; with OpenMP the solves run concurrently and the
// results are identical to the serial order.
std::vector<FrSolution> solve_fr_batch(const Network& net, const GeneratorFleet& fleet,
                                       const Eigen::VectorXd& q_b_packed,
                                       const Eigen::VectorXd& q_p_packed,
                                       const std::vector<Eigen::VectorXd>& demands,
                                       const SolveOptions& opts = {});

// Nodal price offset that makes the single-period problem reproduce the joint
// schedule: per-period average of the expected nodal price differences from
// the root, in price units.
Eigen::VectorXd optimal_delta(const SystemSolution& sys, const ScenarioTree& tree);

// Expected production cost of composed setpoints + per-outcome regulation.
double expected_cost(const GeneratorFleet& fleet, const VariableMap& vm, const ScenarioTree& tree,
                     const Eigen::VectorXd& q_b_packed, const std::vector<Eigen::VectorXd>& ys);

struct DecompositionReport {
  Eigen::VectorXd delta;
  double setpoint_deviation = 0.0;       // relative, joint vs single-period schedule
  double recourse_deviation = 0.0;       // relative, worst outcome
  double objective_deviation = 0.0;      // relative expected-cost gap
  double converse_residual = 0.0;        // price-route mismatch at interior nodes
  std::vector<int> interior_nodes;       // nodes the converse check covered
  bool converse_vacuous = false;         // no node qualified
  bool exact = false;                    // primal deviations within tol
  double tol = 0.0;
};

// Solves the joint problem, re-solves the decomposed pair at the induced
// offset, and measures both primal agreement and the price identity.
DecompositionReport verify_decomposition(const Network& net, const GeneratorFleet& fleet,
                                         const ScenarioTree& tree, double tol = 1e-5,
                                         const SolveOptions& opts = {});

}  // namespace edfr
