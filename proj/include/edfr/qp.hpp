#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "edfr/errors.hpp"
#include "edfr/network.hpp"

namespace edfr {

// Box-bounded variable block with separable quadratic cost
// sum_i (0.5 * quad_i x_i^2 + lin_i x_i).  Bounds may be +-inf.
struct VarBlock {
  Eigen::VectorXd quad, lin, lo, hi;

  Eigen::Index size() const { return quad.size(); }
  static VarBlock empty() { return {Eigen::VectorXd(0), Eigen::VectorXd(0), Eigen::VectorXd(0), Eigen::VectorXd(0)}; }
};

// One outcome: optional second-stage variables plus constraint rows
//   row_lo <= rows_first * z + rows_second * y_s <= row_hi,
// where a row with row_lo == row_hi is an equality.  The objective
// contribution of the block is weight * (second-stage cost); duals are
// reported already divided by weight so they match the per-outcome form.
struct OutcomeBlock {
  double weight = 1.0;
  VarBlock vars;                 // may be empty
  Eigen::MatrixXd rows_first;    // m x n0
  Eigen::MatrixXd rows_second;   // m x n_s
  Eigen::VectorXd row_lo, row_hi;

  Eigen::Index row_count() const { return row_lo.size(); }
};

// Two-stage convex QP: first-stage variables coupled into every outcome's
// rows, second-stage variables private to their outcome.  Single-stage
// problems use an empty first block and one outcome of weight 1.
struct StagedProgram {
  VarBlock first = VarBlock::empty();
  std::vector<OutcomeBlock> outcomes;
  double constant = 0.0;

  void validate() const;  // throws DimensionMismatch / InvalidParameters
};

struct OutcomeDuals {
  // Signed dual per row (equality rows: the balance-style multiplier;
  // inequality rows: mu_lo - mu_hi).  All divided by the outcome weight.
  Eigen::VectorXd rows;
  // Split row duals, indexed by full row number (zero on equality rows).
  Eigen::VectorXd mu_lo, mu_hi;
  // Bound duals of the second-stage variables, divided by the weight.
  Eigen::VectorXd nu_lo, nu_hi;
};

struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual_sign = 0.0;
  double complementarity = 0.0;
  double max_residual() const;
};

struct ConvexSolution {
  Eigen::VectorXd first;                     // z
  std::vector<Eigen::VectorXd> second;       // y_s per outcome
  Eigen::VectorXd xi_lo, xi_hi;              // first-stage bound duals (unscaled)
  std::vector<OutcomeDuals> duals;
  double objective = 0.0;
  KktReport kkt;
  int iterations = 0;
  bool polished = false;
  std::vector<std::string> warnings;
};

enum class Parallelism { Serial, OpenMp };

struct SolveOptions {
  double tol = 1e-9;            // relative KKT tolerance of the interior-point loop
  int max_iter = 100;
  double feas_tol = 1e-7;       // infeasibility declaration threshold
  int polish = -1;              // 1 on, 0 off, -1 auto (on for small problems)
  Parallelism parallel = Parallelism::Serial;
};

// Solves the program with a structure-exploiting primal-dual interior-point
// method (per-outcome block elimination + low-rank coupling correction),
// followed by an active-set polish on small problems.  Throws Infeasible when
// a phase-1 elastic program certifies constraint violation, MaxIterations
// when the iteration limit is hit while still far from optimality.
ConvexSolution solve(const StagedProgram& prog, const SolveOptions& opts = {});

// Independent KKT evaluation usable against any candidate solution; never
// reuses solver internals.
KktReport kkt_residual(const StagedProgram& prog, const ConvexSolution& sol);

// Minimum total constraint violation of an elastic relaxation (0 within
// tolerance iff the program is feasible).  outcome_hint receives the id
// (index) of the first outcome carrying violation, or -1.
double measure_infeasibility(const StagedProgram& prog, int* outcome_hint = nullptr);

// Objective value of a candidate point under the program's cost data.
double evaluate_objective(const StagedProgram& prog, const Eigen::VectorXd& first,
                          const std::vector<Eigen::VectorXd>& second);

// Locational marginal prices pi = lambda * 1 + H^T (mu_lo - mu_hi).
Eigen::VectorXd nodal_prices(double lambda, const Eigen::VectorXd& mu_lo,
                             const Eigen::VectorXd& mu_hi, const Network& net);

}  // namespace edfr
