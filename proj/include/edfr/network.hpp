#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "edfr/errors.hpp"

namespace edfr {

// Transmission line between two nodes of the DC power-flow model.
// Flow is counted positive from tail to head.
struct Line {
  int tail = 0;
  int head = 0;
  double susceptance = 0.0;   // 1/reactance, must be > 0
  double capacity_mw = 0.0;   // symmetric thermal limit, must be > 0
};

// Connected DC network with the derived flow operators cached:
//   incidence C (N x L), Laplacian Lap = C * diag(B) * C^T,
//   Laplacian pseudo-inverse, and shift factors H = diag(B) * C^T * Lap^+
// mapping nodal injections to line flows.
class Network {
 public:
  static Network build(std::vector<std::string> node_ids, std::vector<Line> lines);

  int node_count() const { return static_cast<int>(node_ids_.size()); }
  int line_count() const { return static_cast<int>(lines_.size()); }
  const std::vector<std::string>& node_ids() const { return node_ids_; }
  const std::vector<Line>& lines() const { return lines_; }

  const Eigen::MatrixXd& incidence() const { return incidence_; }
  const Eigen::MatrixXd& laplacian() const { return laplacian_; }
  const Eigen::MatrixXd& laplacian_pinv() const { return lap_pinv_; }
  const Eigen::MatrixXd& shift_factors() const { return shift_; }
  Eigen::VectorXd capacities() const;
  // Eigenvalues of the Laplacian in increasing order (diagnostic).
  const Eigen::VectorXd& laplacian_eigenvalues() const { return eigenvalues_; }

  int node_index(const std::string& id) const;

  // Line flows for a balanced injection vector (MW per node).  The injection
  // must sum to zero within |1^T p| <= 1e-6 * ||p||_inf + 1e-9.
  Eigen::VectorXd line_flows(const Eigen::VectorXd& injection) const;

  // Flow through each line given nodal potentials: B_l * (phi_tail - phi_head).
  Eigen::VectorXd potential_flows(const Eigen::VectorXd& phi) const;

 private:
  std::vector<std::string> node_ids_;
  std::vector<Line> lines_;
  Eigen::MatrixXd incidence_;   // N x L
  Eigen::MatrixXd laplacian_;   // N x N
  Eigen::MatrixXd lap_pinv_;    // N x N
  Eigen::MatrixXd shift_;       // L x N
  Eigen::VectorXd eigenvalues_;
};

// Quadratic production cost a + b*q + (c/2)*q^2 with strictly positive c.
struct QuadCost {
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;

  double value(double q) const { return a + b * q + 0.5 * c * q * q; }
  double marginal(double q) const { return b + c * q; }
  double inverse_marginal(double y) const { return (y - b) / c; }
};

// One generator: production bounds plus quadratic cost.  Nodes without a
// generator of a given kind carry present = false and a [0, 0] range.
struct Generator {
  bool present = false;
  double lo = 0.0;
  double hi = 0.0;
  QuadCost cost;
};

// Per-node dispatch (slow, setpoint-only) and regulation (fast, recourse
// capable) generators.  Vectors are indexed by node.
struct GeneratorFleet {
  std::vector<Generator> dispatch;
  std::vector<Generator> regulation;

  int node_count() const { return static_cast<int>(dispatch.size()); }
  // Throws InvalidParameters unless all present generators have lo <= hi and
  // quadratic coefficient >= min_quad (strict convexity).
  void validate(double min_quad = 1e-6) const;

  double dispatch_cost(const Eigen::VectorXd& q_b) const;
  double regulation_cost(const Eigen::VectorXd& production) const;
};

struct Violation {
  std::string kind;   // "dispatch-bound", "regulation-bound", "balance", "line-limit"
  int index = 0;      // node or line index
  double magnitude = 0.0;
};

struct FeasibilityReport {
  bool feasible = true;
  std::vector<Violation> violations;
};

// Checks one outcome's operating constraints: dispatch bounds, regulation
// bounds on setpoint+recourse, nodal balance and line limits.
FeasibilityReport check_feasible(const Network& net, const GeneratorFleet& fleet,
                                 const Eigen::VectorXd& q_b, const Eigen::VectorXd& q_p,
                                 const Eigen::VectorXd& recourse, const Eigen::VectorXd& demand,
                                 double tol = 1e-6);

}  // namespace edfr
