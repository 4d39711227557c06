#include "edfr/network.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <unordered_map>

namespace edfr {

namespace {
constexpr double kZeroEigenRel = 1e-9;  // deflation threshold relative to largest eigenvalue
}

Network Network::build(std::vector<std::string> node_ids, std::vector<Line> lines) {
  if (node_ids.empty()) throw InvalidParameters("network needs at least one node");
  std::unordered_map<std::string, int> seen;
  for (int i = 0; i < static_cast<int>(node_ids.size()); ++i) {
    if (!seen.emplace(node_ids[i], i).second)
      throw InvalidParameters("duplicate node id '" + node_ids[i] + "'");
  }
  const int n = static_cast<int>(node_ids.size());
  const int l = static_cast<int>(lines.size());
  for (const Line& ln : lines) {
    if (ln.tail < 0 || ln.tail >= n || ln.head < 0 || ln.head >= n || ln.tail == ln.head)
      throw InvalidParameters("line endpoints out of range");
    if (!(ln.susceptance > 0.0))
      throw NonpositiveSusceptance("line susceptance must be positive");
    if (!(ln.capacity_mw > 0.0))
      throw InvalidParameters("line capacity must be positive");
  }

  Network net;
  net.node_ids_ = std::move(node_ids);
  net.lines_ = std::move(lines);

  net.incidence_ = Eigen::MatrixXd::Zero(n, l);
  for (int j = 0; j < l; ++j) {
    net.incidence_(net.lines_[j].tail, j) = 1.0;
    net.incidence_(net.lines_[j].head, j) = -1.0;
  }
  Eigen::VectorXd b(l);
  for (int j = 0; j < l; ++j) b(j) = net.lines_[j].susceptance;
  net.laplacian_ = net.incidence_ * b.asDiagonal() * net.incidence_.transpose();

  // Pseudo-inverse by eigendecomposition, deflating the zero mode.  A second
  // eigenvalue below the deflation threshold means the graph is disconnected.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(net.laplacian_);
  if (eig.info() != Eigen::Success) throw Error("Laplacian eigendecomposition failed");
  net.eigenvalues_ = eig.eigenvalues();
  const double lam_max = std::max(net.eigenvalues_(n - 1), 0.0);
  const double cut = kZeroEigenRel * std::max(lam_max, 1e-300);
  int zero_modes = 0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (net.eigenvalues_(i) <= cut) {
      ++zero_modes;
    } else {
      inv(i) = 1.0 / net.eigenvalues_(i);
    }
  }
  if (n == 1) {
    // Single node: Laplacian is the 1x1 zero matrix; pseudo-inverse is zero.
    if (l != 0) throw InvalidParameters("single-node network cannot have lines");
    net.lap_pinv_ = Eigen::MatrixXd::Zero(1, 1);
    net.shift_ = Eigen::MatrixXd::Zero(0, 1);
    return net;
  }
  if (zero_modes != 1)
    throw DisconnectedGraph("network graph is not connected (" + std::to_string(zero_modes) +
                            " zero Laplacian modes)");
  net.lap_pinv_ = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  net.shift_ = b.asDiagonal() * net.incidence_.transpose() * net.lap_pinv_;
  return net;
}

Eigen::VectorXd Network::capacities() const {
  Eigen::VectorXd f(line_count());
  for (int j = 0; j < line_count(); ++j) f(j) = lines_[j].capacity_mw;
  return f;
}

int Network::node_index(const std::string& id) const {
  for (int i = 0; i < node_count(); ++i)
    if (node_ids_[i] == id) return i;
  throw InvalidParameters("unknown node id '" + id + "'");
}

Eigen::VectorXd Network::line_flows(const Eigen::VectorXd& injection) const {
  if (injection.size() != node_count())
    throw DimensionMismatch("injection vector has wrong length");
  const double imbalance = std::abs(injection.sum());
  const double scale = injection.size() ? injection.cwiseAbs().maxCoeff() : 0.0;
  if (imbalance > 1e-6 * scale + 1e-9)
    throw UnbalancedInjection("injections sum to " + std::to_string(injection.sum()));
  return shift_ * injection;
}

Eigen::VectorXd Network::potential_flows(const Eigen::VectorXd& phi) const {
  if (phi.size() != node_count()) throw DimensionMismatch("potential vector has wrong length");
  Eigen::VectorXd v(line_count());
  for (int j = 0; j < line_count(); ++j)
    v(j) = lines_[j].susceptance * (phi(lines_[j].tail) - phi(lines_[j].head));
  return v;
}

void GeneratorFleet::validate(double min_quad) const {
  if (dispatch.size() != regulation.size())
    throw DimensionMismatch("dispatch/regulation fleet size mismatch");
  auto check = [&](const Generator& g, const char* kind, size_t node) {
    if (!g.present) return;
    if (!(g.lo <= g.hi))
      throw InvalidParameters(std::string(kind) + " generator bounds reversed at node " +
                              std::to_string(node));
    if (!(g.cost.c >= min_quad))
      throw InvalidParameters(std::string(kind) + " generator at node " + std::to_string(node) +
                              " is not strictly convex (c < " + std::to_string(min_quad) + ")");
  };
  for (size_t i = 0; i < dispatch.size(); ++i) check(dispatch[i], "dispatch", i);
  for (size_t i = 0; i < regulation.size(); ++i) check(regulation[i], "regulation", i);
}

double GeneratorFleet::dispatch_cost(const Eigen::VectorXd& q_b) const {
  if (q_b.size() != node_count()) throw DimensionMismatch("dispatch vector length");
  double total = 0.0;
  for (int i = 0; i < node_count(); ++i)
    if (dispatch[i].present) total += dispatch[i].cost.value(q_b(i));
  return total;
}

double GeneratorFleet::regulation_cost(const Eigen::VectorXd& production) const {
  if (production.size() != node_count()) throw DimensionMismatch("regulation vector length");
  double total = 0.0;
  for (int i = 0; i < node_count(); ++i)
    if (regulation[i].present) total += regulation[i].cost.value(production(i));
  return total;
}

FeasibilityReport check_feasible(const Network& net, const GeneratorFleet& fleet,
                                 const Eigen::VectorXd& q_b, const Eigen::VectorXd& q_p,
                                 const Eigen::VectorXd& recourse, const Eigen::VectorXd& demand,
                                 double tol) {
  const int n = net.node_count();
  if (fleet.node_count() != n || q_b.size() != n || q_p.size() != n || recourse.size() != n ||
      demand.size() != n)
    throw DimensionMismatch("check_feasible: vector lengths must equal node count");

  FeasibilityReport rep;
  auto flag = [&](const char* kind, int idx, double mag) {
    if (mag > tol) {
      rep.feasible = false;
      rep.violations.push_back({kind, idx, mag});
    }
  };
  for (int i = 0; i < n; ++i) {
    const Generator& g = fleet.dispatch[i];
    const double lo = g.present ? g.lo : 0.0, hi = g.present ? g.hi : 0.0;
    flag("dispatch-bound", i, std::max(lo - q_b(i), q_b(i) - hi));
    const Generator& r = fleet.regulation[i];
    const double rlo = r.present ? r.lo : 0.0, rhi = r.present ? r.hi : 0.0;
    const double prod = q_p(i) + recourse(i);
    flag("regulation-bound", i, std::max(rlo - prod, prod - rhi));
  }
  const Eigen::VectorXd injection = q_b + q_p + recourse - demand;
  flag("balance", 0, std::abs(injection.sum()));
  // Evaluate flows through the shift factors directly: the balance check above
  // already reports any imbalance, and a projected flow is still meaningful.
  const Eigen::VectorXd flows = net.shift_factors() * injection;
  for (int j = 0; j < net.line_count(); ++j)
    flag("line-limit", j, std::abs(flows(j)) - net.lines()[j].capacity_mw);
  return rep;
}

}  // namespace edfr
