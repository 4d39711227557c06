#pragma once

#include <Eigen/Dense>
#include <vector>

#include "edfr/decomposition.hpp"
#include "edfr/network.hpp"

namespace edfr {

// Integrator gains of the distributed price/line-dual dynamics.
struct DfrGains {
  double zeta_pi = 1.0;   // price integrator
  double zeta_mu = 1.0;   // line dual integrators
  double chi_phi = 1.0;   // virtual-angle integrator
};

// One real-time regulation scenario: fixed setpoints, one realized demand,
// swing-equation constants, and an optional interior barrier that keeps the
// controller output strictly inside its capacity band.
struct DfrInstance {
  Network net;
  GeneratorFleet fleet;
  Eigen::VectorXd q_b;      // packed dispatch setpoint
  Eigen::VectorXd q_p;      // packed regulation setpoint
  Eigen::VectorXd demand;   // nodal, MW
  double inertia = 0.1;     // M, per node
  double damping = 1.0;     // D, per node
  double barrier = 0.0;     // b >= 0; 0 = plain capacity clamp

  void validate() const;
};

// Dynamic state: mechanical (theta, omega) plus the controller's price,
// line-dual and virtual-angle coordinates.
struct DfrState {
  Eigen::VectorXd theta, omega, pi_p, phi;  // per node
  Eigen::VectorXd mu_hi, mu_lo;             // per line, >= 0
};

struct DfrOptions {
  double dt = 1e-3;        // fixed RK4 step, seconds
  double t_end = 10.0;     // simulated horizon, seconds
  int record_every = 0;    // steps between trajectory records; 0 = endpoints only
  DfrGains gains;
};

struct TrajectoryPoint {
  double t = 0.0;
  DfrState state;
  Eigen::VectorXd r;        // nodal controller response
  double objective = 0.0;   // regulation cost + kinetic damping term
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;  // per record_every, plus the endpoint
  DfrState final_state;
  double t_end = 0.0;
  int steps = 0;
};

// Residuals of the stationarity system at a given state; all the pieces a
// converged trajectory is expected to drive to zero.
struct EquilibriumReport {
  double field_residual = 0.0;     // max |projected state derivative|
  double frequency = 0.0;          // ||omega||_inf
  double balance_residual = 0.0;   // swing-equation right side
  double price_residual = 0.0;     // price/line-dual consistency
  double flow_violation = 0.0;     // physical line flows beyond capacity
  double complementarity = 0.0;    // line dual x flow slack products

  double max_residual() const;
};

// Capacity-clamped (or barrier-regularized) optimal response of each
// regulation generator to its local frequency and price signal; returns the
// nodal response r (zero at nodes without regulation).
Eigen::VectorXd controller_response(const DfrInstance& inst, const Eigen::VectorXd& omega,
                                    const Eigen::VectorXd& pi_p);

// Rest state: flat angles, zero frequency, prices matching the setpoint
// marginal so the initial response is zero.
DfrState initial_state(const DfrInstance& inst);

// Stationary state assembled from a solved regulation re-balance: zero
// frequency, angles from the injection, prices and line duals negated /
// copied from the optimizer's duals.
DfrState equilibrium_from_fr(const DfrInstance& inst, const FrSolution& fr);

// Fixed-step RK4 integration of the closed loop.  Throws NumericalBlowup if
// any state magnitude passes 1e9.
Trajectory simulate(const DfrInstance& inst, const DfrState& init, const DfrOptions& opts);

EquilibriumReport check_equilibrium(const DfrInstance& inst, const DfrState& state,
                                    const DfrGains& gains = {});

}  // namespace edfr
