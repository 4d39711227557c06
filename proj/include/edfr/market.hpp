#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "edfr/decomposition.hpp"
#include "edfr/network.hpp"
#include "edfr/scenario.hpp"

namespace edfr {

// One generator's submitted supply-function parameter.  gamma is the
// generator's family constant; bidding alpha = gamma reproduces the true
// marginal curve.
struct SupplyBid {
  double alpha = 1.0;
  double gamma = 1.0;
};

// Bids aligned with the packed generator order of a VariableMap.
struct BidSet {
  std::vector<SupplyBid> dispatch;
  std::vector<SupplyBid> regulation;
};

// Cost implied by a bid: the integral of the bid marginal from the lower
// capacity bound.  Throws OutOfBounds outside [lo, hi].
double bid_cost(const Generator& g, const SupplyBid& bid, double q);
double bid_marginal(const Generator& g, const SupplyBid& bid, double q);

// Quantity the bid offers at a price, clamped to capacity.
double supply_quantity(const Generator& g, const SupplyBid& bid, double price);

// Fleet with every present generator's cost replaced by its bid-implied cost.
GeneratorFleet bid_fleet(const GeneratorFleet& fleet, const VariableMap& vm, const BidSet& bids);

struct MarketPrices {
  Eigen::VectorXd pi_b;                 // nodal dispatch price, per period
  std::vector<Eigen::VectorXd> pi_p;    // nodal regulation price per outcome
};

// One generator/outcome comparison between the cleared quantity and the
// profit-maximizing response to the posted price.
struct BandCheck {
  std::string kind;     // "dispatch" or "regulation"
  int node = 0;
  int outcome = -1;     // -1 for dispatch
  std::string band;     // "clamp-low", "interior", "clamp-high"
  double assigned = 0.0;
  double optimal = 0.0;
  double gap = 0.0;     // relative
};

struct MarketOutcome {
  BidSet bids;
  Eigen::VectorXd delta;
  Eigen::VectorXd q_b, q_p;             // packed cleared schedule
  std::vector<Eigen::VectorXd> y;       // cleared regulation per outcome
  MarketPrices prices;
  std::vector<double> dispatch_profits;     // per packed generator, true costs
  std::vector<double> regulation_profits;
  double dispatch_profit = 0.0;
  double regulation_profit = 0.0;
  std::vector<BandCheck> checks;
  double max_gap = 0.0;
  bool equilibrium = false;             // every cleared quantity best-responds
  double tol = 0.0;
};

// Clears the two-settlement market at the announced offset: schedules from
// the bid-cost problems, prices from their duals, then checks every cleared
// quantity against the bidder's true profit-maximizing response.
MarketOutcome clear_market(const Network& net, const GeneratorFleet& fleet,
                           const ScenarioTree& tree, const BidSet& bids,
                           const Eigen::VectorXd& delta, double tol = 1e-5,
                           const SolveOptions& opts = {});

// Truthful bid profile plus the prices and schedule the joint solve induces.
struct EquilibriumConstruction {
  BidSet bids;
  Eigen::VectorXd delta;
  MarketPrices prices;
  Eigen::VectorXd q_b, q_p;
  std::vector<Eigen::VectorXd> y;
};

// family, when given, supplies each generator's gamma; the construction bids
// alpha = gamma (gamma defaults to 1 otherwise).
EquilibriumConstruction construct_equilibrium(const Network& net, const GeneratorFleet& fleet,
                                              const ScenarioTree& tree,
                                              const SolveOptions& opts = {},
                                              const BidSet* family = nullptr);

}  // namespace edfr
