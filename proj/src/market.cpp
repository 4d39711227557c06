#include "edfr/market.hpp"

#include <algorithm>
#include <cmath>

namespace edfr {

namespace {

void require_bid(const SupplyBid& bid) {
  if (!(bid.alpha > 0) || !(bid.gamma > 0))
    throw InvalidParameters("bid parameters must be positive");
}

int root_index(const ScenarioTree& tree) {
  for (size_t i = 0; i < tree.outcomes.size(); ++i)
    if (tree.outcomes[i].period == 1) return static_cast<int>(i);
  throw InvalidParameters("scenario tree has no root outcome");
}

QuadCost bid_quad(const Generator& g, const SupplyBid& bid) {
  require_bid(bid);
  QuadCost qc;
  qc.b = g.cost.b;
  qc.c = g.cost.c * bid.gamma / bid.alpha;
  qc.a = -(qc.b * g.lo + 0.5 * qc.c * g.lo * g.lo);  // zero at the lower bound
  return qc;
}

double clamp_to(const Generator& g, double q) { return std::clamp(q, g.lo, g.hi); }

struct Band {
  std::string name;
  double optimal;
};

// Profit-maximizing response to a posted price under the true cost: the
// unconstrained marginal-matching quantity, clamped; boundary ties count as
// clamped.
Band best_response(const Generator& g, double price) {
  const double unconstrained = g.cost.inverse_marginal(price);
  const double tie = 1e-7 * (1.0 + std::abs(g.hi - g.lo));
  if (unconstrained <= g.lo + tie) return {"clamp-low", g.lo};
  if (unconstrained >= g.hi - tie) return {"clamp-high", g.hi};
  return {"interior", unconstrained};
}

}  // namespace

double bid_marginal(const Generator& g, const SupplyBid& bid, double q) {
  require_bid(bid);
  return g.cost.b + g.cost.c * (bid.gamma / bid.alpha) * q;
}

double bid_cost(const Generator& g, const SupplyBid& bid, double q) {
  require_bid(bid);
  const double slack = 1e-9 * (1.0 + std::abs(g.lo) + std::abs(g.hi));
  if (q < g.lo - slack || q > g.hi + slack)
    throw OutOfBounds("bid cost queried outside the capacity range");
  const double cq = g.cost.c * bid.gamma / bid.alpha;
  return g.cost.b * (q - g.lo) + 0.5 * cq * (q * q - g.lo * g.lo);
}

double supply_quantity(const Generator& g, const SupplyBid& bid, double price) {
  require_bid(bid);
  const double cq = g.cost.c * bid.gamma / bid.alpha;
  return clamp_to(g, (price - g.cost.b) / cq);
}

GeneratorFleet bid_fleet(const GeneratorFleet& fleet, const VariableMap& vm, const BidSet& bids) {
  if (bids.dispatch.size() != static_cast<size_t>(vm.n_dispatch()) ||
      bids.regulation.size() != static_cast<size_t>(vm.n_regulation()))
    throw DimensionMismatch("one bid per packed generator required");
  GeneratorFleet out = fleet;
  for (int j = 0; j < vm.n_dispatch(); ++j) {
    Generator& g = out.dispatch[vm.dispatch_nodes[j]];
    g.cost = bid_quad(g, bids.dispatch[j]);
  }
  for (int j = 0; j < vm.n_regulation(); ++j) {
    Generator& g = out.regulation[vm.regulation_nodes[j]];
    g.cost = bid_quad(g, bids.regulation[j]);
  }
  return out;
}

MarketOutcome clear_market(const Network& net, const GeneratorFleet& fleet,
                           const ScenarioTree& tree, const BidSet& bids,
                           const Eigen::VectorXd& delta, double tol, const SolveOptions& opts) {
  fleet.validate();
  const VariableMap vm = VariableMap::build(fleet);
  const GeneratorFleet declared = bid_fleet(fleet, vm, bids);
  const int ridx = root_index(tree);
  const double K = static_cast<double>(tree.K);

  MarketOutcome out;
  out.bids = bids;
  out.delta = delta;
  out.tol = tol;

  const EdSolution ed =
      solve_ed(net, declared, tree.outcomes[ridx].demand, tree.K, delta, opts);
  out.q_b = ed.q_b;
  out.q_p = ed.q_p;
  out.prices.pi_b = ed.nodal / K + delta;

  out.y.resize(tree.outcomes.size());
  out.prices.pi_p.resize(tree.outcomes.size());
  for (size_t s = 0; s < tree.outcomes.size(); ++s) {
    if (static_cast<int>(s) == ridx) {
      out.y[s] = ed.q_p;
      out.prices.pi_p[s] = ed.nodal / K;
      continue;
    }
    const FrSolution fr =
        solve_fr(net, declared, ed.q_b, ed.q_p, tree.outcomes[s].demand, opts);
    out.y[s] = fr.y;
    out.prices.pi_p[s] = fr.nodal;
  }

  // Profits under true costs and checks against the price-taking response.
  out.dispatch_profits.assign(vm.n_dispatch(), 0.0);
  for (int j = 0; j < vm.n_dispatch(); ++j) {
    const int n = vm.dispatch_nodes[j];
    const Generator& g = fleet.dispatch[n];
    const double price = out.prices.pi_b(n);
    out.dispatch_profits[j] = K * (price * out.q_b(j) - g.cost.value(out.q_b(j)));
    out.dispatch_profit += out.dispatch_profits[j];
    const Band band = best_response(g, price);
    BandCheck chk;
    chk.kind = "dispatch";
    chk.node = n;
    chk.outcome = -1;
    chk.band = band.name;
    chk.assigned = out.q_b(j);
    chk.optimal = band.optimal;
    chk.gap = std::abs(chk.assigned - chk.optimal) / (1.0 + std::abs(chk.optimal));
    out.max_gap = std::max(out.max_gap, chk.gap);
    out.checks.push_back(std::move(chk));
  }
  out.regulation_profits.assign(vm.n_regulation(), 0.0);
  for (int j = 0; j < vm.n_regulation(); ++j) {
    const int n = vm.regulation_nodes[j];
    const Generator& g = fleet.regulation[n];
    for (size_t s = 0; s < tree.outcomes.size(); ++s) {
      const double price = out.prices.pi_p[s](n);
      const double q = out.y[s](j);
      out.regulation_profits[j] += tree.outcomes[s].p * (price * q - g.cost.value(q));
      const Band band = best_response(g, price);
      BandCheck chk;
      chk.kind = "regulation";
      chk.node = n;
      chk.outcome = static_cast<int>(s);
      chk.band = band.name;
      chk.assigned = q;
      chk.optimal = band.optimal;
      chk.gap = std::abs(chk.assigned - chk.optimal) / (1.0 + std::abs(chk.optimal));
      out.max_gap = std::max(out.max_gap, chk.gap);
      out.checks.push_back(std::move(chk));
    }
    out.regulation_profit += out.regulation_profits[j];
  }
  out.equilibrium = out.max_gap <= tol;
  return out;
}

EquilibriumConstruction construct_equilibrium(const Network& net, const GeneratorFleet& fleet,
                                              const ScenarioTree& tree, const SolveOptions& opts,
                                              const BidSet* family) {
  const SystemSolution sys = solve_system(net, fleet, tree, opts);
  const VariableMap& vm = sys.vm;
  const int ridx = root_index(tree);
  const double K = static_cast<double>(tree.K);
  if (family && (family->dispatch.size() != static_cast<size_t>(vm.n_dispatch()) ||
                 family->regulation.size() != static_cast<size_t>(vm.n_regulation())))
    throw DimensionMismatch("one family constant per packed generator required");

  EquilibriumConstruction eq;
  for (int j = 0; j < vm.n_dispatch(); ++j) {
    const double gamma = family ? family->dispatch[j].gamma : 1.0;
    eq.bids.dispatch.push_back({gamma, gamma});
  }
  for (int j = 0; j < vm.n_regulation(); ++j) {
    const double gamma = family ? family->regulation[j].gamma : 1.0;
    eq.bids.regulation.push_back({gamma, gamma});
  }
  eq.delta = optimal_delta(sys, tree);
  eq.q_b = sys.q_b;
  eq.q_p = sys.q_p;
  eq.y = sys.y;
  eq.prices.pi_b = sys.nodal[ridx] + eq.delta;
  eq.prices.pi_p = sys.nodal;
  return eq;
}

}  // namespace edfr
