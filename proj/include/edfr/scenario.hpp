#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "edfr/errors.hpp"

namespace edfr {

// One demand outcome.  The root (period 1) has parent = -1 and p = 1.
struct Outcome {
  int id = 0;
  int period = 1;
  int parent = -1;
  double p = 1.0;            // probability mass of this outcome within its period
  Eigen::VectorXd demand;    // MW per node
};

// Scenario tree over K periods.  Outcome probabilities sum to one within each
// period, so the total mass over the tree equals K.
struct ScenarioTree {
  int K = 1;
  double period_duration_s = 0.0;
  std::vector<Outcome> outcomes;
  bool has_seed = false;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(outcomes.size()); }
  double total_mass() const;
  const Outcome& root() const;
};

struct TreeViolation {
  std::string kind;    // "period-mass", "parent-link", "root", "dimension", "probability"
  std::string detail;
  double magnitude = 0.0;
};

// Structural validation: single root in period 1 with p = 1, parents one
// period earlier, per-period probability mass 1 within tol, demands of equal
// dimension, probabilities in (0, 1].
std::vector<TreeViolation> validate_tree(const ScenarioTree& tree, double tol = 1e-9);

// Multiplicative random-walk demand sampler.  Draws per-period increments
// w ~ N(mu_d * 1, sigma^2 I) and sets d_k = diag(1 + sum_{k'<k} w_k') * d_1
// along each of n_samples equally likely sample paths hanging off the common
// root.  Same seed, same tree, bit for bit.
ScenarioTree sample_random_walk(const Eigen::VectorXd& d1, double mu_d, double sigma, int K,
                                int n_samples, std::uint64_t seed,
                                double period_duration_s = 15.0);

// Deterministic n-vector of iid N(mean, sigma^2) draws from the same
// generator family as sample_random_walk.
Eigen::VectorXd sample_gaussian_vector(int n, double mean, double sigma, std::uint64_t seed);

// Order-insensitive mix of a seed with an index, for deriving per-item
// sub-seeds that do not collide for distinct index tuples.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace edfr
