#include "edfr/scenario.hpp"

#include <cmath>
#include <map>
#include <random>
#include <unordered_map>

namespace edfr {

double ScenarioTree::total_mass() const {
  double m = 0.0;
  for (const Outcome& o : outcomes) m += o.p;
  return m;
}

const Outcome& ScenarioTree::root() const {
  for (const Outcome& o : outcomes)
    if (o.parent < 0) return o;
  throw InvalidParameters("tree has no root outcome");
}

std::vector<TreeViolation> validate_tree(const ScenarioTree& tree, double tol) {
  std::vector<TreeViolation> out;
  auto add = [&](const char* kind, std::string detail, double mag = 0.0) {
    out.push_back({kind, std::move(detail), mag});
  };
  if (tree.K < 1) add("period-mass", "K must be >= 1");
  if (tree.outcomes.empty()) {
    add("root", "tree has no outcomes");
    return out;
  }

  std::unordered_map<int, const Outcome*> by_id;
  for (const Outcome& o : tree.outcomes) {
    if (!by_id.emplace(o.id, &o).second) add("parent-link", "duplicate outcome id " + std::to_string(o.id));
  }
  const Eigen::Index dim = tree.outcomes.front().demand.size();
  int roots = 0;
  std::map<int, double> mass;
  for (const Outcome& o : tree.outcomes) {
    if (o.period < 1 || o.period > tree.K)
      add("period-mass", "outcome " + std::to_string(o.id) + " in period " + std::to_string(o.period) +
                             " outside 1.." + std::to_string(tree.K));
    if (!(o.p > 0.0) || o.p > 1.0 + tol)
      add("probability", "outcome " + std::to_string(o.id) + " has p = " + std::to_string(o.p), o.p);
    if (o.demand.size() != dim)
      add("dimension", "outcome " + std::to_string(o.id) + " demand dimension mismatch",
          static_cast<double>(o.demand.size()));
    mass[o.period] += o.p;
    if (o.parent < 0) {
      ++roots;
      if (o.period != 1) add("root", "root outcome must be in period 1");
      if (std::abs(o.p - 1.0) > tol) add("root", "root outcome must have p = 1", o.p);
    } else {
      auto it = by_id.find(o.parent);
      if (it == by_id.end()) {
        add("parent-link", "outcome " + std::to_string(o.id) + " has unknown parent " +
                               std::to_string(o.parent));
      } else if (it->second->period != o.period - 1) {
        add("parent-link", "outcome " + std::to_string(o.id) + " parent is not one period earlier");
      }
    }
  }
  if (roots != 1) add("root", std::to_string(roots) + " root outcomes");
  for (int k = 1; k <= tree.K; ++k) {
    const double m = mass.count(k) ? mass[k] : 0.0;
    if (std::abs(m - 1.0) > tol)
      add("period-mass", "period " + std::to_string(k) + " probability mass " + std::to_string(m),
          std::abs(m - 1.0));
  }
  return out;
}

namespace {

// Deterministic standard-normal draw: Box-Muller over mt19937_64 uniforms.
// std::normal_distribution is implementation-defined, this is not.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : gen_(seed) {}
  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = unit_(gen_);
    } while (u1 <= 0.0);
    const double u2 = unit_(gen_);
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace

ScenarioTree sample_random_walk(const Eigen::VectorXd& d1, double mu_d, double sigma, int K,
                                int n_samples, std::uint64_t seed, double period_duration_s) {
  if (K < 1) throw InvalidParameters("K must be >= 1");
  if (n_samples < 1) throw InvalidParameters("n_samples must be >= 1");
  if (sigma < 0.0) throw InvalidParameters("sigma must be >= 0");
  if (d1.size() == 0) throw InvalidParameters("d1 must be non-empty");

  ScenarioTree tree;
  tree.K = K;
  tree.period_duration_s = period_duration_s;
  tree.has_seed = true;
  tree.seed = seed;

  Outcome root;
  root.id = 1;
  root.period = 1;
  root.parent = -1;
  root.p = 1.0;
  root.demand = d1;
  tree.outcomes.push_back(std::move(root));
  if (K == 1) return tree;

  const int n = static_cast<int>(d1.size());
  NormalSource normal(seed);
  int next_id = 2;
  for (int i = 0; i < n_samples; ++i) {
    Eigen::VectorXd factor = Eigen::VectorXd::Ones(n);
    int parent = 1;
    for (int k = 2; k <= K; ++k) {
      for (int j = 0; j < n; ++j) factor(j) += mu_d + sigma * normal();
      Outcome o;
      o.id = next_id++;
      o.period = k;
      o.parent = parent;
      o.p = 1.0 / n_samples;
      o.demand = factor.cwiseProduct(d1);
      parent = o.id;
      tree.outcomes.push_back(std::move(o));
    }
  }
  return tree;
}

Eigen::VectorXd sample_gaussian_vector(int n, double mean, double sigma, std::uint64_t seed) {
  if (n < 0) throw InvalidParameters("n must be >= 0");
  if (sigma < 0.0) throw InvalidParameters("sigma must be >= 0");
  NormalSource normal(seed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = mean + sigma * normal();
  return v;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 round over the combined word
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace edfr
