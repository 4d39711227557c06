#include "edfr/casestudy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "edfr/io.hpp"

namespace edfr {

namespace {

// Aggregate operating range and marginal-cost range of each unit group; a
// group's units share its range in equal slices.
struct UnitGroup {
  const char* name;
  int units;
  double group_lo, group_hi;        // MW, whole group
  double marginal_lo, marginal_hi;  // $/MWh at the range ends
  bool regulation;
};

constexpr UnitGroup kGroups[] = {
    {"U12", 5, 10.0, 60.0, 58.14, 64.446, false},
    {"U20", 4, 64.0, 80.0, 130.0, 130.0, true},
    {"U50", 6, 60.0, 300.0, 0.001, 0.001, true},
    {"U76", 4, 60.0, 304.0, 16.511, 18.231, false},
    {"U100", 3, 75.0, 300.0, 46.295, 54.196, false},
    {"U155", 4, 216.0, 620.0, 13.294, 14.974, false},
    {"U197", 3, 207.0, 591.0, 49.57, 51.405, false},
    {"U350", 1, 140.0, 350.0, 13.22, 15.276, false},
    {"U400", 2, 200.0, 800.0, 4.466, 4.594, false},
};

const UnitGroup& find_group(const std::string& name) {
  for (const auto& g : kGroups)
    if (name == g.name) return g;
  throw UnknownUnitGroup("unknown unit group '" + name + "'");
}

void require_header(const std::vector<std::vector<std::string>>& rows,
                    const std::vector<std::string>& expected, const std::string& file) {
  if (rows.empty() || rows.front() != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ParseError(file + ": expected header " + want);
  }
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double packed_regulation_cost(const GeneratorFleet& fleet, const VariableMap& vm,
                              const Eigen::VectorXd& y) {
  double total = 0.0;
  for (int j = 0; j < vm.n_regulation(); ++j)
    total += fleet.regulation[vm.regulation_nodes[j]].cost.value(y(j));
  return total;
}

// Replays fixed setpoints over every tree outcome: closed-form re-balance
// where valid, full solve otherwise.  Expected cost uses the outcome masses;
// path costs sum the per-period terms along each sample chain.
struct ScheduleEval {
  bool feasible = true;
  int first_bad_outcome = -1;
  double expected = 0.0;
  Eigen::VectorXd path_costs;
  int n_fallback = 0;
};

ScheduleEval evaluate_schedule(const Network& net, const GeneratorFleet& fleet,
                               const VariableMap& vm, const ScenarioTree& tree,
                               const std::vector<std::vector<int>>& paths,
                               const Eigen::VectorXd& q_b, const Eigen::VectorXd& q_p,
                               const SolveOptions& opts) {
  const int S = tree.size();
  ScheduleEval ev;
  Eigen::VectorXd reg_cost(S);
  for (int s = 0; s < S; ++s) {
    Eigen::VectorXd ys;
    if (auto fast = fr_fast(net, fleet, vm, q_b, tree.outcomes[s].demand)) {
      ys = std::move(*fast);
    } else {
      ++ev.n_fallback;
      try {
        ys = solve_fr(net, fleet, q_b, q_p, tree.outcomes[s].demand, opts).y;
      } catch (const Infeasible&) {
        ev.feasible = false;
        ev.first_bad_outcome = tree.outcomes[s].id;
        return ev;
      }
    }
    reg_cost(s) = packed_regulation_cost(fleet, vm, ys);
  }

  const double cb = fleet.dispatch_cost(vm.expand_dispatch(q_b, net.node_count()));
  ev.expected = tree.K * cb;
  for (int s = 0; s < S; ++s) ev.expected += tree.outcomes[s].p * reg_cost(s);

  ev.path_costs.resize(static_cast<int>(paths.size()));
  for (std::size_t j = 0; j < paths.size(); ++j) {
    double cost = tree.K * cb;
    for (int s : paths[j]) cost += reg_cost(s);
    ev.path_costs(static_cast<int>(j)) = cost;
  }
  return ev;
}

}  // namespace

Rts24Case load_rts24(const std::string& data_dir) {
  const auto node_rows = read_csv(data_dir + "/nodes.csv");
  require_header(node_rows, {"node", "demand_mw"}, "nodes.csv");
  std::vector<std::string> node_ids;
  std::vector<double> demand_vals;
  std::map<std::string, int> index_of;
  for (std::size_t r = 1; r < node_rows.size(); ++r) {
    const auto& row = node_rows[r];
    if (row.size() != 2) throw ParseError("nodes.csv: row with " + std::to_string(row.size()) + " fields");
    if (index_of.count(row[0])) throw ParseError("nodes.csv: duplicate node '" + row[0] + "'");
    index_of[row[0]] = static_cast<int>(node_ids.size());
    node_ids.push_back(row[0]);
    const double d = parse_double(row[1]);
    if (d < 0.0) throw ParseError("nodes.csv: negative demand at node '" + row[0] + "'");
    demand_vals.push_back(d);
  }
  if (node_ids.empty()) throw ParseError("nodes.csv: no nodes");

  const auto line_rows = read_csv(data_dir + "/lines.csv");
  require_header(line_rows, {"tail", "head", "reactance", "capacity_mw"}, "lines.csv");
  std::vector<Line> lines;
  for (std::size_t r = 1; r < line_rows.size(); ++r) {
    const auto& row = line_rows[r];
    if (row.size() != 4) throw ParseError("lines.csv: row with " + std::to_string(row.size()) + " fields");
    const auto tail = index_of.find(row[0]);
    const auto head = index_of.find(row[1]);
    if (tail == index_of.end() || head == index_of.end())
      throw ParseError("lines.csv: endpoint not in nodes.csv on row " + std::to_string(r + 1));
    const double x = parse_double(row[2]);
    if (!(x > 0.0)) throw ParseError("lines.csv: reactance must be > 0 on row " + std::to_string(r + 1));
    Line line;
    line.tail = tail->second;
    line.head = head->second;
    line.susceptance = 1.0 / x;
    line.capacity_mw = parse_double(row[3]);
    lines.push_back(line);
  }

  Rts24Case cs;
  cs.net = Network::build(node_ids, std::move(lines));
  cs.base_demand = Eigen::Map<const Eigen::VectorXd>(demand_vals.data(),
                                                     static_cast<int>(demand_vals.size()));

  const auto gen_rows = read_csv(data_dir + "/generators.csv");
  require_header(gen_rows, {"node", "group"}, "generators.csv");
  struct Agg {
    double lo = 0.0, hi = 0.0;
    double m_lo = std::numeric_limits<double>::infinity();
    double m_hi = -std::numeric_limits<double>::infinity();
  };
  std::map<int, Agg> agg[2];  // [0] dispatch, [1] regulation
  for (std::size_t r = 1; r < gen_rows.size(); ++r) {
    const auto& row = gen_rows[r];
    if (row.size() != 2) throw ParseError("generators.csv: row with " + std::to_string(row.size()) + " fields");
    const auto it = index_of.find(row[0]);
    if (it == index_of.end())
      throw ParseError("generators.csv: node '" + row[0] + "' not in nodes.csv");
    const UnitGroup& g = find_group(row[1]);
    Agg& a = agg[g.regulation ? 1 : 0][it->second];
    a.lo += g.group_lo / g.units;
    a.hi += g.group_hi / g.units;
    a.m_lo = std::min(a.m_lo, g.marginal_lo);
    a.m_hi = std::max(a.m_hi, g.marginal_hi);
  }

  const int n = static_cast<int>(node_ids.size());
  cs.fleet.dispatch.assign(n, Generator{});
  cs.fleet.regulation.assign(n, Generator{});
  for (int kind = 0; kind < 2; ++kind) {
    for (const auto& [idx, a] : agg[kind]) {
      Generator gen;
      gen.present = true;
      gen.lo = a.lo;
      gen.hi = a.hi;
      // two-point fit of the marginal range over the aggregate range
      double c = (a.m_hi - a.m_lo) / (a.hi - a.lo);
      if (c < 1e-6) c = 1e-6;
      gen.cost.c = c;
      gen.cost.b = a.m_lo - c * a.lo;
      gen.cost.a = 0.0;
      (kind == 0 ? cs.fleet.dispatch : cs.fleet.regulation)[idx] = gen;
    }
  }
  cs.fleet.validate();
  return cs;
}

void SweepConfig::validate() const {
  if (n_samples < 1) throw InvalidParameters("sweep: n_samples must be >= 1");
  if (periods < 1) throw InvalidParameters("sweep: periods must be >= 1");
  if (!(period_duration_s > 0.0)) throw InvalidParameters("sweep: period_duration_s must be > 0");
  if (sigma_d < 0.0) throw InvalidParameters("sweep: sigma_d must be >= 0");
  if (mu_d.empty() || mu_eps.empty() || sigma_eps.empty())
    throw InvalidParameters("sweep: mu_d, mu_eps and sigma_eps must be non-empty");
  for (double s : sigma_eps)
    if (s < 0.0) throw InvalidParameters("sweep: sigma_eps entries must be >= 0");
}

SweepConfig sweep_config_from_toml(const std::string& path) {
  const auto kv = parse_flat_toml_file(path);
  SweepConfig cfg;
  auto number = [&](const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Number) throw ParseError("sweep key '" + key + "' must be a number");
    return v.num;
  };
  auto array = [&](const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Array) throw ParseError("sweep key '" + key + "' must be an array");
    return v.arr;
  };
  for (const auto& [key, value] : kv) {
    if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(number(value, key));
    } else if (key == "n_samples") {
      cfg.n_samples = static_cast<int>(number(value, key));
    } else if (key == "periods") {
      cfg.periods = static_cast<int>(number(value, key));
    } else if (key == "period_duration_s") {
      cfg.period_duration_s = number(value, key);
    } else if (key == "sigma_d") {
      cfg.sigma_d = number(value, key);
    } else if (key == "mu_d") {
      cfg.mu_d = array(value, key);
    } else if (key == "mu_eps") {
      cfg.mu_eps = array(value, key);
    } else if (key == "sigma_eps") {
      cfg.sigma_eps = array(value, key);
    } else {
      throw ParseError("unknown sweep key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::optional<Eigen::VectorXd> fr_fast(const Network& net, const GeneratorFleet& fleet,
                                       const VariableMap& vm, const Eigen::VectorXd& q_b_packed,
                                       const Eigen::VectorXd& demand) {
  const int np = vm.n_regulation();
  if (np == 0) return std::nullopt;
  if (q_b_packed.size() != vm.n_dispatch()) throw DimensionMismatch("fr_fast: packed dispatch size");
  if (demand.size() != net.node_count()) throw DimensionMismatch("fr_fast: demand size");

  Eigen::VectorXd lo(np), hi(np), b(np), c(np), y(np);
  for (int j = 0; j < np; ++j) {
    const Generator& g = fleet.regulation[vm.regulation_nodes[j]];
    lo(j) = g.lo;
    hi(j) = g.hi;
    b(j) = g.cost.b;
    c(j) = g.cost.c;
  }
  const double target = demand.sum() - q_b_packed.sum();
  if (target < lo.sum() || target > hi.sum()) return std::nullopt;

  // The aggregate response m -> sum_j clamp((m - b_j)/c_j, lo_j, hi_j) is
  // piecewise linear and nondecreasing in the shared marginal m; locate the
  // exact solution by breakpoint search (greedy clamping over-commits when
  // several near-linear units shoot past their bounds together).
  std::vector<double> knots(2 * np);
  for (int j = 0; j < np; ++j) {
    knots[2 * j] = b(j) + c(j) * lo(j);
    knots[2 * j + 1] = b(j) + c(j) * hi(j);
  }
  std::sort(knots.begin(), knots.end());
  const auto total_at = [&](double m) {
    double t = 0.0;
    for (int j = 0; j < np; ++j) t += std::clamp((m - b(j)) / c(j), lo(j), hi(j));
    return t;
  };
  double m = knots.front();
  if (target >= total_at(knots.back())) {
    m = knots.back();
  } else if (target > total_at(knots.front())) {
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      const double tb = total_at(knots[k + 1]);
      if (target > tb) continue;
      const double ta = total_at(knots[k]);
      const double mid = 0.5 * (knots[k] + knots[k + 1]);
      double winv = 0.0;
      for (int j = 0; j < np; ++j)
        if (b(j) + c(j) * lo(j) < mid && mid < b(j) + c(j) * hi(j)) winv += 1.0 / c(j);
      m = winv > 0.0 ? knots[k] + (target - ta) / winv : knots[k];
      break;
    }
  }
  std::vector<int> state(np, 0);  // 0 free, -1 at lo, +1 at hi
  double winv_free = 0.0;
  for (int j = 0; j < np; ++j) {
    y(j) = (m - b(j)) / c(j);
    if (y(j) <= lo(j)) {
      y(j) = lo(j);
      state[j] = -1;
    } else if (y(j) >= hi(j)) {
      y(j) = hi(j);
      state[j] = +1;
    } else {
      winv_free += 1.0 / c(j);
    }
  }
  // absorb rounding drift into the free set so the balance is exact
  const double drift = target - y.sum();
  if (winv_free > 0.0)
    for (int j = 0; j < np; ++j)
      if (state[j] == 0) y(j) = std::clamp(y(j) + drift / (c(j) * winv_free), lo(j), hi(j));

  // optimality of the clamp pattern; greedy clamping can over-commit
  if (std::abs(y.sum() - target) > 1e-9 * (1.0 + std::abs(target))) return std::nullopt;
  const double tol_m = 1e-9 * (1.0 + std::abs(m));
  for (int j = 0; j < np; ++j) {
    const double edge = b(j) + c(j) * y(j);
    if (state[j] < 0 && edge < m - tol_m) return std::nullopt;
    if (state[j] > 0 && edge > m + tol_m) return std::nullopt;
  }

  // strict margin on every line so the limit duals are exactly zero
  Eigen::VectorXd inj = -demand;
  for (int j = 0; j < vm.n_dispatch(); ++j) inj(vm.dispatch_nodes[j]) += q_b_packed(j);
  for (int j = 0; j < np; ++j) inj(vm.regulation_nodes[j]) += y(j);
  const Eigen::VectorXd flow = net.shift_factors() * inj;
  for (int l = 0; l < net.line_count(); ++l) {
    const double cap = net.lines()[l].capacity_mw;
    if (std::abs(flow(l)) > cap - 1e-6 * (1.0 + cap)) return std::nullopt;
  }
  return y;
}

std::vector<std::vector<int>> sample_paths(const ScenarioTree& tree) {
  std::map<int, int> by_id;
  for (int i = 0; i < tree.size(); ++i) by_id[tree.outcomes[i].id] = i;

  std::vector<int> leaves;
  for (const auto& o : tree.outcomes)
    if (o.period == tree.K) leaves.push_back(o.id);
  std::sort(leaves.begin(), leaves.end());

  std::vector<std::vector<int>> paths;
  paths.reserve(leaves.size());
  for (int leaf : leaves) {
    std::vector<int> path;
    int id = leaf;
    while (id != -1) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw InvalidParameters("scenario tree: dangling parent id");
      path.push_back(it->second);
      id = tree.outcomes[it->second].parent;
    }
    if (static_cast<int>(path.size()) != tree.K)
      throw InvalidParameters("scenario tree: path length does not match period count");
    std::reverse(path.begin(), path.end());
    paths.push_back(std::move(path));
  }
  return paths;
}

SweepResult run_sweep(const Network& net, const GeneratorFleet& fleet, const Eigen::VectorXd& d1,
                      const SweepConfig& config, Parallelism par) {
  config.validate();
  fleet.validate();
  if (d1.size() != net.node_count()) throw DimensionMismatch("run_sweep: demand size");
  if (fleet.node_count() != net.node_count()) throw DimensionMismatch("run_sweep: fleet size");

  const VariableMap vm = VariableMap::build(fleet);
  const int n = net.node_count();
  SolveOptions opts;  // per-sample solves stay serial

  SweepResult res;
  res.config = config;

  for (std::size_t a = 0; a < config.mu_d.size(); ++a) {
    const double mu_d = config.mu_d[a];
    const ScenarioTree tree =
        sample_random_walk(d1, mu_d, config.sigma_d, config.periods, config.n_samples,
                           mix_seed(config.seed, 0x7265e5ULL + a), config.period_duration_s);
    const auto paths = sample_paths(tree);

    const SystemSolution sys = solve_system(net, fleet, tree, opts);
    const Eigen::VectorXd delta = optimal_delta(sys, tree);

    const EdSolution ed_ref = solve_ed(net, fleet, d1, config.periods, delta, opts);
    const ScheduleEval ref =
        evaluate_schedule(net, fleet, vm, tree, paths, ed_ref.q_b, ed_ref.q_p, opts);
    if (!ref.feasible)
      throw Infeasible("exact-offset schedule has no re-balance in outcome " +
                           std::to_string(ref.first_bad_outcome),
                       0.0, ref.first_bad_outcome);

    res.delta_star.push_back(delta);
    res.delta_star_mean.push_back(delta.mean());
    res.reference_expected_cost.push_back(ref.expected);

    Eigen::MatrixXd totals(static_cast<int>(paths.size()), config.periods);
    for (std::size_t j = 0; j < paths.size(); ++j)
      for (int k = 0; k < config.periods; ++k)
        totals(static_cast<int>(j), k) = tree.outcomes[paths[j][k]].demand.sum();
    res.path_demand_totals.push_back(std::move(totals));

    for (std::size_t bidx = 0; bidx < config.mu_eps.size(); ++bidx) {
      for (std::size_t cidx = 0; cidx < config.sigma_eps.size(); ++cidx) {
        SweepCell cell;
        cell.mu_d = mu_d;
        cell.mu_eps = config.mu_eps[bidx];
        cell.sigma_eps = config.sigma_eps[cidx];
        cell.samples.assign(config.n_samples, SweepSample{});
        std::vector<std::exception_ptr> errors(config.n_samples);

        auto run_sample = [&](int i) {
          try {
            SweepSample smp;
            smp.sample = i;
            const std::uint64_t seed_i = mix_seed(
                mix_seed(mix_seed(mix_seed(config.seed, a), bidx), cidx), static_cast<std::uint64_t>(i));
            const Eigen::VectorXd eps =
                sample_gaussian_vector(n, cell.mu_eps, cell.sigma_eps, seed_i);
            const EdSolution ed = solve_ed(net, fleet, d1, config.periods, delta + eps, opts);
            const ScheduleEval ev =
                evaluate_schedule(net, fleet, vm, tree, paths, ed.q_b, ed.q_p, opts);
            if (!ev.feasible) {
              smp.feasible = false;
            } else {
              smp.matched_increase_pct =
                  100.0 * (ev.path_costs(i) - ref.path_costs(i)) / ref.path_costs(i);
              smp.expected_increase_pct = 100.0 * (ev.expected - ref.expected) / ref.expected;
            }
            cell.samples[i] = smp;
          } catch (...) {
            errors[i] = std::current_exception();
          }
        };

#ifdef _OPENMP
        if (par == Parallelism::OpenMp) {
#pragma omp parallel for schedule(dynamic)
          for (int i = 0; i < config.n_samples; ++i) run_sample(i);
        } else {
          for (int i = 0; i < config.n_samples; ++i) run_sample(i);
        }
#else
        (void)par;
        for (int i = 0; i < config.n_samples; ++i) run_sample(i);
#endif
        for (int i = 0; i < config.n_samples; ++i)
          if (errors[i]) std::rethrow_exception(errors[i]);

        int feasible = 0;
        for (const auto& smp : cell.samples) {
          if (!smp.feasible) {
            ++cell.n_infeasible;
            continue;
          }
          ++feasible;
          cell.mean_matched_pct += smp.matched_increase_pct;
          cell.mean_expected_pct += smp.expected_increase_pct;
        }
        if (feasible > 0) {
          cell.mean_matched_pct /= feasible;
          cell.mean_expected_pct /= feasible;
        }
        res.cells.push_back(std::move(cell));
      }
    }
  }
  return res;
}

namespace {

// Minimal deterministic line-plot svg writer.
struct LinePlot {
  std::string title, xlabel, ylabel;
  struct Series {
    std::vector<double> x, y;
    std::string color;
    double width = 1.5;
    double opacity = 1.0;
    std::string label;  // empty = not in legend
  };
  std::vector<Series> series;

  static double nice_step(double span) {
    if (!(span > 0.0)) return 1.0;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    return (r <= 1.0 ? 1.0 : r <= 2.0 ? 2.0 : r <= 5.0 ? 5.0 : 10.0) * mag;
  }

  std::string render() const {
    const double w = 760, h = 500, ml = 72, mr = 20, mt = 42, mb = 56;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
      for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
      for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
    if (!(xmin <= xmax)) xmin = 0, xmax = 1;
    if (!(ymin <= ymax)) ymin = 0, ymax = 1;
    if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
    if (ymax - ymin < 1e-12) {
      const double pad = std::max(0.5, std::abs(ymax) * 0.1);
      ymin -= pad, ymax += pad;
    } else {
      const double pad = (ymax - ymin) * 0.05;
      ymin -= pad, ymax += pad;
    }
    auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double v) { return h - mb - (v - ymin) / (ymax - ymin) * (h - mt - mb); };
    auto f2 = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", v);
      return std::string(buf);
    };
    auto tick_label = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6g", v + 0.0);  // normalize -0
      return std::string(buf);
    };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"15\">" << title << "</text>\n";

    const double xstep = nice_step(xmax - xmin), ystep = nice_step(ymax - ymin);
    for (double t = std::ceil(xmin / xstep) * xstep; t <= xmax + 1e-12 * xstep; t += xstep) {
      out << "<line x1=\"" << f2(px(t)) << "\" y1=\"" << f2(h - mb) << "\" x2=\"" << f2(px(t))
          << "\" y2=\"" << f2(mt) << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
      out << "<text x=\"" << f2(px(t)) << "\" y=\"" << f2(h - mb + 18)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << tick_label(t) << "</text>\n";
    }
    for (double t = std::ceil(ymin / ystep) * ystep; t <= ymax + 1e-12 * ystep; t += ystep) {
      out << "<line x1=\"" << f2(ml) << "\" y1=\"" << f2(py(t)) << "\" x2=\"" << f2(w - mr)
          << "\" y2=\"" << f2(py(t)) << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
      out << "<text x=\"" << f2(ml - 6) << "\" y=\"" << f2(py(t) + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(t)
          << "</text>\n";
    }
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\""
        << h - mt - mb << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << (ml + (w - mr)) / 2 << "\" y=\"" << h - 14
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xlabel
        << "</text>\n";
    out << "<text x=\"18\" y=\"" << (mt + (h - mb)) / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 "
        << (mt + (h - mb)) / 2 << ")\">" << ylabel << "</text>\n";

    for (const auto& s : series) {
      if (s.x.empty()) continue;
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.width
          << "\" stroke-opacity=\"" << s.opacity << "\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (i) out << ' ';
        out << f2(px(s.x[i])) << ',' << f2(py(s.y[i]));
      }
      out << "\"/>\n";
    }

    double ly = mt + 16;
    for (const auto& s : series) {
      if (s.label.empty()) continue;
      out << "<line x1=\"" << w - mr - 150 << "\" y1=\"" << f2(ly - 4) << "\" x2=\""
          << w - mr - 126 << "\" y2=\"" << f2(ly - 4) << "\" stroke=\"" << s.color
          << "\" stroke-width=\"2.5\"/>\n";
      out << "<text x=\"" << w - mr - 120 << "\" y=\"" << f2(ly)
          << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
      ly += 18;
    }
    out << "</svg>\n";
    return out.str();
  }
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void write_sweep_report(const SweepResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const SweepConfig& cfg = result.config;

  std::string sweep = "mu_d,mu_eps,sigma_eps,sample,feasible,matched_increase_pct,expected_increase_pct\n";
  for (const auto& cell : result.cells) {
    for (const auto& smp : cell.samples) {
      sweep += fmt(cell.mu_d) + "," + fmt(cell.mu_eps) + "," + fmt(cell.sigma_eps) + "," +
               std::to_string(smp.sample) + "," + (smp.feasible ? "1" : "0") + "," +
               fmt(smp.matched_increase_pct) + "," + fmt(smp.expected_increase_pct) + "\n";
    }
  }
  write_text_file(out_dir + "/sweep.csv", sweep);

  std::string summary = "mu_d,mu_eps,sigma_eps,n_infeasible,mean_matched_pct,mean_expected_pct\n";
  for (const auto& cell : result.cells) {
    summary += fmt(cell.mu_d) + "," + fmt(cell.mu_eps) + "," + fmt(cell.sigma_eps) + "," +
               std::to_string(cell.n_infeasible) + "," + fmt(cell.mean_matched_pct) + "," +
               fmt(cell.mean_expected_pct) + "\n";
  }
  write_text_file(out_dir + "/summary.csv", summary);

  std::string delta = "mu_d,delta_mean,delta_min,delta_max,reference_expected_cost\n";
  for (std::size_t a = 0; a < result.delta_star.size(); ++a) {
    delta += fmt(cfg.mu_d[a]) + "," + fmt(result.delta_star_mean[a]) + "," +
             fmt(result.delta_star[a].minCoeff()) + "," + fmt(result.delta_star[a].maxCoeff()) +
             "," + fmt(result.reference_expected_cost[a]) + "\n";
  }
  write_text_file(out_dir + "/delta.csv", delta);

  const std::size_t n_sigma = cfg.sigma_eps.size();
  const std::size_t n_mu_eps = cfg.mu_eps.size();
  for (std::size_t a = 0; a < result.delta_star.size(); ++a) {
    if (a < result.path_demand_totals.size()) {
      LinePlot plot;
      plot.title = "sampled demand paths, mu_d = " + fmt(cfg.mu_d[a]);
      plot.xlabel = "period";
      plot.ylabel = "total demand [MW]";
      const Eigen::MatrixXd& totals = result.path_demand_totals[a];
      for (int j = 0; j < totals.rows(); ++j) {
        LinePlot::Series s;
        s.color = "#1f77b4";
        s.width = 1.0;
        s.opacity = 0.3;
        for (int k = 0; k < totals.cols(); ++k) {
          s.x.push_back(k + 1);
          s.y.push_back(totals(j, k));
        }
        plot.series.push_back(std::move(s));
      }
      write_text_file(out_dir + "/fig_demand_mu_d_" + std::to_string(a) + ".svg", plot.render());
    }

    for (int metric = 0; metric < 2; ++metric) {
      LinePlot plot;
      plot.title = std::string(metric == 0 ? "realized" : "expected") +
                   " cost increase vs offset noise, mu_d = " + fmt(cfg.mu_d[a]);
      plot.xlabel = "sigma_eps";
      plot.ylabel = "cost increase [%]";
      for (std::size_t b = 0; b < n_mu_eps; ++b) {
        LinePlot::Series s;
        s.color = kPalette[b % (sizeof kPalette / sizeof kPalette[0])];
        s.width = 2.0;
        s.label = "mu_eps = " + fmt(cfg.mu_eps[b]);
        for (std::size_t c = 0; c < n_sigma; ++c) {
          const std::size_t idx = (a * n_mu_eps + b) * n_sigma + c;
          if (idx >= result.cells.size()) continue;
          const SweepCell& cell = result.cells[idx];
          s.x.push_back(cell.sigma_eps);
          s.y.push_back(metric == 0 ? cell.mean_matched_pct : cell.mean_expected_pct);
        }
        plot.series.push_back(std::move(s));
      }
      write_text_file(out_dir + "/fig_" + (metric == 0 ? "realized" : "expected") + "_mu_d_" +
                          std::to_string(a) + ".svg",
                      plot.render());
    }
  }
}

}  // namespace edfr
