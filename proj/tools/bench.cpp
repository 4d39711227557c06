// Serial vs OpenMP timing for the batch kernels, with a bit-identity check
// between the two schedules.
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "edfr/casestudy.hpp"
#include "edfr/decomposition.hpp"

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

template <typename Fn>
double time_best(Fn&& fn, int reps = 2) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, ms_since(t0));
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-32s %10.1f %12.1f %8.2fx %12.3e\n", name, serial_ms, parallel_ms,
              parallel_ms > 0 ? serial_ms / parallel_ms : 0.0, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string data_dir = argc > 1 ? argv[1] : "data/rts24";
  const auto cs = edfr::load_rts24(data_dir);
  const auto vm = edfr::VariableMap::build(cs.fleet);

  std::printf("%-32s %10s %12s %8s %12s\n", "kernel", "serial[ms]", "parallel[ms]", "speedup",
              "max|diff|");

  // batch re-balance over one tree's outcomes
  const auto tree = edfr::sample_random_walk(cs.base_demand, 0.0, 0.001, 12, 24, 7);
  std::vector<Eigen::VectorXd> demands;
  for (const auto& o : tree.outcomes) demands.push_back(o.demand);

  edfr::SolveOptions serial, parallel;
  serial.parallel = edfr::Parallelism::Serial;
  parallel.parallel = edfr::Parallelism::OpenMp;

  const auto sys0 = edfr::solve_system(cs.net, cs.fleet, tree, serial);
  const Eigen::VectorXd q_b = sys0.q_b, q_p = sys0.q_p;

  std::vector<edfr::FrSolution> fr_s, fr_p;
  const double t_fr_s = time_best([&] { fr_s = edfr::solve_fr_batch(cs.net, cs.fleet, q_b, q_p, demands, serial); });
  const double t_fr_p = time_best([&] { fr_p = edfr::solve_fr_batch(cs.net, cs.fleet, q_b, q_p, demands, parallel); });
  double d_fr = 0.0;
  for (std::size_t i = 0; i < fr_s.size(); ++i)
    d_fr = std::max(d_fr, (fr_s[i].y - fr_p[i].y).cwiseAbs().maxCoeff());
  report("re-balance batch (265 solves)", t_fr_s, t_fr_p, d_fr);

  // joint solve with per-outcome factorizations
  edfr::SystemSolution sys_s, sys_p;
  const double t_sys_s = time_best([&] { sys_s = edfr::solve_system(cs.net, cs.fleet, tree, serial); });
  const double t_sys_p = time_best([&] { sys_p = edfr::solve_system(cs.net, cs.fleet, tree, parallel); });
  const double d_sys = (sys_s.q_b - sys_p.q_b).cwiseAbs().maxCoeff();
  report("joint schedule solve", t_sys_s, t_sys_p, d_sys);

  // one sweep cell end to end
  edfr::SweepConfig cfg;
  cfg.n_samples = 12;
  cfg.periods = 8;
  cfg.mu_d = {0.0};
  cfg.mu_eps = {10.0};
  cfg.sigma_eps = {20.0};
  edfr::SweepResult sw_s, sw_p;
  const double t_sw_s = time_best([&] { sw_s = edfr::run_sweep(cs.net, cs.fleet, cs.base_demand, cfg, edfr::Parallelism::Serial); }, 1);
  const double t_sw_p = time_best([&] { sw_p = edfr::run_sweep(cs.net, cs.fleet, cs.base_demand, cfg, edfr::Parallelism::OpenMp); }, 1);
  double d_sw = 0.0;
  for (std::size_t i = 0; i < sw_s.cells.size(); ++i)
    d_sw = std::max(d_sw, std::abs(sw_s.cells[i].mean_matched_pct - sw_p.cells[i].mean_matched_pct));
  report("sweep cell (12 samples)", t_sw_s, t_sw_p, d_sw);

  return 0;
}
