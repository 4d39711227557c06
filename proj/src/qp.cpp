#include "edfr/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace edfr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite(double x) { return std::isfinite(x); }

// ---------------------------------------------------------------------------
// Reduced form: fixed variables folded away, vacuous rows dropped, equality
// rows normalized, slack indices assigned.  The interior-point loop only ever
// sees this form.
// ---------------------------------------------------------------------------

struct ROutcome {
  double weight = 1.0;
  // Free second-stage variables; cost WITH the weight folded in.
  Eigen::VectorXd quad, lin, lo, hi;
  std::vector<int> y_orig;
  // Kept rows over free columns.
  Eigen::MatrixXd Z, Y;
  Eigen::VectorXd rlo, rhi;
  std::vector<int> row_orig;
  std::vector<char> is_eq;
  std::vector<int> slack_of_row;  // local slack index or -1
  int nt = 0;
  int y_off = 0, t_off = 0, p_off = 0;

  int ny() const { return static_cast<int>(quad.size()); }
  int m() const { return static_cast<int>(rlo.size()); }
};

struct Reduced {
  Eigen::VectorXd quad0, lin0, lo0, hi0;
  std::vector<int> z_orig;
  std::vector<ROutcome> outs;
  int nz = 0, nw = 0, np = 0;
  double constant = 0.0;
  // Original shapes for reassembly.
  Eigen::VectorXd first_full;               // fixed values prefilled, free slots NaN
  std::vector<Eigen::VectorXd> second_full;
  double row_scale = 1.0;                   // 1 + largest finite row bound
};

double fold_gap(double lo, double hi) { return 1e-11 * (1.0 + std::abs(lo) + std::abs(hi)); }

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Reduced reduce(const StagedProgram& prog) {
  prog.validate();
  Reduced red;
  red.constant = prog.constant;

  const Eigen::Index n0 = prog.first.size();
  red.first_full = Eigen::VectorXd::Constant(n0, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> z_slot(n0, -1);
  std::vector<double> q0, l0, b0lo, b0hi;
  for (Eigen::Index i = 0; i < n0; ++i) {
    const double lo = prog.first.lo(i), hi = prog.first.hi(i);
    if (finite(lo) && finite(hi) && hi - lo <= fold_gap(lo, hi)) {
      const double v = 0.5 * (lo + hi);
      red.first_full(i) = v;
      red.constant += 0.5 * prog.first.quad(i) * v * v + prog.first.lin(i) * v;
    } else {
      z_slot[i] = static_cast<int>(red.z_orig.size());
      red.z_orig.push_back(static_cast<int>(i));
      q0.push_back(prog.first.quad(i));
      l0.push_back(prog.first.lin(i));
      b0lo.push_back(lo);
      b0hi.push_back(hi);
    }
  }
  red.nz = static_cast<int>(red.z_orig.size());
  red.quad0 = Eigen::Map<Eigen::VectorXd>(q0.data(), red.nz);
  red.lin0 = Eigen::Map<Eigen::VectorXd>(l0.data(), red.nz);
  red.lo0 = Eigen::Map<Eigen::VectorXd>(b0lo.data(), red.nz);
  red.hi0 = Eigen::Map<Eigen::VectorXd>(b0hi.data(), red.nz);

  int w_cursor = red.nz;
  int p_cursor = 0;
  double max_bound = 0.0;
  for (size_t s = 0; s < prog.outcomes.size(); ++s) {
    const OutcomeBlock& ob = prog.outcomes[s];
    ROutcome ro;
    ro.weight = ob.weight;
    const Eigen::Index ns = ob.vars.size();
    Eigen::VectorXd y_full = Eigen::VectorXd::Constant(ns, std::numeric_limits<double>::quiet_NaN());
    std::vector<int> y_slot(ns, -1);
    std::vector<double> qy, ly, bylo, byhi;
    for (Eigen::Index i = 0; i < ns; ++i) {
      const double lo = ob.vars.lo(i), hi = ob.vars.hi(i);
      if (finite(lo) && finite(hi) && hi - lo <= fold_gap(lo, hi)) {
        const double v = 0.5 * (lo + hi);
        y_full(i) = v;
        red.constant += ob.weight * (0.5 * ob.vars.quad(i) * v * v + ob.vars.lin(i) * v);
      } else {
        y_slot[i] = static_cast<int>(ro.y_orig.size());
        ro.y_orig.push_back(static_cast<int>(i));
        qy.push_back(ob.weight * ob.vars.quad(i));
        ly.push_back(ob.weight * ob.vars.lin(i));
        bylo.push_back(lo);
        byhi.push_back(hi);
      }
    }
    const int ny = static_cast<int>(ro.y_orig.size());
    ro.quad = Eigen::Map<Eigen::VectorXd>(qy.data(), ny);
    ro.lin = Eigen::Map<Eigen::VectorXd>(ly.data(), ny);
    ro.lo = Eigen::Map<Eigen::VectorXd>(bylo.data(), ny);
    ro.hi = Eigen::Map<Eigen::VectorXd>(byhi.data(), ny);
    red.second_full.push_back(std::move(y_full));

    // Rows: shift fixed contributions into the bounds, drop vacuous rows.
    const Eigen::Index m_all = ob.row_count();
    std::vector<int> keep;
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(m_all);
    for (Eigen::Index i = 0; i < n0; ++i)
      if (z_slot[i] < 0 && m_all > 0) shift += ob.rows_first.col(i) * red.first_full(i);
    for (Eigen::Index i = 0; i < ns; ++i)
      if (y_slot[i] < 0 && m_all > 0) shift += ob.rows_second.col(i) * red.second_full[s](i);
    for (Eigen::Index r = 0; r < m_all; ++r) {
      const double rl = ob.row_lo(r), rh = ob.row_hi(r);
      if (!finite(rl) && !finite(rh)) continue;  // unbounded both sides: vacuous
      double coef = 0.0;
      for (Eigen::Index i = 0; i < n0; ++i)
        if (z_slot[i] >= 0) coef += std::abs(ob.rows_first(r, i));
      for (Eigen::Index i = 0; i < ns; ++i)
        if (y_slot[i] >= 0) coef += std::abs(ob.rows_second(r, i));
      if (coef == 0.0) {
        // Constant row: must already hold.
        const double lo_v = finite(rl) ? rl - shift(r) : -kInf;
        const double hi_v = finite(rh) ? rh - shift(r) : kInf;
        const double viol = std::max(lo_v, -hi_v);
        const double sc = 1.0 + (finite(rl) ? std::abs(rl) : 0.0) + (finite(rh) ? std::abs(rh) : 0.0);
        if (viol > 1e-7 * sc)
          throw Infeasible("constraint row " + std::to_string(r) + " of outcome " +
                               std::to_string(s) + " is violated by construction",
                           viol, static_cast<int>(s));
        continue;
      }
      keep.push_back(static_cast<int>(r));
    }

    const int m = static_cast<int>(keep.size());
    ro.Z.resize(m, red.nz);
    ro.Y.resize(m, ny);
    ro.rlo.resize(m);
    ro.rhi.resize(m);
    ro.slack_of_row.assign(m, -1);
    ro.is_eq.assign(m, 0);
    for (int k = 0; k < m; ++k) {
      const int r = keep[k];
      ro.row_orig.push_back(r);
      for (int j = 0; j < red.nz; ++j) ro.Z(k, j) = ob.rows_first(r, red.z_orig[j]);
      for (int j = 0; j < ny; ++j) ro.Y(k, j) = ob.rows_second(r, ro.y_orig[j]);
      double rl = finite(ob.row_lo(r)) ? ob.row_lo(r) - shift(r) : -kInf;
      double rh = finite(ob.row_hi(r)) ? ob.row_hi(r) - shift(r) : kInf;
      if (finite(rl) && finite(rh) && rh - rl <= fold_gap(rl, rh)) {
        const double b = 0.5 * (rl + rh);
        rl = rh = b;
        ro.is_eq[k] = 1;
      } else {
        ro.slack_of_row[k] = ro.nt++;
      }
      ro.rlo(k) = rl;
      ro.rhi(k) = rh;
      if (finite(rl)) max_bound = std::max(max_bound, std::abs(rl));
      if (finite(rh)) max_bound = std::max(max_bound, std::abs(rh));
    }
    ro.y_off = w_cursor;
    w_cursor += ny;
    ro.t_off = w_cursor;
    w_cursor += ro.nt;
    ro.p_off = p_cursor;
    p_cursor += m;
    red.outs.push_back(std::move(ro));
  }
  red.nw = w_cursor;
  red.np = p_cursor;
  red.row_scale = 1.0 + max_bound;
  return red;
}

// Runs a function over outcome indices, optionally with OpenMP.  Results must
// be written to per-outcome slots; every reduction happens serially afterwards
// so parallel and serial execution agree bit for bit.
template <typename F>
void for_outcomes(int count, Parallelism par, F&& fn) {
  if (par == Parallelism::OpenMp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (int s = 0; s < count; ++s) fn(s);
    return;
#endif
  }
  for (int s = 0; s < count; ++s) fn(s);
}

// ---------------------------------------------------------------------------
// Interior-point solver on the reduced form.
// ---------------------------------------------------------------------------

class Ipm {
 public:
  Ipm(const Reduced& red, const SolveOptions& opts) : red_(red), opts_(opts) { init(); }

  bool run();  // true if converged to opts_.tol

  // State (public for extraction by the caller).
  Eigen::VectorXd w, zlo, zhi, p;
  Eigen::VectorXd wlo, whi;  // bounds aligned with w
  Eigen::VectorXd quad, lin;
  double rel_p = kInf, rel_d = kInf, rel_g = kInf;
  int iters = 0;

 private:
  void init();
  void residuals(Eigen::VectorXd& rd, Eigen::VectorXd& rp) const;
  void score();  // refresh rel_p / rel_d / rel_g from the current iterate
  // Bound gaps floored relative to the bound so the barrier divisions stay
  // finite when rounding parks an iterate exactly on its bound.
  double gap_lo(int i) const { return std::max(w(i) - wlo(i), 1e-14 * (1.0 + std::abs(wlo(i)))); }
  double gap_hi(int i) const { return std::max(whi(i) - w(i), 1e-14 * (1.0 + std::abs(whi(i)))); }
  double comp_mu(const Eigen::VectorXd& wv, const Eigen::VectorXd& zl,
                 const Eigen::VectorXd& zh) const;
  void factor();
  void kkt_solve(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& dw,
                 Eigen::VectorXd& dp, bool refine) const;
  void kkt_solve_raw(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& dw,
                     Eigen::VectorXd& dp) const;
  void apply_a(const Eigen::VectorXd& x, Eigen::VectorXd& out) const;       // out = A x
  void apply_at(const Eigen::VectorXd& y, Eigen::VectorXd& out) const;      // out = A^T y

  const Reduced& red_;
  SolveOptions opts_;
  int comp_count_ = 0;
  double mu_cur_ = 0.0;
  Eigen::VectorXd rd_, rp_;  // residuals at the last scored iterate
  Eigen::VectorXd dvec_, dtrue_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> tchol_;
  std::vector<Eigen::MatrixXd> wmat_;
  Eigen::LLT<Eigen::MatrixXd> gchol_;
  double delta_dual_ = 0.0;
};

void Ipm::init() {
  const int nw = red_.nw;
  wlo.resize(nw);
  whi.resize(nw);
  quad = Eigen::VectorXd::Zero(nw);
  lin = Eigen::VectorXd::Zero(nw);
  wlo.head(red_.nz) = red_.lo0;
  whi.head(red_.nz) = red_.hi0;
  quad.head(red_.nz) = red_.quad0;
  lin.head(red_.nz) = red_.lin0;
  for (const ROutcome& ro : red_.outs) {
    const int ny = ro.ny();
    wlo.segment(ro.y_off, ny) = ro.lo;
    whi.segment(ro.y_off, ny) = ro.hi;
    quad.segment(ro.y_off, ny) = ro.quad;
    lin.segment(ro.y_off, ny) = ro.lin;
    for (int r = 0; r < ro.m(); ++r) {
      const int t = ro.slack_of_row[r];
      if (t < 0) continue;
      wlo(ro.t_off + t) = ro.rlo(r);
      whi(ro.t_off + t) = ro.rhi(r);
    }
  }

  w.resize(nw);
  zlo = Eigen::VectorXd::Zero(nw);
  zhi = Eigen::VectorXd::Zero(nw);
  comp_count_ = 0;
  for (int i = 0; i < nw; ++i) {
    const bool hlo = finite(wlo(i)), hhi = finite(whi(i));
    if (hlo && hhi)
      w(i) = 0.5 * (wlo(i) + whi(i));
    else if (hlo)
      w(i) = wlo(i) + std::max(1.0, 0.1 * (1.0 + std::abs(wlo(i))));
    else if (hhi)
      w(i) = whi(i) - std::max(1.0, 0.1 * (1.0 + std::abs(whi(i))));
    else
      w(i) = 0.0;
    if (hlo) {
      zlo(i) = 1.0;
      ++comp_count_;
    }
    if (hhi) {
      zhi(i) = 1.0;
      ++comp_count_;
    }
  }
  p = Eigen::VectorXd::Zero(red_.np);
}

void Ipm::apply_a(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
  out.resize(red_.np);
  for (const ROutcome& ro : red_.outs) {
    const int m = ro.m();
    if (m == 0) continue;
    Eigen::VectorXd v = ro.Z * x.head(red_.nz);
    if (ro.ny() > 0) v += ro.Y * x.segment(ro.y_off, ro.ny());
    for (int r = 0; r < m; ++r)
      if (ro.slack_of_row[r] >= 0) v(r) -= x(ro.t_off + ro.slack_of_row[r]);
    out.segment(ro.p_off, m) = v;
  }
}

void Ipm::apply_at(const Eigen::VectorXd& y, Eigen::VectorXd& out) const {
  out = Eigen::VectorXd::Zero(red_.nw);
  for (const ROutcome& ro : red_.outs) {
    const int m = ro.m();
    if (m == 0) continue;
    const auto ps = y.segment(ro.p_off, m);
    out.head(red_.nz) += ro.Z.transpose() * ps;
    if (ro.ny() > 0) out.segment(ro.y_off, ro.ny()) += ro.Y.transpose() * ps;
    for (int r = 0; r < m; ++r)
      if (ro.slack_of_row[r] >= 0) out(ro.t_off + ro.slack_of_row[r]) -= ps(r);
  }
}

void Ipm::residuals(Eigen::VectorXd& rd, Eigen::VectorXd& rp) const {
  Eigen::VectorXd atp;
  apply_at(p, atp);
  rd = quad.cwiseProduct(w) + lin - atp - zlo + zhi;
  apply_a(w, rp);
  for (const ROutcome& ro : red_.outs)
    for (int r = 0; r < ro.m(); ++r)
      if (ro.slack_of_row[r] < 0) rp(ro.p_off + r) -= ro.rlo(r);
}

double Ipm::comp_mu(const Eigen::VectorXd& wv, const Eigen::VectorXd& zl,
                    const Eigen::VectorXd& zh) const {
  if (comp_count_ == 0) return 0.0;
  double total = 0.0;
  for (int i = 0; i < red_.nw; ++i) {
    if (finite(wlo(i))) total += (wv(i) - wlo(i)) * zl(i);
    if (finite(whi(i))) total += (whi(i) - wv(i)) * zh(i);
  }
  return total / comp_count_;
}

void Ipm::factor() {
  const int nw = red_.nw;
  dtrue_.resize(nw);
  for (int i = 0; i < nw; ++i) {
    double th = quad(i);
    if (finite(wlo(i))) th += zlo(i) / gap_lo(i);
    if (finite(whi(i))) th += zhi(i) / gap_hi(i);
    dtrue_(i) = th;
  }
  const double floor = 1e-12 * (1.0 + quad.maxCoeff());
  dvec_ = dtrue_.cwiseMax(floor);
  delta_dual_ = 1e-12 * red_.row_scale;

  const int S = static_cast<int>(red_.outs.size());
  tchol_.assign(S, {});
  wmat_.assign(S, {});
  std::vector<Eigen::MatrixXd> gparts(S);
  for_outcomes(S, opts_.parallel, [&](int s) {
    const ROutcome& ro = red_.outs[s];
    const int m = ro.m();
    if (m == 0) return;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    if (ro.ny() > 0) {
      const auto dy = dvec_.segment(ro.y_off, ro.ny());
      T.noalias() = ro.Y * dy.cwiseInverse().asDiagonal() * ro.Y.transpose();
    }
    for (int r = 0; r < m; ++r) {
      const int t = ro.slack_of_row[r];
      if (t >= 0) T(r, r) += 1.0 / dvec_(ro.t_off + t);
      T(r, r) += delta_dual_;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(T);
    for (int bump = 0; llt.info() != Eigen::Success && bump < 4; ++bump) {
      T.diagonal().array() += delta_dual_ * std::pow(100.0, bump + 1);
      llt.compute(T);
    }
    tchol_[s] = std::move(llt);
    if (red_.nz > 0) {
      wmat_[s] = tchol_[s].solve(ro.Z);
      gparts[s].noalias() = ro.Z.transpose() * wmat_[s];
    }
  });
  if (red_.nz > 0) {
    Eigen::MatrixXd G = dvec_.head(red_.nz).asDiagonal();
    for (int s = 0; s < S; ++s)
      if (gparts[s].size() > 0) G += gparts[s];
    gchol_.compute(G);
    if (gchol_.info() != Eigen::Success) {
      G.diagonal().array() += 1e-10 * (1.0 + G.diagonal().maxCoeff());
      gchol_.compute(G);
    }
  }
}

void Ipm::kkt_solve_raw(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& dw,
                        Eigen::VectorXd& dp) const {
  // Solve  D dw - A^T dp = a,  A dw = b  via  M dp = b - A D^-1 a.
  const Eigen::VectorXd u = a.cwiseQuotient(dvec_);
  Eigen::VectorXd au;
  apply_a(u, au);
  const Eigen::VectorXd rhs = b - au;

  const int S = static_cast<int>(red_.outs.size());
  dp.resize(red_.np);
  std::vector<Eigen::VectorXd> v(S);
  for_outcomes(S, opts_.parallel, [&](int s) {
    const ROutcome& ro = red_.outs[s];
    if (ro.m() == 0) return;
    v[s] = tchol_[s].solve(rhs.segment(ro.p_off, ro.m()));
  });
  if (red_.nz > 0) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(red_.nz);
    for (int s = 0; s < S; ++s) {
      const ROutcome& ro = red_.outs[s];
      if (ro.m() > 0) g += ro.Z.transpose() * v[s];
    }
    const Eigen::VectorXd h = gchol_.solve(g);
    for_outcomes(S, opts_.parallel, [&](int s) {
      const ROutcome& ro = red_.outs[s];
      if (ro.m() == 0) return;
      dp.segment(ro.p_off, ro.m()) = v[s] - wmat_[s] * h;
    });
  } else {
    for (int s = 0; s < S; ++s) {
      const ROutcome& ro = red_.outs[s];
      if (ro.m() > 0) dp.segment(ro.p_off, ro.m()) = v[s];
    }
  }
  Eigen::VectorXd atdp;
  apply_at(dp, atdp);
  dw = (a + atdp).cwiseQuotient(dvec_);
}

void Ipm::kkt_solve(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& dw,
                    Eigen::VectorXd& dp, bool refine) const {
  kkt_solve_raw(a, b, dw, dp);
  if (!refine) return;
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::VectorXd atdp, adw;
    apply_at(dp, atdp);
    apply_a(dw, adw);
    const Eigen::VectorXd res_d = a - (dtrue_.cwiseProduct(dw) - atdp);
    const Eigen::VectorXd res_p = b - adw;
    const double scale = 1.0 + inf_norm(a) + inf_norm(b);
    if (inf_norm(res_d) + inf_norm(res_p) < 1e-13 * scale) break;
    Eigen::VectorXd cw, cp;
    kkt_solve_raw(res_d, res_p, cw, cp);
    dw += cw;
    dp += cp;
  }
}

void Ipm::score() {
  residuals(rd_, rp_);
  mu_cur_ = comp_mu(w, zlo, zhi);
  const double obj = 0.5 * w.dot(quad.cwiseProduct(w)) + lin.dot(w);
  const double scale_c =
      1.0 + lin.cwiseAbs().maxCoeff() + quad.cwiseProduct(w).cwiseAbs().maxCoeff();
  rel_p = red_.np > 0 ? rp_.cwiseAbs().maxCoeff() / red_.row_scale : 0.0;
  rel_d = rd_.cwiseAbs().maxCoeff() / scale_c;
  rel_g = mu_cur_ * comp_count_ / (1.0 + std::abs(obj));
}

bool Ipm::run() {
  const int nw = red_.nw;
  // Degenerate endgames can cycle without ever meeting the tolerance; keep the
  // best iterate seen and stop once progress on it dries up.
  double best_merit = kInf;
  Eigen::VectorXd best_w, best_zlo, best_zhi, best_p;
  int stalled = 0;
  for (iters = 0; iters < opts_.max_iter; ++iters) {
    score();
    if (rel_p <= opts_.tol && rel_d <= opts_.tol && rel_g <= opts_.tol) return true;
    const double merit = std::max({rel_p, rel_d, rel_g});
    if (merit < 0.999 * best_merit) {
      best_merit = merit;
      best_w = w;
      best_zlo = zlo;
      best_zhi = zhi;
      best_p = p;
      stalled = 0;
    } else if (++stalled >= 12) {
      break;
    }
    const double mu = mu_cur_;

    factor();

    // Affine predictor.
    Eigen::VectorXd rhs_d = -rd_;
    for (int i = 0; i < nw; ++i) {
      if (finite(wlo(i))) rhs_d(i) -= zlo(i);
      if (finite(whi(i))) rhs_d(i) += zhi(i);
    }
    Eigen::VectorXd dw_a, dp_a;
    kkt_solve(rhs_d, -rp_, dw_a, dp_a, true);
    Eigen::VectorXd dzlo_a = Eigen::VectorXd::Zero(nw), dzhi_a = Eigen::VectorXd::Zero(nw);
    for (int i = 0; i < nw; ++i) {
      if (finite(wlo(i))) {
        const double g = gap_lo(i);
        dzlo_a(i) = -zlo(i) - zlo(i) / g * dw_a(i);
      }
      if (finite(whi(i))) {
        const double g = gap_hi(i);
        dzhi_a(i) = -zhi(i) + zhi(i) / g * dw_a(i);
      }
    }
    auto max_step = [&](const Eigen::VectorXd& dw, const Eigen::VectorXd& dzl,
                        const Eigen::VectorXd& dzh) {
      double ap = 1e30, ad = 1e30;
      for (int i = 0; i < nw; ++i) {
        if (finite(wlo(i))) {
          if (dw(i) < 0) ap = std::min(ap, (wlo(i) - w(i)) / dw(i));
          if (dzl(i) < 0) ad = std::min(ad, -zlo(i) / dzl(i));
        }
        if (finite(whi(i))) {
          if (dw(i) > 0) ap = std::min(ap, (whi(i) - w(i)) / dw(i));
          if (dzh(i) < 0) ad = std::min(ad, -zhi(i) / dzh(i));
        }
      }
      return std::pair<double, double>(ap, ad);
    };

    double sigma = 0.0;
    if (comp_count_ > 0 && mu > 0) {
      auto [ap, ad] = max_step(dw_a, dzlo_a, dzhi_a);
      const double apa = std::min(1.0, ap), ada = std::min(1.0, ad);
      const double mu_aff = comp_mu(w + apa * dw_a, zlo + ada * dzlo_a, zhi + ada * dzhi_a);
      sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
      sigma = std::min(std::max(sigma, 1e-8), 1.0 - 1e-8);
    }

    // Corrector with centering.
    Eigen::VectorXd dw, dp;
    Eigen::VectorXd dzlo = dzlo_a, dzhi = dzhi_a;
    if (comp_count_ > 0 && mu > 0) {
      Eigen::VectorXd rhs_c = -rd_;
      for (int i = 0; i < nw; ++i) {
        if (finite(wlo(i))) {
          const double g = gap_lo(i);
          const double target = sigma * mu - dw_a(i) * dzlo_a(i);
          rhs_c(i) += target / g - zlo(i);
        }
        if (finite(whi(i))) {
          const double g = gap_hi(i);
          const double target = sigma * mu + dw_a(i) * dzhi_a(i);
          rhs_c(i) -= target / g - zhi(i);
        }
      }
      kkt_solve(rhs_c, -rp_, dw, dp, true);
      for (int i = 0; i < nw; ++i) {
        if (finite(wlo(i))) {
          const double g = gap_lo(i);
          const double target = sigma * mu - dw_a(i) * dzlo_a(i);
          dzlo(i) = (target - (w(i) - wlo(i)) * zlo(i) - zlo(i) * dw(i)) / g;
        }
        if (finite(whi(i))) {
          const double g = gap_hi(i);
          const double target = sigma * mu + dw_a(i) * dzhi_a(i);
          dzhi(i) = (target - (whi(i) - w(i)) * zhi(i) + zhi(i) * dw(i)) / g;
        }
      }
    } else {
      dw = dw_a;
      dp = dp_a;
    }

    auto [ap, ad] = max_step(dw, dzlo, dzhi);
    const double eta = rel_g < 1e-6 ? 0.9999 : 0.995;
    const double alpha_p = std::min(1.0, eta * ap);
    const double alpha_d = std::min(1.0, eta * ad);
    if (std::getenv("EDFR_IPM_TRACE"))
      fprintf(stderr, "it %2d mu %9.3e rp %9.3e rd %9.3e sig %6.1e ap %9.3e ad %9.3e\n", iters, mu,
              rel_p, rel_d, sigma, alpha_p, alpha_d);
    w += alpha_p * dw;
    zlo += alpha_d * dzlo;
    zhi += alpha_d * dzhi;
    p += alpha_d * dp;
    if (!w.allFinite() || !p.allFinite())
      throw NumericalBlowup("interior-point iterates diverged");
  }
  score();
  if (best_w.size() > 0 && best_merit < std::max({rel_p, rel_d, rel_g})) {
    w = best_w;
    zlo = best_zlo;
    zhi = best_zhi;
    p = best_p;
    score();
  }
  return rel_p <= opts_.tol && rel_d <= opts_.tol && rel_g <= opts_.tol;
}

// ---------------------------------------------------------------------------
// Active-set polish: classify, solve the equality-constrained KKT system with
// a minimum-norm least-squares factorization, verify, and adopt if clean.
// ---------------------------------------------------------------------------

struct PolishResult {
  bool ok = false;
  Eigen::VectorXd x;   // over (z, y_1, .., y_S), reduced indexing
  Eigen::VectorXd p;   // per kept row
  Eigen::VectorXd zlo, zhi;  // bound duals over x entries
};

PolishResult try_polish(const Reduced& red, const Ipm& ipm, bool strict) {
  PolishResult out;
  const int nz = red.nz;
  int nx = nz;
  std::vector<int> x_of_w(red.nw, -1);
  for (int j = 0; j < nz; ++j) x_of_w[j] = j;
  for (const ROutcome& ro : red.outs)
    for (int j = 0; j < ro.ny(); ++j) x_of_w[ro.y_off + j] = nx++;

  Eigen::VectorXd quad(nx), lin(nx), lo(nx), hi(nx), wval(nx);
  for (int i = 0; i < red.nw; ++i) {
    const int xi = x_of_w[i];
    if (xi < 0) continue;
    quad(xi) = ipm.quad(i);
    lin(xi) = ipm.lin(i);
    lo(xi) = ipm.wlo(i);
    hi(xi) = ipm.whi(i);
    wval(xi) = ipm.w(i);
  }

  // Classification: a bound/row side is active when its dual dominates the
  // primal gap (or, in strict mode, when the gap is tiny outright).
  auto active = [&](double gap, double dual, double scale) {
    if (strict) return gap <= 1e-7 * scale;
    return dual > gap || gap <= 1e-9 * scale;
  };

  struct ConRow {
    int outcome, row;   // -1,-1 for variable bounds
    int var;            // x index for bounds, else -1
    bool at_hi;
    double rhs;
  };
  std::vector<ConRow> cons;
  for (int i = 0; i < red.nw; ++i) {
    const int xi = x_of_w[i];
    if (xi < 0) continue;
    const double sc = 1.0 + std::abs(ipm.w(i));
    if (finite(ipm.wlo(i)) && active(ipm.w(i) - ipm.wlo(i), ipm.zlo(i), sc))
      cons.push_back({-1, -1, xi, false, ipm.wlo(i)});
    else if (finite(ipm.whi(i)) && active(ipm.whi(i) - ipm.w(i), ipm.zhi(i), sc))
      cons.push_back({-1, -1, xi, true, ipm.whi(i)});
  }
  for (size_t s = 0; s < red.outs.size(); ++s) {
    const ROutcome& ro = red.outs[s];
    for (int r = 0; r < ro.m(); ++r) {
      if (ro.is_eq[r]) {
        cons.push_back({static_cast<int>(s), r, -1, false, ro.rlo(r)});
        continue;
      }
      const int t = ro.slack_of_row[r];
      const double tv = ipm.w(ro.t_off + t);
      const double sc = 1.0 + std::abs(tv);
      if (finite(ro.rlo(r)) && active(tv - ro.rlo(r), ipm.zlo(ro.t_off + t), sc))
        cons.push_back({static_cast<int>(s), r, -1, false, ro.rlo(r)});
      else if (finite(ro.rhi(r)) && active(ro.rhi(r) - tv, ipm.zhi(ro.t_off + t), sc))
        cons.push_back({static_cast<int>(s), r, -1, true, ro.rhi(r)});
    }
  }

  const int mact = static_cast<int>(cons.size());
  if (nx + mact > 900) return out;  // dense polish not worth it at this size

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nx + mact, nx + mact);
  Eigen::VectorXd rhs(nx + mact);
  for (int i = 0; i < nx; ++i) {
    K(i, i) = quad(i);
    rhs(i) = -lin(i);
  }
  for (int k = 0; k < mact; ++k) {
    const ConRow& c = cons[k];
    if (c.var >= 0) {
      K(c.var, nx + k) = -1.0;
      K(nx + k, c.var) = 1.0;
    } else {
      const ROutcome& ro = red.outs[c.outcome];
      for (int j = 0; j < nz; ++j) {
        K(j, nx + k) -= ro.Z(c.row, j);
        K(nx + k, j) += ro.Z(c.row, j);
      }
      for (int j = 0; j < ro.ny(); ++j) {
        const int xj = x_of_w[ro.y_off + j];
        K(xj, nx + k) -= ro.Y(c.row, j);
        K(nx + k, xj) += ro.Y(c.row, j);
      }
    }
    rhs(nx + k) = c.rhs;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
  const Eigen::VectorXd sol = cod.solve(rhs);
  if (!sol.allFinite()) return out;
  const double solve_res = (K * sol - rhs).cwiseAbs().maxCoeff();
  if (solve_res > 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff())) return out;

  out.x = sol.head(nx);
  const Eigen::VectorXd q = sol.tail(mact);
  const double dual_scale = 1.0 + (mact ? q.cwiseAbs().maxCoeff() : 0.0);
  const double prim_scale = 1.0 + out.x.cwiseAbs().maxCoeff();

  out.p = Eigen::VectorXd::Zero(red.np);
  out.zlo = Eigen::VectorXd::Zero(nx);
  out.zhi = Eigen::VectorXd::Zero(nx);
  for (int k = 0; k < mact; ++k) {
    const ConRow& c = cons[k];
    if (c.var >= 0) {
      // Bound multiplier: sign must match the active side.
      if (!c.at_hi) {
        if (q(k) < -1e-7 * dual_scale) return out;
        out.zlo(c.var) = std::max(q(k), 0.0);
      } else {
        if (q(k) > 1e-7 * dual_scale) return out;
        out.zhi(c.var) = std::max(-q(k), 0.0);
      }
    } else {
      const ROutcome& ro = red.outs[c.outcome];
      if (!ro.is_eq[c.row]) {
        if (!c.at_hi && q(k) < -1e-7 * dual_scale) return out;
        if (c.at_hi && q(k) > 1e-7 * dual_scale) return out;
      }
      out.p(ro.p_off + c.row) += q(k);
    }
  }
  // Inactive constraints must hold at the polished point.
  for (int i = 0; i < nx; ++i) {
    if (finite(lo(i)) && out.x(i) < lo(i) - 1e-7 * prim_scale) return out;
    if (finite(hi(i)) && out.x(i) > hi(i) + 1e-7 * prim_scale) return out;
    if (finite(lo(i)) && out.x(i) < lo(i)) out.x(i) = lo(i);
    if (finite(hi(i)) && out.x(i) > hi(i)) out.x(i) = hi(i);
  }
  for (size_t s = 0; s < red.outs.size(); ++s) {
    const ROutcome& ro = red.outs[s];
    if (ro.m() == 0) continue;
    Eigen::VectorXd act = ro.Z * out.x.head(nz);
    for (int j = 0; j < ro.ny(); ++j)
      act += ro.Y.col(j) * out.x(x_of_w[ro.y_off + j]);
    for (int r = 0; r < ro.m(); ++r) {
      const double sc = 1.0 + (finite(ro.rlo(r)) ? std::abs(ro.rlo(r)) : 0.0) +
                        (finite(ro.rhi(r)) ? std::abs(ro.rhi(r)) : 0.0);
      if (finite(ro.rlo(r)) && act(r) < ro.rlo(r) - 1e-7 * sc) return out;
      if (finite(ro.rhi(r)) && act(r) > ro.rhi(r) + 1e-7 * sc) return out;
    }
  }
  out.ok = true;
  return out;
}

// Per-outcome constraint-qualification check on the active set; emits a
// warning when active constraint gradients are linearly dependent (duals are
// then non-unique).
void degeneracy_warnings(const Reduced& red, const Ipm& ipm, std::vector<std::string>& warnings) {
  for (size_t s = 0; s < red.outs.size(); ++s) {
    const ROutcome& ro = red.outs[s];
    const int cols = red.nz + ro.ny();
    if (ro.m() == 0 || cols == 0 || cols > 400) continue;
    std::vector<int> act_rows;
    for (int r = 0; r < ro.m(); ++r) {
      if (ro.is_eq[r]) {
        act_rows.push_back(r);
        continue;
      }
      const int t = ro.slack_of_row[r];
      const double tv = ipm.w(ro.t_off + t);
      const double sc = 1.0 + std::abs(tv);
      if ((finite(ro.rlo(r)) && tv - ro.rlo(r) <= 1e-6 * sc) ||
          (finite(ro.rhi(r)) && ro.rhi(r) - tv <= 1e-6 * sc))
        act_rows.push_back(r);
    }
    int act_bounds = 0;
    auto bound_active = [&](int wi) {
      const double sc = 1.0 + std::abs(ipm.w(wi));
      return (finite(ipm.wlo(wi)) && ipm.w(wi) - ipm.wlo(wi) <= 1e-6 * sc) ||
             (finite(ipm.whi(wi)) && ipm.whi(wi) - ipm.w(wi) <= 1e-6 * sc);
    };
    std::vector<int> act_vars;
    for (int j = 0; j < red.nz; ++j)
      if (bound_active(j)) act_vars.push_back(j), ++act_bounds;
    for (int j = 0; j < ro.ny(); ++j)
      if (bound_active(ro.y_off + j)) act_vars.push_back(red.nz + j), ++act_bounds;

    const int nrows = static_cast<int>(act_rows.size()) + act_bounds;
    if (nrows == 0) continue;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nrows, cols);
    int rr = 0;
    for (int r : act_rows) {
      J.block(rr, 0, 1, red.nz) = ro.Z.row(r);
      J.block(rr, red.nz, 1, ro.ny()) = ro.Y.row(r);
      ++rr;
    }
    for (int v : act_vars) J(rr++, v) = 1.0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    qr.setThreshold(1e-8);
    if (qr.rank() < nrows)
      warnings.push_back("degenerate-active-set in outcome " + std::to_string(s) +
                         " (duals may be non-unique)");
  }
}

ConvexSolution extract(const StagedProgram& prog, const Reduced& red, const Ipm& ipm,
                       const PolishResult* pol) {
  ConvexSolution sol;
  const Eigen::Index n0 = prog.first.size();

  // Primal values.
  sol.first = red.first_full;
  for (int j = 0; j < red.nz; ++j)
    sol.first(red.z_orig[j]) = pol ? pol->x(j) : ipm.w(j);
  int xcursor = red.nz;
  for (size_t s = 0; s < prog.outcomes.size(); ++s) {
    const ROutcome& ro = red.outs[s];
    Eigen::VectorXd y = red.second_full[s];
    for (int j = 0; j < ro.ny(); ++j)
      y(ro.y_orig[j]) = pol ? pol->x(xcursor + j) : ipm.w(ro.y_off + j);
    xcursor += ro.ny();
    sol.second.push_back(std::move(y));
  }

  // Duals: rows, then bound duals; paper convention (divide by weight).
  sol.xi_lo = Eigen::VectorXd::Zero(n0);
  sol.xi_hi = Eigen::VectorXd::Zero(n0);
  xcursor = red.nz;
  for (size_t s = 0; s < prog.outcomes.size(); ++s) {
    const ROutcome& ro = red.outs[s];
    const OutcomeBlock& ob = prog.outcomes[s];
    OutcomeDuals d;
    d.rows = Eigen::VectorXd::Zero(ob.row_count());
    d.mu_lo = Eigen::VectorXd::Zero(ob.row_count());
    d.mu_hi = Eigen::VectorXd::Zero(ob.row_count());
    d.nu_lo = Eigen::VectorXd::Zero(ob.vars.size());
    d.nu_hi = Eigen::VectorXd::Zero(ob.vars.size());
    for (int r = 0; r < ro.m(); ++r) {
      const double praw = pol ? pol->p(ro.p_off + r) : ipm.p(ro.p_off + r);
      const int orig = ro.row_orig[r];
      d.rows(orig) = praw / ro.weight;
      if (!ro.is_eq[r]) {
        if (pol) {
          d.mu_lo(orig) = std::max(praw, 0.0) / ro.weight;
          d.mu_hi(orig) = std::max(-praw, 0.0) / ro.weight;
        } else {
          const int t = ro.slack_of_row[r];
          d.mu_lo(orig) = finite(ro.rlo(r)) ? ipm.zlo(ro.t_off + t) / ro.weight : 0.0;
          d.mu_hi(orig) = finite(ro.rhi(r)) ? ipm.zhi(ro.t_off + t) / ro.weight : 0.0;
        }
      }
    }
    for (int j = 0; j < ro.ny(); ++j) {
      const int orig = ro.y_orig[j];
      const double l = pol ? pol->zlo(xcursor + j) : ipm.zlo(ro.y_off + j);
      const double h = pol ? pol->zhi(xcursor + j) : ipm.zhi(ro.y_off + j);
      d.nu_lo(orig) = l / ro.weight;
      d.nu_hi(orig) = h / ro.weight;
    }
    xcursor += ro.ny();
    sol.duals.push_back(std::move(d));
  }
  for (int j = 0; j < red.nz; ++j) {
    sol.xi_lo(red.z_orig[j]) = pol ? pol->zlo(j) : ipm.zlo(j);
    sol.xi_hi(red.z_orig[j]) = pol ? pol->zhi(j) : ipm.zhi(j);
  }

  // Duals for folded (fixed) variables from stationarity.
  for (size_t s = 0; s < prog.outcomes.size(); ++s) {
    const OutcomeBlock& ob = prog.outcomes[s];
    const ROutcome& ro = red.outs[s];
    if (ob.vars.size() == 0) continue;
    Eigen::VectorXd praw = Eigen::VectorXd::Zero(ob.row_count());
    for (int r = 0; r < ro.m(); ++r)
      praw(ro.row_orig[r]) = sol.duals[s].rows(ro.row_orig[r]) * ro.weight;
    for (Eigen::Index i = 0; i < ob.vars.size(); ++i) {
      if (!std::isnan(red.second_full[s](i))) {
        const double v = red.second_full[s](i);
        double val = ro.weight * (ob.vars.quad(i) * v + ob.vars.lin(i));
        val -= ob.rows_second.col(i).dot(praw);
        sol.duals[s].nu_lo(i) = std::max(val, 0.0) / ro.weight;
        sol.duals[s].nu_hi(i) = std::max(-val, 0.0) / ro.weight;
      }
    }
  }
  for (Eigen::Index i = 0; i < n0; ++i) {
    if (!std::isnan(red.first_full(i))) {
      const double v = red.first_full(i);
      double val = prog.first.quad(i) * v + prog.first.lin(i);
      for (size_t s = 0; s < prog.outcomes.size(); ++s) {
        const ROutcome& ro = red.outs[s];
        for (int r = 0; r < ro.m(); ++r)
          val -= prog.outcomes[s].rows_first(ro.row_orig[r], i) * sol.duals[s].rows(ro.row_orig[r]) *
                 ro.weight;
      }
      sol.xi_lo(i) = std::max(val, 0.0);
      sol.xi_hi(i) = std::max(-val, 0.0);
    }
  }

  sol.objective = evaluate_objective(prog, sol.first, sol.second);
  sol.iterations = ipm.iters;
  sol.polished = pol != nullptr;
  return sol;
}

StagedProgram elastic_relaxation(const StagedProgram& prog) {
  StagedProgram el;
  el.first = prog.first;
  el.first.quad = Eigen::VectorXd::Constant(prog.first.size(), 1e-9);
  el.first.lin = Eigen::VectorXd::Zero(prog.first.size());
  for (const OutcomeBlock& ob : prog.outcomes) {
    OutcomeBlock eb;
    eb.weight = ob.weight;
    const Eigen::Index ns = ob.vars.size(), m = ob.row_count();
    eb.vars.quad = Eigen::VectorXd::Constant(ns + 2 * m, 1e-9);
    eb.vars.lin = Eigen::VectorXd::Zero(ns + 2 * m);
    eb.vars.lin.tail(2 * m).setConstant(1.0 / ob.weight);
    eb.vars.lo = Eigen::VectorXd::Zero(ns + 2 * m);
    eb.vars.lo.head(ns) = ob.vars.lo;
    eb.vars.hi = Eigen::VectorXd::Constant(ns + 2 * m, kInf);
    eb.vars.hi.head(ns) = ob.vars.hi;
    eb.rows_first = ob.rows_first;
    eb.rows_second = Eigen::MatrixXd::Zero(m, ns + 2 * m);
    eb.rows_second.leftCols(ns) = ob.rows_second;
    for (Eigen::Index r = 0; r < m; ++r) {
      eb.rows_second(r, ns + 2 * r) = 1.0;
      eb.rows_second(r, ns + 2 * r + 1) = -1.0;
    }
    eb.row_lo = ob.row_lo;
    eb.row_hi = ob.row_hi;
    el.outcomes.push_back(std::move(eb));
  }
  return el;
}

ConvexSolution solve_internal(const StagedProgram& prog, const SolveOptions& opts,
                              bool allow_phase1);

}  // namespace

void StagedProgram::validate() const {
  auto check_block = [](const VarBlock& vb, const char* name) {
    const Eigen::Index n = vb.quad.size();
    if (vb.lin.size() != n || vb.lo.size() != n || vb.hi.size() != n)
      throw DimensionMismatch(std::string(name) + " block arrays disagree in length");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isnan(vb.quad(i)) || std::isnan(vb.lin(i)))
        throw InvalidParameters("NaN in objective data");
      if (vb.quad(i) < 0) throw InvalidParameters("negative quadratic coefficient (non-convex)");
      if (!(vb.lo(i) <= vb.hi(i)))
        throw InvalidParameters(std::string(name) + " variable bounds reversed");
    }
  };
  check_block(first, "first-stage");
  for (size_t s = 0; s < outcomes.size(); ++s) {
    const OutcomeBlock& ob = outcomes[s];
    if (!(ob.weight > 0)) throw InvalidParameters("outcome weight must be positive");
    check_block(ob.vars, "second-stage");
    const Eigen::Index m = ob.row_count();
    if (ob.row_hi.size() != m) throw DimensionMismatch("row bound arrays disagree");
    if (ob.rows_first.rows() != m || ob.rows_first.cols() != first.size())
      throw DimensionMismatch("rows_first shape mismatch in outcome " + std::to_string(s));
    if (ob.rows_second.rows() != m || ob.rows_second.cols() != ob.vars.size())
      throw DimensionMismatch("rows_second shape mismatch in outcome " + std::to_string(s));
    for (Eigen::Index r = 0; r < m; ++r)
      if (!(ob.row_lo(r) <= ob.row_hi(r))) throw InvalidParameters("row bounds reversed");
  }
}

double KktReport::max_residual() const {
  return std::max(std::max(stationarity, primal), std::max(dual_sign, complementarity));
}

double evaluate_objective(const StagedProgram& prog, const Eigen::VectorXd& first,
                          const std::vector<Eigen::VectorXd>& second) {
  if (first.size() != prog.first.size() || second.size() != prog.outcomes.size())
    throw DimensionMismatch("evaluate_objective: candidate shape mismatch");
  double obj = prog.constant;
  obj += 0.5 * first.dot(prog.first.quad.cwiseProduct(first)) + prog.first.lin.dot(first);
  for (size_t s = 0; s < prog.outcomes.size(); ++s) {
    const OutcomeBlock& ob = prog.outcomes[s];
    if (second[s].size() != ob.vars.size())
      throw DimensionMismatch("evaluate_objective: outcome " + std::to_string(s));
    obj += ob.weight * (0.5 * second[s].dot(ob.vars.quad.cwiseProduct(second[s])) +
                        ob.vars.lin.dot(second[s]));
  }
  return obj;
}

KktReport kkt_residual(const StagedProgram& prog, const ConvexSolution& sol) {
  prog.validate();
  KktReport rep;
  const Eigen::Index n0 = prog.first.size();
  if (sol.first.size() != n0 || sol.second.size() != prog.outcomes.size() ||
      sol.duals.size() != prog.outcomes.size())
    throw DimensionMismatch("kkt_residual: solution shape mismatch");

  auto chk_sign = [&](double v) { rep.dual_sign = std::max(rep.dual_sign, -v); };

  // First-stage stationarity accumulator.
  Eigen::VectorXd stat0 =
      prog.first.quad.cwiseProduct(sol.first) + prog.first.lin - sol.xi_lo + sol.xi_hi;
  for (Eigen::Index i = 0; i < n0; ++i) {
    chk_sign(sol.xi_lo(i));
    chk_sign(sol.xi_hi(i));
    if (finite(prog.first.lo(i))) {
      rep.primal = std::max(rep.primal, prog.first.lo(i) - sol.first(i));
      rep.complementarity =
          std::max(rep.complementarity, std::abs(sol.xi_lo(i) * (sol.first(i) - prog.first.lo(i))));
    }
    if (finite(prog.first.hi(i))) {
      rep.primal = std::max(rep.primal, sol.first(i) - prog.first.hi(i));
      rep.complementarity =
          std::max(rep.complementarity, std::abs(sol.xi_hi(i) * (prog.first.hi(i) - sol.first(i))));
    }
  }

  for (size_t s = 0; s < prog.outcomes.size(); ++s) {
    const OutcomeBlock& ob = prog.outcomes[s];
    const OutcomeDuals& d = sol.duals[s];
    const Eigen::VectorXd& y = sol.second[s];
    if (d.rows.size() != ob.row_count() || d.nu_lo.size() != ob.vars.size())
      throw DimensionMismatch("kkt_residual: dual shape mismatch in outcome " + std::to_string(s));
    // Signed raw row duals.
    Eigen::VectorXd praw(ob.row_count());
    for (Eigen::Index r = 0; r < ob.row_count(); ++r) {
      const bool is_eq = finite(ob.row_lo(r)) && finite(ob.row_hi(r)) &&
                         ob.row_hi(r) - ob.row_lo(r) <= fold_gap(ob.row_lo(r), ob.row_hi(r));
      praw(r) = is_eq ? d.rows(r) * ob.weight : (d.mu_lo(r) - d.mu_hi(r)) * ob.weight;
      if (!is_eq) {
        chk_sign(d.mu_lo(r));
        chk_sign(d.mu_hi(r));
      }
    }
    const Eigen::VectorXd act = ob.rows_first * sol.first + ob.rows_second * y;
    for (Eigen::Index r = 0; r < ob.row_count(); ++r) {
      if (finite(ob.row_lo(r))) {
        rep.primal = std::max(rep.primal, ob.row_lo(r) - act(r));
        rep.complementarity = std::max(
            rep.complementarity, std::abs(d.mu_lo(r) * ob.weight * (act(r) - ob.row_lo(r))));
      }
      if (finite(ob.row_hi(r))) {
        rep.primal = std::max(rep.primal, act(r) - ob.row_hi(r));
        rep.complementarity = std::max(
            rep.complementarity, std::abs(d.mu_hi(r) * ob.weight * (ob.row_hi(r) - act(r))));
      }
    }
    Eigen::VectorXd staty = ob.weight * (ob.vars.quad.cwiseProduct(y) + ob.vars.lin) -
                            ob.rows_second.transpose() * praw -
                            ob.weight * (d.nu_lo - d.nu_hi);
    if (staty.size() > 0)
      rep.stationarity = std::max(rep.stationarity, staty.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ob.vars.size(); ++i) {
      chk_sign(d.nu_lo(i));
      chk_sign(d.nu_hi(i));
      if (finite(ob.vars.lo(i))) {
        rep.primal = std::max(rep.primal, ob.vars.lo(i) - y(i));
        rep.complementarity = std::max(
            rep.complementarity, std::abs(d.nu_lo(i) * ob.weight * (y(i) - ob.vars.lo(i))));
      }
      if (finite(ob.vars.hi(i))) {
        rep.primal = std::max(rep.primal, y(i) - ob.vars.hi(i));
        rep.complementarity = std::max(
            rep.complementarity, std::abs(d.nu_hi(i) * ob.weight * (ob.vars.hi(i) - y(i))));
      }
    }
    stat0 -= ob.rows_first.transpose() * praw;
  }
  if (n0 > 0) rep.stationarity = std::max(rep.stationarity, stat0.cwiseAbs().maxCoeff());
  rep.primal = std::max(rep.primal, 0.0);
  rep.dual_sign = std::max(rep.dual_sign, 0.0);
  return rep;
}

namespace {

ConvexSolution solve_internal(const StagedProgram& prog, const SolveOptions& opts,
                              bool allow_phase1) {
  Reduced red = reduce(prog);
  Ipm ipm(red, opts);
  bool converged = false;
  bool diverged = false;  // usually a certificate of infeasibility
  try {
    converged = red.nw == 0 || ipm.run();
  } catch (const NumericalBlowup&) {
    diverged = true;
  }
  std::vector<std::string> warnings;

  if (diverged) {
    if (allow_phase1) {
      int hint = -1;
      const double viol = measure_infeasibility(prog, &hint);
      if (viol > opts.feas_tol * red.row_scale)
        throw Infeasible("no feasible point (elastic violation " + std::to_string(viol) + ")",
                         viol, hint);
    }
    throw MaxIterations("interior-point loop did not converge");
  }

  int nx_total = red.nz;
  for (const ROutcome& ro : red.outs) nx_total += ro.ny();
  const bool want_polish =
      nx_total > 0 &&
      (opts.polish == 1 || (opts.polish == -1 && nx_total <= 400 && red.np <= 600));

  ConvexSolution best = extract(prog, red, ipm, nullptr);
  best.kkt = kkt_residual(prog, best);
  if (want_polish) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      PolishResult pol = try_polish(red, ipm, attempt == 1);
      if (!pol.ok) continue;
      ConvexSolution cand = extract(prog, red, ipm, &pol);
      cand.kkt = kkt_residual(prog, cand);
      if (cand.kkt.max_residual() <= best.kkt.max_residual() * (1.0 + 1e-9) ||
          cand.kkt.max_residual() < 1e-9 * red.row_scale) {
        best = std::move(cand);
        break;
      }
    }
    if (!best.polished) warnings.push_back("polish-rejected");
  }

  if (!converged) {
    const double loose = 1e-6;
    if (best.polished && best.kkt.max_residual() <= 1e-8 * (1.0 + red.row_scale)) {
      // The loop stalled short of tolerance, but the active-set solve passed a
      // direct residual check, which is the stronger certificate.
      warnings.push_back("stalled interior point; kept verified active-set solution");
    } else if (ipm.rel_p <= loose && ipm.rel_d <= loose && ipm.rel_g <= loose) {
      warnings.push_back("max-iterations: accepted at loose tolerance");
    } else if (allow_phase1) {
      int hint = -1;
      const double viol = measure_infeasibility(prog, &hint);
      if (viol > opts.feas_tol * red.row_scale)
        throw Infeasible("no feasible point (elastic violation " + std::to_string(viol) + ")",
                         viol, hint);
      throw MaxIterations("interior-point loop did not converge (primal " +
                          std::to_string(ipm.rel_p) + ", dual " + std::to_string(ipm.rel_d) +
                          ", gap " + std::to_string(ipm.rel_g) + ")");
    } else {
      throw MaxIterations("interior-point loop did not converge");
    }
  }
  degeneracy_warnings(red, ipm, warnings);
  best.warnings.insert(best.warnings.end(), warnings.begin(), warnings.end());
  return best;
}

}  // namespace

ConvexSolution solve(const StagedProgram& prog, const SolveOptions& opts) {
  return solve_internal(prog, opts, true);
}

double measure_infeasibility(const StagedProgram& prog, int* outcome_hint) {
  const StagedProgram el = elastic_relaxation(prog);
  SolveOptions opts;
  opts.tol = 1e-9;
  opts.polish = 0;
  ConvexSolution sol = solve_internal(el, opts, false);
  double total = 0.0;
  if (outcome_hint) *outcome_hint = -1;
  for (size_t s = 0; s < prog.outcomes.size(); ++s) {
    const Eigen::Index ns = prog.outcomes[s].vars.size();
    const double local = sol.second[s].tail(sol.second[s].size() - ns).sum();
    total += local;
    if (outcome_hint && *outcome_hint < 0 && local > 1e-7 * (1.0 + sol.second[s].cwiseAbs().maxCoeff()))
      *outcome_hint = static_cast<int>(s);
  }
  return total;
}

Eigen::VectorXd nodal_prices(double lambda, const Eigen::VectorXd& mu_lo,
                             const Eigen::VectorXd& mu_hi, const Network& net) {
  if (mu_lo.size() != net.line_count() || mu_hi.size() != net.line_count())
    throw DimensionMismatch("nodal_prices: line dual lengths must equal line count");
  return Eigen::VectorXd::Constant(net.node_count(), lambda) +
         net.shift_factors().transpose() * (mu_lo - mu_hi);
}

}  // namespace edfr
