#pragma once

// Monte-Carlo estimators of the classical and diagonal transfer operators,
// Cesaro ergodicity diagnostics, semigroup residuals and the Liouville
// sampler. Sample k of a run with master seed S always uses the generator
// seeded by substream_seed(S, k), and reductions run in index order, so
// results are reproducible for any thread count.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "raysplit/common.hpp"
#include "raysplit/flow.hpp"
#include "raysplit/geometry.hpp"
#include "raysplit/parallel.hpp"
#include "raysplit/profile1d.hpp"

namespace raysplit {

// ---------------------------------------------------------------------------
// Observables

struct Observable {
  std::function<double(const PhasePoint&)> eval;
  std::optional<double> mean;  // declared integral against d(omega)
  double sup = 1.0;            // bound used for lost-mass error bars
  std::string name = "f";
};

inline Observable constant_observable(double c) {
  return {[c](const PhasePoint&) { return c; }, c, std::abs(c), "const"};
}

// Metric distance from a phase point's position to the interface Y (and to
// the outer boundary where one exists).
inline double interface_distance(const ModelDomain& m, const PhasePoint& p) {
  switch (m.variant) {
    case ModelVariant::Layered1D: {
      double d = std::min(p.x[0] - 0.0, m.total_length() - p.x[0]);
      for (std::size_t i = 1; i + 1 < m.cumulative.size(); ++i)
        d = std::min(d, std::abs(p.x[0] - m.cumulative[i]));
      return std::max(0.0, d) / std::sqrt(m.layered.stiffness[p.region]);  // metric units
    }
    case ModelVariant::GluedDisks:
      return std::max(0.0, 1.0 - std::hypot(p.x[0], p.x[1]));
    default:
      return m.hemisphere_scale(p.region) * std::abs(p.x[1] - kPi / 2.0);
  }
}

// Smooth 0->1 window rising over [delta, 2 delta] in interface distance;
// mirrors the requirement that test operators live away from Y.
inline double support_window(const ModelDomain& m, const PhasePoint& p, double delta) {
  const double d = interface_distance(m, p);
  if (d <= delta) return 0.0;
  if (d >= 2.0 * delta) return 1.0;
  return 0.5 * (1.0 - std::cos(kPi * (d - delta) / delta));
}

inline Observable windowed(const ModelDomain& m, Observable f, double delta = 0.05) {
  Observable g;
  g.sup = f.sup;
  g.name = f.name + "*window";
  g.mean = std::nullopt;  // tapering changes the mean
  g.eval = [model = m, inner = std::move(f.eval), delta](const PhasePoint& p) {
    return inner(p) * support_window(model, p, delta);
  };
  return g;
}

// 1D multiplication observable a(x), optionally restricted to one momentum
// direction; the declared mean is the exact Liouville integral.
inline Observable observable_1d(const ModelDomain& m, const Profile1D& a, int direction = 0,
                                std::string name = "a") {
  if (m.variant != ModelVariant::Layered1D)
    throw ConfigError("observable_1d needs a Layered1D model");
  double mean = 0.0;
  for (int i = 0; i < m.layer_count(); ++i)
    mean += a.integral_on(m.cumulative[i], m.cumulative[i + 1]) /
            std::sqrt(m.layered.stiffness[i]);
  mean /= m.optical_length();
  if (direction != 0) mean *= 0.5;
  Observable f;
  f.eval = [a, direction](const PhasePoint& p) {
    if (direction > 0 && p.xi[0] <= 0.0) return 0.0;
    if (direction < 0 && p.xi[0] >= 0.0) return 0.0;
    return a.eval(p.x[0]);
  };
  f.mean = mean;
  f.sup = a.sup_bound();
  f.name = std::move(name);
  return f;
}

// Angular momentum about the disk center in the chart of the current side;
// equals the tangential momentum u of the next section crossing.
inline Observable disk_angular_momentum() {
  Observable f;
  f.eval = [](const PhasePoint& p) {
    return p.x[0] * p.xi[1] - p.x[1] * p.xi[0];
  };
  f.mean = 0.0;
  f.sup = 1.0;
  f.name = "disk_u";
  return f;
}

inline Observable disk_angular_momentum_squared() {
  Observable f;
  f.eval = [](const PhasePoint& p) {
    const double u = p.x[0] * p.xi[1] - p.x[1] * p.xi[0];
    return u * u;
  };
  f.mean = 0.25;  // E|x|^2 * E sin^2 = 1/2 * 1/2 on the unit disk
  f.sup = 1.0;
  f.name = "disk_u2";
  return f;
}

// Quadrupole of the position in the current chart; mean zero on each disk,
// even in u, and it equidistributes on the chord timescale (unlike momentum
// observables, whose mixing is throttled by the sticky |u| -> 1 bands).
inline Observable disk_quadrupole() {
  Observable f;
  f.eval = [](const PhasePoint& p) { return p.x[0] * p.x[0] - p.x[1] * p.x[1]; };
  f.mean = 0.0;
  f.sup = 1.0;
  f.name = "disk_quadrupole";
  return f;
}

// Occupancy of the plus-side disk: the fastest-mixing of the bundled
// observables, measuring equidistribution between the two sheets.
inline Observable disk_side_indicator() {
  Observable f;
  f.eval = [](const PhasePoint& p) { return p.region == 0 ? 1.0 : 0.0; };
  f.mean = 0.5;
  f.sup = 1.0;
  f.name = "disk_side";
  return f;
}

// Momentum conjugate to the longitude (conserved on each smooth arc and, for
// c+ = c-, globally).
inline Observable hemi_polar_momentum() {
  Observable f;
  f.eval = [](const PhasePoint& p) { return p.xi[0]; };
  f.mean = 0.0;
  f.sup = 1.0;
  f.name = "hemi_eta";
  return f;
}

inline Observable hemi_polar_momentum_squared(const ModelDomain& m) {
  const double cp2 = m.c_plus * m.c_plus, cm2 = m.c_minus * m.c_minus;
  Observable f;
  f.eval = [](const PhasePoint& p) { return p.xi[0] * p.xi[0]; };
  // E[eta^2 | side] = c^2/3; sides weighted by area c^2
  f.mean = (cp2 * cp2 + cm2 * cm2) / (3.0 * (cp2 + cm2));
  f.sup = std::max(cp2, cm2);
  f.name = "hemi_eta2";
  return f;
}

// ---------------------------------------------------------------------------
// Liouville sampler

class LiouvilleSampler {
 public:
  explicit LiouvilleSampler(const ModelDomain& m) : m_(&m) {}

  double volume() const {
    switch (m_->variant) {
      case ModelVariant::Layered1D: return 2.0 * m_->optical_length();
      case ModelVariant::GluedDisks: return 2.0 * kPi * kTwoPi;
      default:
        return kTwoPi * kTwoPi * (m_->c_plus * m_->c_plus + m_->c_minus * m_->c_minus);
    }
  }

  PhasePoint sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    PhasePoint p;
    switch (m_->variant) {
      case ModelVariant::Layered1D: {
        const double lopt = m_->optical_length();
        double pick = uni(rng) * lopt;
        int layer = 0;
        for (; layer + 1 < m_->layer_count(); ++layer) {
          const double w =
              m_->layered.lengths[layer] / std::sqrt(m_->layered.stiffness[layer]);
          if (pick < w) break;
          pick -= w;
        }
        p.region = layer;
        p.x[0] = m_->cumulative[layer] + uni(rng) * m_->layered.lengths[layer];
        const double sgn = uni(rng) < 0.5 ? 1.0 : -1.0;
        p.xi[0] = sgn / std::sqrt(m_->layered.stiffness[layer]);
        return p;
      }
      case ModelVariant::GluedDisks: {
        p.region = uni(rng) < 0.5 ? 0 : 1;
        const double r = std::sqrt(uni(rng));
        const double a = kTwoPi * uni(rng);
        p.x[0] = r * std::cos(a);
        p.x[1] = r * std::sin(a);
        const double th = kTwoPi * uni(rng);
        p.xi[0] = std::cos(th);
        p.xi[1] = std::sin(th);
        return p;
      }
      default: {
        const double wp = m_->c_plus * m_->c_plus;
        const double wm = m_->c_minus * m_->c_minus;
        const int region = (uni(rng) * (wp + wm) < wp) ? 0 : 1;
        const double z = (region == 0 ? 1.0 : -1.0) * uni(rng);
        const double phi = kTwoPi * uni(rng);
        const double st = std::sqrt(std::max(0.0, 1.0 - z * z));
        const Vec3 P{st * std::cos(phi), st * std::sin(phi), z};
        Vec3 e1 = cross(P, Vec3{0.0, 0.0, 1.0});
        if (norm(e1) < 1e-9) e1 = cross(P, Vec3{1.0, 0.0, 0.0});
        e1 = normalized(e1);
        const Vec3 e2 = cross(P, e1);
        const double al = kTwoPi * uni(rng);
        const Vec3 V = e1 * std::cos(al) + e2 * std::sin(al);
        return hemi_from_3d(*m_, region, P, V);
      }
    }
  }

 private:
  const ModelDomain* m_;
};

// Sampled estimate of sup |f| over the unit cosphere (observable invariant).
inline double estimate_sup(const ModelDomain& m, const Observable& f, std::uint64_t seed,
                           int n = 4096) {
  LiouvilleSampler sampler(m);
  std::mt19937_64 rng(substream_seed(seed, 0xF00Dull));
  double sup = 0.0;
  for (int i = 0; i < n; ++i) sup = std::max(sup, std::abs(f.eval(sampler.sample(rng))));
  return sup;
}

// ---------------------------------------------------------------------------
// Transfer operator estimators

struct XiResult {
  double value = 0.0;
  double lost_mass = 0.0;
  double error_bound = 0.0;  // lost_mass * sup|f|
  bool budget_exceeded = false;
};

inline XiResult xi_classical(const ModelDomain& m, const Observable& f, double t,
                             const PhasePoint& start, const PrunePolicy& pol = {},
                             double merge_tol = kMergeTol) {
  BranchTree tree = make_tree(m, start);
  evolve(m, tree, t, pol);
  const auto groups = endpoint_set(m, tree, merge_tol);
  XiResult out;
  for (const auto& g : groups) out.value += g.w_c * f.eval(g.rep);
  out.lost_mass = tree.lost_mass;
  out.error_bound = tree.lost_mass * f.sup;
  out.budget_exceeded = tree.budget_exceeded;
  return out;
}

inline XiResult xi_diagonal(const ModelDomain& m, const Observable& f, double t,
                            const PhasePoint& start, const PrunePolicy& pol = {},
                            double merge_tol = kMergeTol) {
  BranchTree tree = make_tree(m, start);
  evolve(m, tree, t, pol);
  const auto groups = endpoint_set(m, tree, merge_tol);
  XiResult out;
  for (const auto& g : groups) out.value += g.w_d * f.eval(g.rep);
  out.lost_mass = tree.lost_mass;
  out.error_bound = tree.lost_mass * f.sup;
  out.budget_exceeded = tree.budget_exceeded;
  return out;
}

// ---------------------------------------------------------------------------
// Cesaro averages

struct CesaroResult {
  double value = 0.0;        // 2/T^2 int (T-s) Xi_s f ds
  double plain_value = 0.0;  // 1/T int Xi_s f ds (stronger-than-Cesaro diagnostic)
  double lost_mass = 0.0;
  double refine_diff = 0.0;  // |full rule - doubled rule|, quadrature control
  bool quadrature_flag = false;
  bool path_died = false;
};

namespace detail {

// Merged node list of the n-point and 2n-point rules on [0, T] so one forward
// evolution serves both the production value and its refinement control.
struct CesaroNodes {
  std::vector<double> times;     // ascending, deduplicated
  std::vector<double> w_main;    // (2/T^2) w_k (T - s_k) for the n-point rule
  std::vector<double> w_refine;  // same for the 2n-point rule
  std::vector<double> w_plain;   // w_k / T: the plain time average (1/T) int
};

inline CesaroNodes cesaro_nodes(double T, int n_t) {
  struct Node {
    double s, w;
    bool main;
  };
  std::vector<Node> nodes;
  auto add = [&](const GaussRule& rule, bool main) {
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double s = 0.5 * (rule.nodes[k] + 1.0) * T;
      const double w = 0.5 * rule.weights[k] * T;
      nodes.push_back({s, w, main});
    }
  };
  add(gauss_legendre(n_t), true);
  add(gauss_legendre(2 * n_t), false);
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.s < b.s; });
  CesaroNodes out;
  for (const auto& nd : nodes) {
    if (out.times.empty() || nd.s - out.times.back() > 1e-15) {
      out.times.push_back(nd.s);
      out.w_main.push_back(0.0);
      out.w_refine.push_back(0.0);
      out.w_plain.push_back(0.0);
    }
    const double s = out.times.back();
    if (nd.main) {
      out.w_main.back() += nd.w * (T - s) * 2.0 / (T * T);
      out.w_plain.back() += nd.w / T;
    } else {
      out.w_refine.back() += nd.w * (T - s) * 2.0 / (T * T);
    }
  }
  return out;
}

}  // namespace detail

// 2/T^2 * int_0^T (T-s) Xi_s f ds via Gauss-Legendre in s; the single branch
// tree is evolved once through the ascending merged nodes, and a doubled rule
// evaluated on the same evolution flags insufficient quadrature order.
inline CesaroResult cesaro_average_tree(const ModelDomain& m, const Observable& f, double T,
                                        const PhasePoint& start, int n_t = 64,
                                        const PrunePolicy& pol = {}, double quad_tol = 1e-3) {
  const auto nodes = detail::cesaro_nodes(T, n_t);
  BranchTree tree = make_tree(m, start);
  CesaroResult out;
  double acc = 0.0, acc_r = 0.0, acc_p = 0.0;
  for (std::size_t k = 0; k < nodes.times.size(); ++k) {
    evolve(m, tree, nodes.times[k], pol);
    double xs = 0.0;
    for (const auto& b : tree.branches)
      if (b.alive) xs += std::norm(b.amp) * f.eval(b.point);
    acc += nodes.w_main[k] * xs;
    acc_r += nodes.w_refine[k] * xs;
    acc_p += nodes.w_plain[k] * xs;
  }
  out.value = acc;
  out.plain_value = acc_p;
  out.refine_diff = std::abs(acc - acc_r);
  out.quadrature_flag = out.refine_diff > quad_tol * (1.0 + std::abs(out.value));
  out.lost_mass = tree.lost_mass;
  return out;
}

// Same Cesaro functional along sampled paths (unbiased for the classical
// operator; used for long horizons where full trees are infeasible).
// Averaging n_paths routes estimates the operator-level Cesaro average.
inline CesaroResult cesaro_average_path_nodes(const ModelDomain& m, const Observable& f,
                                              const detail::CesaroNodes& nodes,
                                              const PhasePoint& start, std::mt19937_64& rng,
                                              int n_paths = 1) {
  CesaroResult out;
  double acc = 0.0, acc_r = 0.0, acc_p = 0.0;
  int alive = 0;
  for (int rep = 0; rep < n_paths; ++rep) {
    double a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t idx = 0;
    const bool ok = walk_path(m, start, rng, nodes.times, /*max events per unit time*/ 4000,
                              [&](double, const PhasePoint& p) {
                                const double v = f.eval(p);
                                a1 += nodes.w_main[idx] * v;
                                a2 += nodes.w_refine[idx] * v;
                                a3 += nodes.w_plain[idx] * v;
                                ++idx;
                              });
    if (!ok) continue;
    ++alive;
    acc += a1;
    acc_r += a2;
    acc_p += a3;
  }
  if (alive == 0) {
    out.path_died = true;
    return out;
  }
  out.value = acc / alive;
  out.plain_value = acc_p / alive;
  out.refine_diff = std::abs(acc - acc_r) / alive;
  out.path_died = false;
  return out;
}

inline CesaroResult cesaro_average_path(const ModelDomain& m, const Observable& f, double T,
                                        const PhasePoint& start, std::mt19937_64& rng,
                                        int n_t = 64, int n_paths = 1) {
  const auto nodes = detail::cesaro_nodes(T, n_t);
  return cesaro_average_path_nodes(m, f, nodes, start, rng, n_paths);
}

// ---------------------------------------------------------------------------
// Ergodicity scan

struct ErgodicityRow {
  double T = 0.0;
  int n_samples = 0;
  double l1_dev = 0.0;
  double q25 = 0.0, q50 = 0.0, q75 = 0.0;
  double mc_stderr = 0.0;
  double lost_mass_mean = 0.0;  // lost tree mass or dead-path fraction
  // plain time-average (1/T) int Xi_s f ds diagnostics over the same starts;
  // the Cesaro statement above is the weaker of the two notions
  double plain_l1_dev = 0.0;
  double plain_q50 = 0.0;
};

struct ErgodicityOptions {
  int n_t = 64;                 // minimum quadrature order
  double nodes_per_unit = 4.0;  // scale the order with T so the rule keeps
                                // resolving individual flights at long horizons
  bool use_paths = true;        // Monte-Carlo routes instead of full trees
  int n_paths = 16;             // routes averaged per start
  int threads = 1;              // sample-parallel workers (fixed-order reduce)
  PrunePolicy policy;           // for tree mode
  std::uint64_t seed = 1;
  std::optional<double> mean_override;

  int nodes_for(double T) const {
    return std::max(n_t, static_cast<int>(std::ceil(nodes_per_unit * T)));
  }
};

inline ErgodicityRow ergodicity_scan_row(const ModelDomain& m, const Observable& f, double T,
                                         int n_samples, const LiouvilleSampler& sampler,
                                         const ErgodicityOptions& opt) {
  double mean;
  if (opt.mean_override) {
    mean = *opt.mean_override;
  } else if (f.mean) {
    mean = *f.mean;
  } else {
    // no declared mean: estimate it from the sampler with a fixed substream
    std::mt19937_64 rng(substream_seed(opt.seed, 0xA11ull));
    double acc = 0.0;
    const int nmc = 200000;
    for (int i = 0; i < nmc; ++i) acc += f.eval(sampler.sample(rng));
    mean = acc / nmc;
  }

  const auto nodes = detail::cesaro_nodes(T, opt.nodes_for(T));
  std::vector<double> slot(n_samples, -1.0);  // negative marks a dead path
  std::vector<double> slot_plain(n_samples, -1.0);
  std::vector<double> lost(n_samples, 0.0);
  parallel_for(n_samples, opt.threads, [&](std::size_t i) {
    std::mt19937_64 rng(substream_seed(opt.seed, static_cast<std::uint64_t>(i)));
    const PhasePoint start = sampler.sample(rng);
    CesaroResult r;
    if (opt.use_paths) {
      r = cesaro_average_path_nodes(m, f, nodes, start, rng, opt.n_paths);
      if (r.path_died) {
        lost[i] = 1.0;
        return;
      }
    } else {
      r = cesaro_average_tree(m, f, T, start, opt.nodes_for(T), opt.policy);
      lost[i] = r.lost_mass;
    }
    slot[i] = std::abs(r.value - mean);
    slot_plain[i] = std::abs(r.plain_value - mean);
  });
  std::vector<double> devs, plain;
  devs.reserve(n_samples);
  plain.reserve(n_samples);
  double lost_acc = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    lost_acc += lost[i];
    if (slot[i] >= 0.0) devs.push_back(slot[i]);
    if (slot_plain[i] >= 0.0) plain.push_back(slot_plain[i]);
  }
  ErgodicityRow row;
  row.T = T;
  row.n_samples = static_cast<int>(devs.size());
  if (devs.empty()) return row;
  double s1 = 0.0, s2 = 0.0, p1 = 0.0;
  for (double d : devs) {
    s1 += d;
    s2 += d * d;
  }
  for (double d : plain) p1 += d;
  row.l1_dev = s1 / devs.size();
  row.plain_l1_dev = p1 / plain.size();
  const double var = std::max(0.0, s2 / devs.size() - row.l1_dev * row.l1_dev);
  row.mc_stderr = std::sqrt(var / devs.size());
  std::sort(devs.begin(), devs.end());
  std::sort(plain.begin(), plain.end());
  auto q = [&](const std::vector<double>& v, double p) {
    return v[std::min(v.size() - 1, static_cast<std::size_t>(p * v.size()))];
  };
  row.q25 = q(devs, 0.25);
  row.q50 = q(devs, 0.50);
  row.q75 = q(devs, 0.75);
  row.plain_q50 = q(plain, 0.50);
  row.lost_mass_mean = lost_acc / n_samples;
  return row;
}

inline std::vector<ErgodicityRow> ergodicity_scan(const ModelDomain& m, const Observable& f,
                                                  const std::vector<double>& T_list,
                                                  int n_samples, const LiouvilleSampler& sampler,
                                                  const ErgodicityOptions& opt) {
  std::vector<ErgodicityRow> rows;
  for (double T : T_list) rows.push_back(ergodicity_scan_row(m, f, T, n_samples, sampler, opt));
  return rows;
}

// ---------------------------------------------------------------------------
// Semigroup residuals

struct SemigroupResult {
  double classical_residual = 0.0;
  double classical_stderr = 0.0;
  double diagonal_residual = 0.0;
  double diagonal_stderr = 0.0;
  double lost_mass_bound = 0.0;
};

// Monte-Carlo residual of Xi_{t+s} f against Xi_t (Xi_s f) for both weight
// conventions (the composed diagonal operator re-runs trees from the
// endpoints of the outer evolution).
inline SemigroupResult semigroup_check(const ModelDomain& m, const Observable& f, double s,
                                       double t, int n_samples, const LiouvilleSampler& sampler,
                                       std::uint64_t seed, const PrunePolicy& pol = {},
                                       double merge_tol = kMergeTol) {
  double c1 = 0.0, c2 = 0.0, d1 = 0.0, d2 = 0.0, lost = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    std::mt19937_64 rng(substream_seed(seed, static_cast<std::uint64_t>(i)));
    const PhasePoint start = sampler.sample(rng);

    const XiResult direct_c = xi_classical(m, f, t + s, start, pol, merge_tol);
    const XiResult direct_d = xi_diagonal(m, f, t + s, start, pol, merge_tol);

    BranchTree outer = make_tree(m, start);
    evolve(m, outer, t, pol);
    const auto groups = endpoint_set(m, outer, merge_tol);
    double comp_c = 0.0, comp_d = 0.0, inner_lost = 0.0;
    for (const auto& g : groups) {
      const XiResult inner_c = xi_classical(m, f, s, g.rep, pol, merge_tol);
      const XiResult inner_d = xi_diagonal(m, f, s, g.rep, pol, merge_tol);
      comp_c += g.w_c * inner_c.value;
      comp_d += g.w_d * inner_d.value;
      inner_lost += g.w_c * inner_c.lost_mass;
    }
    const double rc = comp_c - direct_c.value;
    const double rd = comp_d - direct_d.value;
    c1 += rc;
    c2 += rc * rc;
    d1 += rd;
    d2 += rd * rd;
    lost += (direct_c.lost_mass + outer.lost_mass + inner_lost) * f.sup;
  }
  SemigroupResult out;
  const double n = n_samples;
  out.classical_residual = c1 / n;
  out.diagonal_residual = d1 / n;
  out.classical_stderr = std::sqrt(std::max(0.0, c2 / n - out.classical_residual *
                                                         out.classical_residual) / n);
  out.diagonal_stderr = std::sqrt(std::max(0.0, d2 / n - out.diagonal_residual *
                                                        out.diagonal_residual) / n);
  out.lost_mass_bound = lost / n;
  return out;
}

}  // namespace raysplit
