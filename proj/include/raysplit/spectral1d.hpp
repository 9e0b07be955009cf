#pragma once

// Exact spectral solver for the 1D transmissive operator -(p f')' = lambda f
// on a layered segment. The interface weight b is realized as the derivative
// jump f'(x+) = gamma f'(x-) with gamma = b sqrt(p_-/p_+)... (see calibrate_b):
// the unique self-adjoint realization whose plane-wave reflection amplitude
// equals the classical splitting coefficient (b tau+ - tau-)/(b tau+ + tau-)
// with tau = 1. Self-adjointness holds in the layer-weighted inner product
// sum_i w_i int_layer_i f g dx with w_{i+1} = w_i p_i / (gamma_i p_{i+1}).
//
// Eigenfunctions are stored per layer as A cos(k x') + B sin(k x') with
// x' the offset into the layer, so matrix elements of piecewise-trig
// observables integrate in closed form.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "raysplit/common.hpp"
#include "raysplit/flow.hpp"
#include "raysplit/geometry.hpp"
#include "raysplit/profile1d.hpp"
#include "raysplit/transfer.hpp"

namespace raysplit {
namespace spectral {

// The unique b > 0 whose lemma reflection coefficient (with tau = 1)
// reproduces the plane-wave reflection of the standard Sturm-Liouville
// interface (f and p f' continuous). Derived from the transfer-matrix
// scattering solve, not hardcoded; frequency independence is checked.
inline double calibrate_b(double p_plus, double p_minus) {
  if (!(p_plus > 0.0) || !(p_minus > 0.0)) throw ConfigError("calibrate_b: p must be positive");
  auto reflection = [&](double omega) {
    const double k1 = omega / std::sqrt(p_plus), k2 = omega / std::sqrt(p_minus);
    // f1 = e^{i k1 x} + R e^{-i k1 x}, f2 = T e^{i k2 x};
    // continuity of f and of p f' at x = 0:
    //   1 + R = T,  p1 i k1 (1 - R) = p2 i k2 T
    const double a = p_plus * k1, c = p_minus * k2;
    return (a - c) / (a + c);
  };
  const double r1 = reflection(1.0), r2 = reflection(1e4);
  if (std::abs(r1 - r2) > 1e-12)
    throw NumericDegeneracy("calibrate_b: frequency-dependent reflection");
  return (1.0 + r1) / (1.0 - r1);
}

struct SecularProblem {
  std::vector<double> lengths;
  std::vector<double> stiffness;
  std::vector<double> b;  // interface weights (size layers-1)
  EndCondition left = EndCondition::Dirichlet;
  EndCondition right = EndCondition::Dirichlet;

  static SecularProblem from_model(const ModelDomain& m) {
    if (m.variant != ModelVariant::Layered1D)
      throw ConfigError("SecularProblem::from_model needs Layered1D");
    SecularProblem p;
    p.lengths = m.layered.lengths;
    p.stiffness = m.layered.stiffness;
    p.b = m.layered.b;
    p.left = m.layered.left;
    p.right = m.layered.right;
    return p;
  }

  int layers() const { return static_cast<int>(lengths.size()); }
  double total_length() const {
    double acc = 0.0;
    for (double L : lengths) acc += L;
    return acc;
  }
  double optical_length() const {
    double acc = 0.0;
    for (int i = 0; i < layers(); ++i) acc += lengths[i] / std::sqrt(stiffness[i]);
    return acc;
  }
  double cumulative(int i) const {
    double acc = 0.0;
    for (int k = 0; k < i; ++k) acc += lengths[k];
    return acc;
  }
  // derivative-jump factor at interface i: f'(+) = gamma_i f'(-)
  double gamma(int i) const { return b[i] * std::sqrt(stiffness[i] / stiffness[i + 1]); }
  std::vector<double> layer_weights() const {
    std::vector<double> w(layers(), 1.0);
    for (int i = 0; i + 1 < layers(); ++i)
      w[i + 1] = w[i] * stiffness[i] / (gamma(i) * stiffness[i + 1]);
    return w;
  }
};

struct EigenFunction {
  // per layer: f(x) = A cos(k x') + B sin(k x'), x' = x - X_{i-1}
  std::vector<double> A, B, k;
};

class SpectralData {
 public:
  SecularProblem prob;
  std::vector<double> omega;    // sqrt(eigenvalue), ascending
  std::vector<double> lambda;   // eigenvalues
  std::vector<EigenFunction> funcs;
  std::vector<double> weights;  // inner-product layer weights

  std::size_t size() const { return omega.size(); }

  // paper convention: N(omega) = #| lambda_j < omega^2 |
  int counting_function(double om) const {
    return static_cast<int>(std::lower_bound(lambda.begin(), lambda.end(), om * om) -
                            lambda.begin());
  }
  int count_below_lambda(double lam) const {
    return static_cast<int>(std::lower_bound(lambda.begin(), lambda.end(), lam) - lambda.begin());
  }

  // <a phi_j, phi_k> in the weighted inner product; 1-based indices.
  double matrix_element(const Profile1D& a, int j, int k) const {
    const EigenFunction& fj = funcs.at(j - 1);
    const EigenFunction& fk = funcs.at(k - 1);
    double acc = 0.0;
    for (int i = 0; i < prob.layers(); ++i) {
      const double lo = prob.cumulative(i), hi = lo + prob.lengths[i];
      const double Cj = std::hypot(fj.A[i], fj.B[i]);
      const double Ck = std::hypot(fk.A[i], fk.B[i]);
      if (Cj == 0.0 || Ck == 0.0) continue;
      // f = C cos(k x' - d), d = atan2(B, A); in global x the phase is
      // -(k X_lo + ... ) folded into the cosine argument
      const double dj = std::atan2(fj.B[i], fj.A[i]) + fj.k[i] * lo;
      const double dk = std::atan2(fk.B[i], fk.A[i]) + fk.k[i] * lo;
      const double pref = 0.5 * weights[i] * Cj * Ck;
      acc += pref * a.integral_against_cos_on(lo, hi, fj.k[i] - fk.k[i], -(dj - dk));
      acc += pref * a.integral_against_cos_on(lo, hi, fj.k[i] + fk.k[i], -(dj + dk));
    }
    return acc;
  }

  // closure-backed observable: per-layer Gauss quadrature with one
  // refinement; throws QuadratureNotConverged beyond the target.
  double matrix_element(const std::function<double(double)>& a, int j, int k,
                        double target = 1e-10) const {
    const EigenFunction& fj = funcs.at(j - 1);
    const EigenFunction& fk = funcs.at(k - 1);
    auto value = [&](int mult) {
      double acc = 0.0;
      for (int i = 0; i < prob.layers(); ++i) {
        const double lo = prob.cumulative(i), hi = lo + prob.lengths[i];
        const double kmax = std::max(fj.k[i], fk.k[i]);
        const int n = std::min(4096, std::max(32, mult * static_cast<int>(
                                                       (hi - lo) * kmax / kPi) * 8));
        const GaussRule rule = gauss_legendre(n);
        acc += weights[i] * gauss_integrate(
                                [&](double x) {
                                  const double xp = x - lo;
                                  const double vj =
                                      fj.A[i] * std::cos(fj.k[i] * xp) +
                                      fj.B[i] * std::sin(fj.k[i] * xp);
                                  const double vk =
                                      fk.A[i] * std::cos(fk.k[i] * xp) +
                                      fk.B[i] * std::sin(fk.k[i] * xp);
                                  return a(x) * vj * vk;
                                },
                                lo, hi, rule);
      }
      return acc;
    };
    const double v1 = value(1), v2 = value(2);
    if (std::abs(v1 - v2) > target * (1.0 + std::abs(v2)))
      throw QuadratureNotConverged("matrix_element: increase quadrature order");
    return v2;
  }
};

namespace detail {

// propagate (f, f') through the stack at frequency omega; optionally record
// the per-layer start values.
inline void propagate(const SecularProblem& p, double omega, double* f, double* g,
                      EigenFunction* record) {
  const int n = p.layers();
  if (record) {
    record->A.assign(n, 0.0);
    record->B.assign(n, 0.0);
    record->k.assign(n, 0.0);
  }
  for (int i = 0; i < n; ++i) {
    const double k = omega / std::sqrt(p.stiffness[i]);
    if (record) {
      record->A[i] = *f;
      record->B[i] = (k > 0.0) ? *g / k : 0.0;
      record->k[i] = k;
    }
    const double L = p.lengths[i];
    const double c = std::cos(k * L), s = std::sin(k * L);
    const double f1 = (k > 0.0) ? *f * c + *g * s / k : *f + *g * L;
    const double g1 = (k > 0.0) ? -*f * k * s + *g * c : *g;
    *f = f1;
    *g = g1;
    if (i + 1 < n) *g *= p.gamma(i);
  }
}

inline double secular(const SecularProblem& p, double omega) {
  double f = (p.left == EndCondition::Dirichlet) ? 0.0 : 1.0;
  double g = (p.left == EndCondition::Dirichlet) ? 1.0 : 0.0;
  propagate(p, omega, &f, &g, nullptr);
  return (p.right == EndCondition::Dirichlet) ? f : g;
}

// interior zeros of A cos(k x') + B sin(k x') on (0, L), open at both ends
// within edge_tol of the endpoints
inline int layer_zero_count(double A, double B, double k, double L, double edge_tol) {
  if (k <= 0.0) return 0;
  const double C = std::hypot(A, B);
  if (C == 0.0) return 0;
  const double d = std::atan2(B, A);  // f = C cos(k x' - d)
  // zeros at x' = (d + pi/2 + n pi)/k
  int count = 0;
  const double x0 = (d + kPi / 2.0) / k;
  const double step = kPi / k;
  double first = x0 - std::floor(x0 / step) * step;
  if (first < edge_tol) first += step;
  for (double x = first; x < L - edge_tol; x += step) ++count;
  return count;
}

}  // namespace detail

struct SolveOptions {
  double scan_step_factor = 8.0;  // scan step = pi / (factor * L_opt)
  bool verify_oscillation = true;
};

// All eigenvalues below lambda_max by transfer-matrix secular scan +
// bisection, eigenfunctions normalized in the weighted inner product.
inline SpectralData solve_spectrum(const SecularProblem& p, double lambda_max,
                                   const SolveOptions& opt = {}) {
  SpectralData out;
  out.prob = p;
  out.weights = p.layer_weights();
  const double omega_max = std::sqrt(lambda_max);
  const double step = kPi / (opt.scan_step_factor * p.optical_length());

  if (p.left == EndCondition::Neumann && p.right == EndCondition::Neumann) {
    // lambda = 0 with constant eigenfunction (derivative jumps trivially 0)
    out.omega.push_back(0.0);
    out.lambda.push_back(0.0);
    EigenFunction ef;
    const int n = p.layers();
    ef.A.assign(n, 1.0);
    ef.B.assign(n, 0.0);
    ef.k.assign(n, 0.0);
    double nrm = 0.0;
    for (int i = 0; i < n; ++i) nrm += out.weights[i] * p.lengths[i];
    for (int i = 0; i < n; ++i) ef.A[i] /= std::sqrt(nrm);
    out.funcs.push_back(std::move(ef));
  }

  double prev_omega = 1e-9 * step;
  double prev_val = detail::secular(p, prev_omega);
  for (double om = step; om <= omega_max + 0.5 * step; om += step) {
    const double omc = std::min(om, omega_max);
    const double val = detail::secular(p, omc);
    if (val == 0.0 || (val > 0.0) != (prev_val > 0.0)) {
      double lo = prev_omega, hi = omc;
      double flo = prev_val;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        const double fm = detail::secular(p, mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((fm > 0.0) == (flo > 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
        if (hi - lo < 1e-13 * (1.0 + hi)) break;
      }
      const double root = 0.5 * (lo + hi);
      if (root <= omega_max && root > 1e-12) {
        out.omega.push_back(root);
        out.lambda.push_back(root * root);
      }
    }
    prev_omega = omc;
    prev_val = val;
  }

  // eigenfunctions + normalization
  for (double om : out.omega) {
    if (om == 0.0) continue;
    EigenFunction ef;
    double f = (p.left == EndCondition::Dirichlet) ? 0.0 : 1.0;
    double g = (p.left == EndCondition::Dirichlet) ? 1.0 : 0.0;
    detail::propagate(p, om, &f, &g, &ef);
    double nrm = 0.0;
    for (int i = 0; i < p.layers(); ++i) {
      const double A = ef.A[i], B = ef.B[i], k = ef.k[i], L = p.lengths[i];
      double integral;
      if (k > 0.0) {
        integral = 0.5 * (A * A + B * B) * L + (A * A - B * B) * std::sin(2.0 * k * L) / (4.0 * k) +
                   A * B * (1.0 - std::cos(2.0 * k * L)) / (2.0 * k);
      } else {
        integral = A * A * L;
      }
      nrm += out.weights[i] * integral;
    }
    const double scale = 1.0 / std::sqrt(nrm);
    for (int i = 0; i < p.layers(); ++i) {
      ef.A[i] *= scale;
      ef.B[i] *= scale;
    }
    out.funcs.push_back(std::move(ef));
  }

  if (opt.verify_oscillation) {
    // Sturm oscillation: the (j+1)-th eigenfunction has exactly j interior
    // zeros (the constant NN mode occupies slot 0 with none), so a mismatch
    // means a missed or spurious root.
    for (std::size_t j = 0; j < out.size(); ++j) {
      if (out.omega[j] == 0.0) continue;
      const EigenFunction& ef = out.funcs[j];
      int zeros = 0;
      double supC = 0.0;
      for (int i = 0; i < p.layers(); ++i) supC = std::max(supC, std::hypot(ef.A[i], ef.B[i]));
      for (int i = 0; i < p.layers(); ++i) {
        const double edge = 1e-8 / std::max(ef.k[i], 1.0);
        zeros += detail::layer_zero_count(ef.A[i], ef.B[i], ef.k[i], p.lengths[i], edge);
      }
      for (int i = 0; i + 1 < p.layers(); ++i) {
        // a zero sitting exactly on an interface belongs to neither open layer
        if (std::abs(ef.A[i + 1]) < 1e-8 * supC) ++zeros;
      }
      if (zeros != static_cast<int>(j))
        throw RootBracketFailure("solve_spectrum: oscillation count mismatch near omega = " +
                                 std::to_string(out.omega[j]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weyl counting

struct WeylCount {
  int count = 0;
  double prediction = 0.0;
  double relative_error = 0.0;
};

// N(lambda) = #{lambda_j < lambda} against the one-dimensional Weyl term
// sqrt(lambda) L_opt / pi.
inline WeylCount weyl_count(const SpectralData& data, double lam) {
  WeylCount out;
  out.count = data.count_below_lambda(lam);
  out.prediction = std::sqrt(lam) * data.prob.optical_length() / kPi;
  out.relative_error = (out.prediction != 0.0) ? (out.count - out.prediction) / out.prediction
                                               : 0.0;
  return out;
}

// Least-squares slope of N(lambda_j) against sqrt(lambda_j) on a window.
inline double weyl_slope(const SpectralData& data, double lam_lo, double lam_hi) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (data.lambda[j] < lam_lo || data.lambda[j] > lam_hi) continue;
    const double x = data.omega[j];
    const double y = static_cast<double>(j) + 1.0;  // N at lambda_j (+1 below)
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) throw ConfigError("weyl_slope: window holds fewer than two eigenvalues");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Local Weyl averages and QE variance

// exact Liouville mean of a multiplication symbol
inline double liouville_mean(const SecularProblem& p, const Profile1D& a) {
  double acc = 0.0;
  for (int i = 0; i < p.layers(); ++i) {
    const double lo = p.cumulative(i);
    acc += a.integral_on(lo, lo + p.lengths[i]) / std::sqrt(p.stiffness[i]);
  }
  return acc / p.optical_length();
}

struct LocalWeylResult {
  double average = 0.0;
  double target = 0.0;
};

inline LocalWeylResult local_weyl_average(const SpectralData& data, const Profile1D& a, int N) {
  if (N > static_cast<int>(data.size()))
    throw ConfigError("local_weyl_average: N exceeds available eigenpairs");
  double acc = 0.0;
  for (int j = 1; j <= N; ++j) acc += data.matrix_element(a, j, j);
  return {acc / N, liouville_mean(data.prob, a)};
}

// ---------------------------------------------------------------------------
// Averaging-theorem cross-check: windowed average of <C U*(t) A U(t) B f_j, f_j>
// against the transfer-operator integral int sigma_C Xi^d_t(sigma_A) sigma_B dw.

struct AveragingOptions {
  int j_lo = 200;   // 1-based inclusive eigenfunction window
  int j_hi = 1200;
  int band = 64;    // half-width of the k,l truncation band around each j
  double tail_tolerance = 1e-3;
  int quad_nodes = 64;          // classical-side nodes per smooth subinterval
  PrunePolicy policy{0.0, 1u << 16, 64, false};  // exact trees
};

struct AveragingResult {
  double quantum = 0.0;            // (1/|J|) sum_j Re M_j(t), banded conjugation
  double quantum_imag = 0.0;       // residual imaginary part (diagnostic)
  double quantum_direct_t0 = 0.0;  // (1/|J|) sum_j <(c a b) f_j, f_j>, exact
  double classical = 0.0;          // deterministic phase-space quadrature
  double classical_refine = 0.0;   // quadrature refinement difference
  double tail_bound = 0.0;         // windowing error bound for the quantum side
};

namespace detail {

// deterministic quadrature of g(x, dir) against the Liouville measure; the
// integrand is split at the profile breakpoints so only the transfer-operator
// kinks limit the order.
template <typename G>
inline double liouville_quadrature(const SecularProblem& p, const std::vector<double>& cuts,
                                   int nodes, const G& g) {
  const GaussRule rule = gauss_legendre(nodes);
  double acc = 0.0;
  for (int i = 0; i < p.layers(); ++i) {
    const double lo = p.cumulative(i), hi = lo + p.lengths[i];
    std::vector<double> edges{lo, hi};
    for (double c : cuts)
      if (c > lo + 1e-12 && c < hi - 1e-12) edges.push_back(c);
    std::sort(edges.begin(), edges.end());
    const double wl = 1.0 / std::sqrt(p.stiffness[i]);
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
      for (int dir : {+1, -1}) {
        acc += wl * gauss_integrate([&](double x) { return g(i, x, dir); }, edges[e],
                                    edges[e + 1], rule);
      }
    }
  }
  return acc / (2.0 * p.optical_length());
}

}  // namespace detail

inline AveragingResult averaging_check(const SpectralData& data, const ModelDomain& model,
                                       const Profile1D& a, const Profile1D& b,
                                       const Profile1D& c, double t,
                                       const AveragingOptions& opt = {}) {
  const int jmax = static_cast<int>(data.size());
  if (opt.j_hi + opt.band > jmax)
    throw ConfigError("averaging_check: spectrum too short for the window plus band");
  if (opt.j_lo < 1 || opt.j_lo > opt.j_hi) throw ConfigError("averaging_check: bad window");
  const int lo_ext = std::max(1, opt.j_lo - opt.band);
  const int hi_ext = opt.j_hi + opt.band;
  const int rows = hi_ext - lo_ext + 1;
  const int wband = 2 * opt.band + 1;

  // banded matrix elements; a needs the double band |l-k| <= 2*band
  const int awidth = 4 * opt.band + 1;
  std::vector<double> Aband(static_cast<std::size_t>(rows) * awidth, 0.0);
  std::vector<double> Bband(static_cast<std::size_t>(rows) * wband, 0.0);
  std::vector<double> Cband(static_cast<std::size_t>(rows) * wband, 0.0);
  for (int l = lo_ext; l <= hi_ext; ++l) {
    for (int k = std::max(1, l - 2 * opt.band); k <= std::min(jmax, l + 2 * opt.band); ++k) {
      if (k < l) continue;  // fill symmetric halves together
      const double val = data.matrix_element(a, l, k);
      Aband[static_cast<std::size_t>(l - lo_ext) * awidth + (k - l + 2 * opt.band)] = val;
      if (k <= hi_ext && k - lo_ext >= 0)
        Aband[static_cast<std::size_t>(k - lo_ext) * awidth + (l - k + 2 * opt.band)] = val;
    }
    for (int k = std::max(1, l - opt.band); k <= std::min(jmax, l + opt.band); ++k) {
      if (k < l) continue;
      const double vb = data.matrix_element(b, l, k);
      const double vc = data.matrix_element(c, l, k);
      Bband[static_cast<std::size_t>(l - lo_ext) * wband + (k - l + opt.band)] = vb;
      Cband[static_cast<std::size_t>(l - lo_ext) * wband + (k - l + opt.band)] = vc;
      if (k <= hi_ext) {
        Bband[static_cast<std::size_t>(k - lo_ext) * wband + (l - k + opt.band)] = vb;
        Cband[static_cast<std::size_t>(k - lo_ext) * wband + (l - k + opt.band)] = vc;
      }
    }
  }
  auto aelem = [&](int l, int k) -> double {
    const int o = k - l + 2 * opt.band;
    if (o < 0 || o >= awidth) return 0.0;
    return Aband[static_cast<std::size_t>(l - lo_ext) * awidth + o];
  };
  auto belem = [&](int l, int k) -> double {
    const int o = k - l + opt.band;
    if (o < 0 || o >= wband) return 0.0;
    return Bband[static_cast<std::size_t>(l - lo_ext) * wband + o];
  };
  auto celem = [&](int l, int k) -> double {
    const int o = k - l + opt.band;
    if (o < 0 || o >= wband) return 0.0;
    return Cband[static_cast<std::size_t>(l - lo_ext) * wband + o];
  };

  const Profile1D b2 = b.times(b), c2 = c.times(c);
  const double sup_a = a.sup_bound(), sup_b = b.sup_bound(), sup_c = c.sup_bound();

  AveragingResult out;
  const Profile1D cab = c.times(a).times(b);
  double acc_q = 0.0, acc_qi = 0.0, acc_d = 0.0, acc_tail = 0.0;
  const int nJ = opt.j_hi - opt.j_lo + 1;
  for (int j = opt.j_lo; j <= opt.j_hi; ++j) {
    cplx Mj{0.0, 0.0};
    for (int l = std::max(1, j - opt.band); l <= std::min(jmax, j + opt.band); ++l) {
      double inner_re = 0.0, inner_im = 0.0;
      for (int k = std::max(1, j - opt.band); k <= std::min(jmax, j + opt.band); ++k) {
        const double alk_bkj = aelem(l, k) * belem(k, j);
        if (alk_bkj == 0.0) continue;
        inner_re += alk_bkj * std::cos(-data.omega[k - 1] * t);
        inner_im += alk_bkj * std::sin(-data.omega[k - 1] * t);
      }
      const cplx phase{std::cos(data.omega[l - 1] * t), std::sin(data.omega[l - 1] * t)};
      Mj += celem(j, l) * phase * cplx{inner_re, inner_im};
    }
    acc_q += Mj.real();
    acc_qi += Mj.imag();
    acc_d += data.matrix_element(cab, j, j);

    // Parseval tails of the banded truncation
    double inbandB = 0.0, inbandC = 0.0;
    for (int k = std::max(1, j - opt.band); k <= std::min(jmax, j + opt.band); ++k) {
      inbandB += belem(k, j) * belem(k, j);
      inbandC += celem(j, k) * celem(j, k);
    }
    const double tailB = std::max(0.0, data.matrix_element(b2, j, j) - inbandB);
    const double tailC = std::max(0.0, data.matrix_element(c2, j, j) - inbandC);
    acc_tail += sup_a * (sup_c * std::sqrt(tailB) + sup_b * std::sqrt(tailC));
  }
  out.quantum = acc_q / nJ;
  out.quantum_imag = acc_qi / nJ;
  out.quantum_direct_t0 = acc_d / nJ;
  out.tail_bound = acc_tail / nJ;
  if (out.tail_bound > opt.tail_tolerance)
    throw TruncationTailTooLarge("averaging_check: banded truncation tail " +
                                 std::to_string(out.tail_bound));

  // classical side: deterministic quadrature of c(y) b(y) Xi^d_t(a)(y, xi)
  std::vector<double> cuts;
  for (const auto* prof : {&a, &b, &c}) {
    for (const auto& pc : prof->pieces()) {
      cuts.push_back(pc.lo);
      cuts.push_back(pc.hi);
    }
  }
  Observable obs_a;
  obs_a.eval = [&a](const PhasePoint& q) { return a.eval(q.x[0]); };
  obs_a.sup = sup_a;
  auto integrand = [&](int layer, double x, int dir) {
    PhasePoint start;
    start.region = layer;
    start.x[0] = x;
    start.xi[0] = dir / std::sqrt(data.prob.stiffness[layer]);
    const XiResult xi = xi_diagonal(model, obs_a, t, start, opt.policy);
    return c.eval(x) * b.eval(x) * xi.value;
  };
  if (t == 0.0) {
    // identity: skip the branch trees entirely
    auto id_integrand = [&](int layer, double x, int dir) {
      (void)layer;
      (void)dir;
      return c.eval(x) * b.eval(x) * a.eval(x);
    };
    out.classical = detail::liouville_quadrature(data.prob, cuts, opt.quad_nodes, id_integrand);
    out.classical_refine = std::abs(
        detail::liouville_quadrature(data.prob, cuts, 2 * opt.quad_nodes, id_integrand) -
        out.classical);
  } else {
    out.classical = detail::liouville_quadrature(data.prob, cuts, opt.quad_nodes, integrand);
    out.classical_refine = std::abs(
        detail::liouville_quadrature(data.prob, cuts, 2 * opt.quad_nodes, integrand) -
        out.classical);
  }
  return out;
}

// V(N) = (1/N) sum_{j<=N} |<a phi_j, phi_j> - mean|^2 for each requested N.
inline std::vector<std::pair<int, double>> qe_variance(const SpectralData& data,
                                                       const Profile1D& a,
                                                       const std::vector<int>& Ns) {
  const double mean = liouville_mean(data.prob, a);
  std::vector<std::pair<int, double>> out;
  int maxN = 0;
  for (int N : Ns) maxN = std::max(maxN, N);
  if (maxN > static_cast<int>(data.size()))
    throw ConfigError("qe_variance: N exceeds available eigenpairs");
  std::vector<double> partial(maxN + 1, 0.0);
  for (int j = 1; j <= maxN; ++j) {
    const double d = data.matrix_element(a, j, j) - mean;
    partial[j] = partial[j - 1] + d * d;
  }
  for (int N : Ns) out.push_back({N, partial[N] / N});
  return out;
}

}  // namespace spectral
}  // namespace raysplit
