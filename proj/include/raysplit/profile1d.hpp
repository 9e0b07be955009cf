#pragma once

// Piecewise-trigonometric profiles a(x) = sum over pieces of
// 1_[lo,hi](x) * sum_k amp_k cos(w_k x + phi_k).
//
// Raised-cosine tapers, layer indicators and cosine observables all live in
// this class, and products against eigenfunction sinusoids integrate in
// closed form, which keeps spectral matrix elements at machine accuracy.
// Pieces are additive: overlapping pieces sum.

#include <algorithm>
#include <cmath>
#include <vector>

#include "raysplit/common.hpp"

namespace raysplit {

class Profile1D {
 public:
  struct Mode {
    double amp = 0.0;
    double freq = 0.0;
    double phase = 0.0;
  };
  struct Piece {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<Mode> modes;
  };

  Profile1D() = default;

  static Profile1D constant_on(double lo, double hi, double c) {
    Profile1D p;
    p.pieces_.push_back({lo, hi, {{c, 0.0, 0.0}}});
    return p;
  }

  static Profile1D cosine_on(double lo, double hi, double amp, double freq, double phase) {
    Profile1D p;
    p.pieces_.push_back({lo, hi, {{amp, freq, phase}}});
    return p;
  }

  // 0 -> 1 -> 0 window: raised-cosine ramps of width `ramp` inside [lo, hi],
  // flat plateau in between.
  static Profile1D raised_cosine_window(double lo, double hi, double ramp) {
    Profile1D p;
    if (!(hi - lo > 2.0 * ramp)) throw ConfigError("raised_cosine_window: interval too small");
    // up ramp: (1 - cos(pi (x-lo)/ramp)) / 2
    p.pieces_.push_back(
        {lo, lo + ramp, {{0.5, 0.0, 0.0}, {0.5, kPi / ramp, kPi - kPi * lo / ramp}}});
    p.pieces_.push_back({lo + ramp, hi - ramp, {{1.0, 0.0, 0.0}}});
    // down ramp: (1 + cos(pi (x-(hi-ramp))/ramp)) / 2
    p.pieces_.push_back(
        {hi - ramp, hi, {{0.5, 0.0, 0.0}, {0.5, kPi / ramp, -kPi * (hi - ramp) / ramp}}});
    return p;
  }

  bool empty() const { return pieces_.empty(); }
  const std::vector<Piece>& pieces() const { return pieces_; }

  double eval(double x) const {
    double acc = 0.0;
    for (const auto& pc : pieces_) {
      if (x < pc.lo || x > pc.hi) continue;
      for (const auto& md : pc.modes) acc += md.amp * std::cos(md.freq * x + md.phase);
    }
    return acc;
  }

  Profile1D& operator+=(const Profile1D& o) {
    pieces_.insert(pieces_.end(), o.pieces_.begin(), o.pieces_.end());
    return *this;
  }
  Profile1D operator+(const Profile1D& o) const {
    Profile1D r = *this;
    r += o;
    return r;
  }
  Profile1D scaled(double c) const {
    Profile1D r = *this;
    for (auto& pc : r.pieces_)
      for (auto& md : pc.modes) md.amp *= c;
    return r;
  }

  // Pointwise product (piece intersections, mode-by-mode cosine products).
  Profile1D times(const Profile1D& o) const {
    Profile1D r;
    for (const auto& a : pieces_) {
      for (const auto& b : o.pieces_) {
        const double lo = std::max(a.lo, b.lo), hi = std::min(a.hi, b.hi);
        if (!(hi > lo)) continue;
        Piece pc{lo, hi, {}};
        for (const auto& ma : a.modes) {
          for (const auto& mb : b.modes) {
            const double half = 0.5 * ma.amp * mb.amp;
            pc.modes.push_back({half, ma.freq - mb.freq, ma.phase - mb.phase});
            pc.modes.push_back({half, ma.freq + mb.freq, ma.phase + mb.phase});
          }
        }
        r.pieces_.push_back(std::move(pc));
      }
    }
    return r;
  }

  // integral over [lo, hi] of a(x) * cos(w x + phi); defaults integrate a.
  double integral_against_cos_on(double lo, double hi, double w = 0.0, double phi = 0.0) const {
    double acc = 0.0;
    for (const auto& pc : pieces_) {
      const double a = std::max(lo, pc.lo), b = std::min(hi, pc.hi);
      if (!(b > a)) continue;
      for (const auto& md : pc.modes) {
        acc += 0.5 * md.amp * integral_cos(md.freq - w, md.phase - phi, a, b);
        acc += 0.5 * md.amp * integral_cos(md.freq + w, md.phase + phi, a, b);
      }
    }
    return acc;
  }

  double integral_on(double lo, double hi) const { return integral_against_cos_on(lo, hi); }

  double integral() const {
    double acc = 0.0;
    for (const auto& pc : pieces_)
      for (const auto& md : pc.modes) acc += integral_cos(md.freq, md.phase, pc.lo, pc.hi);
    return acc;
  }

  // Cheap upper bound sup |a| <= max over x of sum of overlapping |amp|.
  double sup_bound() const {
    // collect breakpoints, sum |amp| of covering pieces on each subinterval
    std::vector<double> cuts;
    for (const auto& pc : pieces_) {
      cuts.push_back(pc.lo);
      cuts.push_back(pc.hi);
    }
    std::sort(cuts.begin(), cuts.end());
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
      double acc = 0.0;
      for (const auto& pc : pieces_) {
        if (mid < pc.lo || mid > pc.hi) continue;
        for (const auto& md : pc.modes) acc += std::abs(md.amp);
      }
      best = std::max(best, acc);
    }
    return best;
  }

  // Oscillation bound sup - inf, estimated on a dense grid (used only to set
  // test tolerances relative to the observable's spread).
  double osc_estimate(double lo, double hi, int n = 4096) const {
    double mn = 1e300, mx = -1e300;
    for (int i = 0; i <= n; ++i) {
      const double v = eval(lo + (hi - lo) * i / n);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    return mx - mn;
  }

 private:
  std::vector<Piece> pieces_;
};

}  // namespace raysplit
