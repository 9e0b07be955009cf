#pragma once

// Shared numeric primitives: small vectors, tolerances, error types,
// seed splitting and Gauss-Legendre rules used across the library.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace raysplit {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Default tolerances; model/policy structs may override the first two.
inline constexpr double kGrazingTol = 1e-8;   // unit-conormal component threshold
inline constexpr double kCornerTol = 1e-10;   // chart distance to a declared singular point
inline constexpr double kOnShellTol = 1e-12;  // |g(x,xi) - 1| for on-shell points
inline constexpr double kMergeTol = 1e-7;     // endpoint grouping distance

struct NumericDegeneracy : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GrazingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TotalReflectionInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotInYMinus : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RootBracketFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct QuadratureNotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncationTailTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& v) { return std::sqrt(dot(v, v)); }
inline Vec2 perp(const Vec2& v) { return {-v.y, v.x}; }  // rotate by +pi/2

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return {v.x / n, v.y / n, v.z / n};
}

inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  // fmod can return exactly 2*pi after the correction when a is a tiny negative number
  if (a >= kTwoPi) a -= kTwoPi;
  return a;
}

// Shortest signed circular difference a - b on [0, 2pi).
inline double circ_diff(double a, double b) {
  double d = std::fmod(a - b, kTwoPi);
  if (d > kPi) d -= kTwoPi;
  if (d < -kPi) d += kTwoPi;
  return d;
}

// 2x2 real matrix, used for transverse Jacobi propagation.
struct Mat2 {
  // row-major: [a b; c d]
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  static Mat2 identity() { return {}; }
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
  double det() const { return a * d - b * c; }
};

// SplitMix64; documented seed-splitting rule: stream k of master seed s is
// splitmix(s ^ (0x9E3779B97F4A7C15 * (k+1))). Every sampler derives its
// generator this way so runs are reproducible for any thread count.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ (0x9E3779B97F4A7C15ull * (index + 1)));
}

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n) {
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    r.weights[n - 1 - i] = r.weights[i];
  }
  return r;
}

// Integral of f over [a,b] with an n-point Gauss rule.
template <typename F>
double gauss_integrate(const F& f, double a, double b, const GaussRule& rule) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return acc * half;
}

// int_{x0}^{x1} cos(w x + phi) dx, stable for small |w|.
inline double integral_cos(double w, double phi, double x0, double x1) {
  if (std::abs(w) > 1e-8) return (std::sin(w * x1 + phi) - std::sin(w * x0 + phi)) / w;
  // Taylor in w around w = 0: cos(wx+phi) = cos(phi) - w x sin(phi) - (wx)^2/2 cos(phi) + ...
  const double c = std::cos(phi), s = std::sin(phi);
  const double d1 = x1 - x0;
  const double d2 = 0.5 * (x1 * x1 - x0 * x0);
  const double d3 = (x1 * x1 * x1 - x0 * x0 * x0) / 3.0;
  return c * d1 - w * s * d2 - 0.5 * w * w * c * d3;
}

// i^theta for integer theta (theta may be negative).
inline cplx i_pow(long long theta) {
  switch (((theta % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

// FNV-1a 64-bit, used for config hashes in run manifests.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace raysplit
