// Seeded random number generation with a stable draw sequence.
//
// All sampling in the library flows through Rng so that datasets and Monte
// Carlo estimates are pure functions of their seeds. Distributions are mapped
// from raw 64-bit draws by fixed formulas (no std::*_distribution, whose
// output is implementation-defined).

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "w2s/common.hpp"

namespace w2s {

// FNV-1a over a textual rendering of the inputs. Documented in the README;
// adding a strategy or n never perturbs the seeds of existing rows.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag,
                                 std::uint64_t n, std::uint64_t replicate) {
  return fnv1a64("w2s|" + std::to_string(base) + "|" + tag + "|" + std::to_string(n) +
                 "|" + std::to_string(replicate));
}

namespace detail {
// Wichura's AS241 (PPND16): inverse standard normal CDF, ~1e-15 accurate.
inline double inv_normal_cdf(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0 ? -v : v;
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }

  // Uniform on the open interval (0,1); safe for inverse-CDF transforms.
  double uniform() { return (static_cast<double>(u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() { return detail::inv_normal_cdf(uniform()); }

  void fill_normal(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
  }

  // Index k with probability w[k] / sum(w); weights need not be normalized.
  int categorical(const VecD& w) {
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) throw NumericalError("categorical: no positive weight");
    double u = uniform() * total;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      u -= w[k];
      if (u <= 0.0) return static_cast<int>(k);
    }
    return static_cast<int>(w.size()) - 1;
  }

  int uniform_int(int n) { return static_cast<int>(u64() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace w2s
