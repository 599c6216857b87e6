#include <doctest.h>

#include <numeric>

#include "w2s/parallel.hpp"
#include "w2s/quadrature.hpp"
#include "w2s/rng.hpp"
#include "w2s/toml.hpp"

using namespace w2s;

TEST_CASE("blocked reductions match the serial reference bit for bit") {
  const std::int64_t n = 100003;
  auto term = [](std::int64_t i) { return std::sin(0.001 * static_cast<double>(i)); };
  const double par = blocked_sum(n, term, Exec::Parallel);
  const double ser = blocked_sum(n, term, Exec::Serial);
  CHECK(par == ser);

  std::vector<double> naive(n);
  for (std::int64_t i = 0; i < n; ++i) naive[i] = term(i);
  const double ref = std::accumulate(naive.begin(), naive.end(), 0.0);
  CHECK(par == doctest::Approx(ref).epsilon(1e-12));

  std::vector<double> acc_p(4, 0.0), acc_s(4, 0.0);
  auto body = [&](std::int64_t i, double* a) {
    const double v = term(i);
    a[0] += v;
    a[1] += v * v;
    a[2] += 1.0;
    a[3] += std::abs(v);
  };
  blocked_accumulate(n, 4, acc_p.data(), body, Exec::Parallel);
  blocked_accumulate(n, 4, acc_s.data(), body, Exec::Serial);
  for (int j = 0; j < 4; ++j) CHECK(acc_p[j] == acc_s[j]);
}

TEST_CASE("seed derivation is stable and sensitive to every field") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  const std::uint64_t s = derive_seed(42, "identify", 1000, 3);
  CHECK(s == derive_seed(42, "identify", 1000, 3));
  CHECK(s != derive_seed(43, "identify", 1000, 3));
  CHECK(s != derive_seed(42, "refine", 1000, 3));
  CHECK(s != derive_seed(42, "identify", 4000, 3));
  CHECK(s != derive_seed(42, "identify", 1000, 4));
}

TEST_CASE("rng streams are reproducible and well calibrated") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.u64() == b.u64());

  CHECK(detail::inv_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(detail::inv_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(detail::inv_normal_cdf(0.001) == doctest::Approx(-3.090232306167814).epsilon(1e-12));

  Rng rng(123);
  const int n = 200000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    m += z;
    m2 += z * z;
  }
  m /= n;
  m2 /= n;
  CHECK(std::abs(m) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("categorical draws hit the right frequencies") {
  Rng rng(5);
  VecD w = {0.2, 0.5, 0.3};
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[rng.categorical(w)];
  for (int k = 0; k < 3; ++k)
    CHECK(static_cast<double>(counts[k]) / n == doctest::Approx(w[k]).epsilon(0.05));
  CHECK_THROWS_AS(rng.categorical(VecD{0.0, 0.0}), NumericalError);
}

TEST_CASE("adaptive quadrature reproduces known integrals") {
  auto r = integrate([](double x) { return x * x; }, 0.0, 1.0);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // standard normal mass over a wide window
  auto g = integrate([](double y) { return std::exp(log_normal_pdf(y, 1.5, 0.3)); }, 1.5 - 12 * 0.3,
                     1.5 + 12 * 0.3);
  CHECK(g.converged);
  CHECK(g.value == doctest::Approx(1.0).epsilon(1e-10));

  // oscillatory integrand: int_0^10 cos(x) = sin(10)
  auto o = integrate([](double x) { return std::cos(x); }, 0.0, 10.0);
  CHECK(o.converged);
  CHECK(o.value == doctest::Approx(std::sin(10.0)).epsilon(1e-10));

  QuadratureConfig tight;
  tight.max_subdivisions = 1;
  tight.abs_tol = 1e-300;
  tight.rel_tol = 1e-16;
  auto bad = integrate([](double x) { return std::exp(-x * x) * std::cos(20 * x); }, -8.0, 8.0,
                       tight);
  CHECK_FALSE(bad.converged);
}

TEST_CASE("gauss-hermite rules integrate gaussian moments") {
  for (int dim = 1; dim <= 3; ++dim) {
    const double scale = 1.3;
    CHECK(gaussian_expectation([](const double*) { return 1.0; }, dim, scale) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(gaussian_expectation([](const double* x) { return x[0] * x[0]; }, dim, scale) ==
          doctest::Approx(scale * scale).epsilon(1e-10));
    CHECK(gaussian_expectation([](const double* x) { return x[0] * x[0] * x[0] * x[0]; }, dim,
                               scale) == doctest::Approx(3.0 * std::pow(scale, 4)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(gaussian_expectation([](const double*) { return 1.0; }, 4, 1.0),
                  ValidationError);
}

TEST_CASE("toml subset parser handles the config shapes we emit") {
  const std::string text = R"(
# comment
[system]
k = 2
x_scale = 1.5
name = "bench"
flag = true

[experts.strong]
beta = [[1.0, 2.0], [3.0, -4.0]]

[hmm]
transitions = [
  [[0.9, 0.1],
   [0.1, 0.9]],  # first component
  [[0.5, 0.5], [0.5, 0.5]],
]
ns = [1000, 4000]
)";
  const auto t = toml::Table::parse_string(text);
  CHECK(t.get_int("system.k") == 2);
  CHECK(t.get_double("system.x_scale") == 1.5);
  CHECK(t.get_string("system.name") == "bench");
  CHECK(t.get_bool("system.flag", false));
  const auto beta = t.get_matrix("experts.strong.beta");
  REQUIRE(beta.size() == 2);
  CHECK(beta[1][1] == -4.0);
  const auto trans = t.get_matrix_list("hmm.transitions");
  REQUIRE(trans.size() == 2);
  CHECK(trans[0][1][1] == 0.9);
  CHECK(trans[1][0][1] == 0.5);
  const auto ns = t.get_int_list("hmm.ns");
  CHECK(ns == std::vector<std::int64_t>{1000, 4000});
  CHECK(t.has_section("experts.strong"));
  CHECK_FALSE(t.has_section("experts.weak"));

  CHECK_THROWS_AS(toml::Table::parse_string("key"), ValidationError);
  CHECK_THROWS_AS(toml::Table::parse_string("a = [1, 2"), ValidationError);
  CHECK_THROWS_AS(toml::Table::parse_string("a = 1\na = 2"), ValidationError);
  CHECK_THROWS_AS(t.get_int("system.missing"), ValidationError);
}
