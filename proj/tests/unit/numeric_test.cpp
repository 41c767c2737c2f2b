#include "jmsel/numeric.hpp"

#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>

using namespace jmsel;

TEST_CASE("Gauss-Legendre rules integrate polynomials exactly") {
  for (int n : {1, 2, 5, 15, 30}) {
    const auto& r = gauss_legendre(n);
    CHECK(r.nodes.size() == static_cast<std::size_t>(n));
    CHECK(&r == &gauss_legendre(n));
    for (int p = 0; p <= 2 * n - 1; ++p) {
      const double exact = (std::pow(3.0, p + 1) - std::pow(-1.0, p + 1)) / (p + 1);
      CHECK(integrate(r, -1.0, 3.0, [p](double x) { return std::pow(x, p); }) ==
            doctest::Approx(exact).epsilon(1e-12));
    }
  }
  CHECK(integrate(gauss_legendre(15), 0.0, 1.0, [](double x) { return std::exp(x); }) ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
}

TEST_CASE("summation helpers") {
  std::vector<double> v{1e16, 1.0, -1e16, 1.0};
  CHECK(pairwise_sum(v) == pairwise_sum(v));
  std::vector<double> w(1000, 0.1);
  CHECK(pairwise_sum(w) == doctest::Approx(100.0).epsilon(1e-13));
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
  const std::vector<double> l{-1000.0, -1000.0};
  CHECK(log_sum_exp(l) == doctest::Approx(-1000.0 + std::log(2.0)));
  const std::vector<double> ninf{-INFINITY, std::log(3.0)};
  CHECK(log_sum_exp(ninf) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("streams are reproducible and distinct") {
  Rng a = make_stream(5, 1), b = make_stream(5, 1), c = make_stream(5, 2), d = make_stream(6, 1);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("distribution moments") {
  Rng rng = make_stream(99);
  const int n = 200000;
  auto check = [&](auto draw, double mean, double var) {
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = draw();
      s += x;
      s2 += x * x;
    }
    const double m = s / n, v = s2 / n - m * m;
    CHECK(std::abs(m - mean) < 4.0 * std::sqrt(var / n));
    CHECK(v == doctest::Approx(var).epsilon(0.03));
  };
  check([&] { return rand::gamma(rng, 2.5, 4.0); }, 2.5 / 4.0, 2.5 / 16.0);
  check([&] { return rand::beta(rng, 2.0, 3.0); }, 0.4, 6.0 / 150.0);
  check([&] { return rand::exponential(rng, 0.5); }, 2.0, 4.0);
  check([&] { return rand::half_normal(rng, 2.0); }, 2.0 * std::sqrt(2.0 / M_PI), 4.0 * (1.0 - 2.0 / M_PI));
  check([&] { return rand::normal(rng, 1.0, 3.0); }, 1.0, 9.0);
  // E[log G] = digamma(shape) for tiny shapes
  const double shape = 0.01;
  check([&] { return rand::log_gamma_variate(rng, shape); }, boost::math::digamma(shape),
        boost::math::trigamma(shape));
}

TEST_CASE("Dirichlet and categorical draws") {
  Rng rng = make_stream(3);
  const Eigen::VectorXd a = (Eigen::VectorXd(3) << 3.0, 2.0, 1.0).finished();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd lq = rand::log_dirichlet(rng, a);
    const std::vector<double> v(lq.data(), lq.data() + 3);
    CHECK(log_sum_exp(v) == doctest::Approx(0.0).epsilon(1e-12));
    mean += lq.array().exp().matrix();
  }
  mean /= n;
  for (int k = 0; k < 3; ++k) CHECK(mean[k] == doctest::Approx(a[k] / 6.0).epsilon(0.01));

  const std::vector<double> lw{std::log(0.2), std::log(0.5), std::log(0.3)};
  std::vector<int> count(3, 0);
  for (int i = 0; i < n; ++i) ++count[rand::categorical_log(rng, lw)];
  for (int k = 0; k < 3; ++k) CHECK(count[k] / double(n) == doctest::Approx(std::exp(lw[k])).epsilon(0.03));
}

TEST_CASE("multivariate draws") {
  Rng rng = make_stream(8);
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  const Eigen::MatrixXd prec = cov.inverse();
  const Eigen::VectorXd target = (Eigen::VectorXd(2) << 1.0, -2.0).finished();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2), w = s;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = rand::mvn_canonical(rng, prec, prec * target);
    m += x;
    s += (x - target) * (x - target).transpose();
    const Eigen::VectorXd y = rand::mvn(rng, cov);
    w += y * y.transpose();
  }
  m /= n;
  s /= n;
  w /= n;
  CHECK((m - target).norm() < 0.02);
  CHECK((s - cov).cwiseAbs().maxCoeff() < 0.04);
  CHECK((w - cov).cwiseAbs().maxCoeff() < 0.04);

  Eigen::MatrixXd iw = Eigen::MatrixXd::Zero(2, 2);
  const int m_iw = 50000;
  for (int i = 0; i < m_iw; ++i) iw += rand::inverse_wishart(rng, 8.0, cov);
  iw /= m_iw;
  CHECK((iw - cov / 5.0).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("densities") {
  CHECK(dens::log_normal(1.0, 1.0, 2.0) == doctest::Approx(-0.5 * std::log(2 * M_PI) - std::log(2.0)));
  CHECK(dens::log_half_cauchy(0.0) == doctest::Approx(std::log(2.0 / M_PI)));
  CHECK(dens::log_half_cauchy(2.0, 2.0) == doctest::Approx(std::log(2.0 / (M_PI * 2.0 * 2.0))));
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.5, 0.5, 1.0;
  const Eigen::VectorXd x = (Eigen::VectorXd(2) << 0.3, -0.7).finished();
  const double expect = -std::log(2 * M_PI) - 0.5 * std::log(cov.determinant()) - 0.5 * x.dot(cov.inverse() * x);
  CHECK(dens::log_mvn(x, cov) == doctest::Approx(expect).epsilon(1e-12));
  // Dirichlet(1,1) is uniform on the simplex: density 1
  const Eigen::VectorXd lq = (Eigen::VectorXd(2) << std::log(0.3), std::log(0.7)).finished();
  CHECK(dens::log_dirichlet(lq, Eigen::VectorXd::Ones(2)) == doctest::Approx(0.0));
  CHECK(binomial_coefficient(6, 2) == 15.0);
  CHECK(binomial_coefficient(10, 0) == 1.0);
}
