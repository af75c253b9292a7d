#include <doctest.h>

#include "amgan/errors.hpp"
#include "amgan/motion.hpp"
#include "amgan/oracle.hpp"
#include "test_util.hpp"

#include <Eigen/Dense>

using namespace amgan;
using namespace amgan::testing;

namespace {

MotionMatrix random_motion(std::size_t n, std::mt19937_64& rng) {
  std::array<Samples, kMotionColumns> cols;
  for (std::size_t j = 0; j < 3; ++j) {
    cols[j] = gaussian(n, rng);
    cols[j + 3] = integrate_velocity(cols[j], 32.0);
  }
  return MotionMatrix(std::move(cols));
}

Eigen::MatrixXd as_eigen(const MotionMatrix& m) {
  Eigen::MatrixXd a(m.length_samples(), kMotionColumns);
  for (std::size_t j = 0; j < kMotionColumns; ++j) {
    for (std::size_t i = 0; i < m.length_samples(); ++i) a(i, j) = m.column(j)[i];
  }
  return a;
}

// Projector onto range(a) via Householder QR with column pivoting.
Eigen::MatrixXd qr_projector(const Eigen::MatrixXd& a) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  const auto r = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), r);
  return q * q.transpose();
}

Samples qr_residual(std::span<const double> p, const MotionMatrix& m) {
  const Eigen::MatrixXd a = as_eigen(m);
  const Eigen::VectorXd pv = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  const Eigen::VectorXd r = pv - qr_projector(a) * pv;
  return Samples(r.data(), r.data() + r.size());
}

}  // namespace

TEST_CASE("jacobi_eigen diagonalises a symmetric matrix") {
  std::mt19937_64 rng(1);
  const auto x = gaussian(36, rng);
  Samples s(36);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) s[i * 6 + j] = x[i * 6 + j] + x[j * 6 + i];
  }
  const auto eig = jacobi_eigen(s, 6);
  for (std::size_t k = 1; k < 6; ++k) CHECK(eig.values[k - 1] >= eig.values[k]);
  for (std::size_t k = 0; k < 6; ++k) {
    for (std::size_t i = 0; i < 6; ++i) {
      double av = 0.0;
      for (std::size_t j = 0; j < 6; ++j) av += s[i * 6 + j] * eig.vectors[j * 6 + k];
      CHECK(std::abs(av - eig.values[k] * eig.vectors[i * 6 + k]) < 1e-12);
    }
  }
}

TEST_CASE("build_basis: unit pulses are already orthonormal") {
  const std::size_t n = 32;
  std::array<Samples, kMotionColumns> cols;
  for (std::size_t j = 0; j < kMotionColumns; ++j) {
    cols[j].assign(n, 0.0);
    cols[j][3 * j + 1] = 1.0;
  }
  const auto basis = build_basis(MotionMatrix(cols));
  CHECK(basis.rank == 6);
  // Every phi column equals +-1 of one unit pulse.
  for (std::size_t k = 0; k < basis.rank; ++k) {
    int hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::abs(basis.at(i, k));
      if (std::abs(v - 1.0) < 1e-12) ++hits;
      else CHECK(v < 1e-12);
    }
    CHECK(hits == 1);
  }
}

TEST_CASE("build_basis: exact dependence lowers the rank") {
  std::mt19937_64 rng(2);
  auto m = random_motion(128, rng);
  auto cols = m.columns();
  cols[3] = cols[0];
  for (double& v : cols[3]) v *= 2.0;
  const auto basis = build_basis(MotionMatrix(cols));
  CHECK(basis.rank <= 5);
}

TEST_CASE("build_basis: orthonormal and matches QR projector") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::array<Samples, kMotionColumns> cols;
    for (auto& c : cols) c = gaussian(256, rng);
    const MotionMatrix m(cols);
    const auto basis = build_basis(m);
    REQUIRE(basis.rank == 6);
    for (std::size_t a = 0; a < 6; ++a) {
      for (std::size_t b = 0; b < 6; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < 256; ++i) s += basis.at(i, a) * basis.at(i, b);
        CHECK(std::abs(s - (a == b ? 1.0 : 0.0)) < 1e-10);
      }
    }
    for (std::size_t k = 1; k < basis.rank; ++k) CHECK(basis.eigenvalues[k - 1] >= basis.eigenvalues[k]);
    const auto proj = basis.projector();
    const Eigen::MatrixXd oracle = qr_projector(as_eigen(m));
    double worst = 0.0;
    for (std::size_t i = 0; i < 256; ++i) {
      for (std::size_t j = 0; j < 256; ++j) worst = std::max(worst, std::abs(proj[i * 256 + j] - oracle(i, j)));
    }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("build_basis: zero motion") {
  std::array<Samples, kMotionColumns> cols;
  for (auto& c : cols) c.assign(20, 0.0);
  CHECK_THROWS_AS(build_basis(MotionMatrix(cols)), ZeroMotion);
  Samples p(20, 1.5);
  bool zero = false;
  CHECK(remove_motion_or_identity(p, MotionMatrix(cols), &zero) == p);
  CHECK(zero);
}

TEST_CASE("motion matrix invariants") {
  std::array<Samples, kMotionColumns> short_cols;
  for (auto& c : short_cols) c.assign(5, 1.0);
  CHECK_THROWS_AS(MotionMatrix{short_cols}, InvalidInput);
  std::array<Samples, kMotionColumns> ragged;
  for (auto& c : ragged) c.assign(10, 1.0);
  ragged[2].push_back(0.0);
  CHECK_THROWS_AS(MotionMatrix{ragged}, InvalidInput);
  std::array<Samples, kMotionColumns> bad;
  for (auto& c : bad) c.assign(10, 1.0);
  bad[1][4] = std::nan("");
  CHECK_THROWS_AS(MotionMatrix{bad}, InvalidInput);
}

TEST_CASE("remove_motion: subspace signals vanish, orthogonal signals survive") {
  std::mt19937_64 rng(4);
  const auto m = random_motion(256, rng);
  const auto basis = build_basis(m);
  const auto c = gaussian(basis.rank, rng);
  Samples p(256, 0.0);
  for (std::size_t i = 0; i < 256; ++i) {
    for (std::size_t j = 0; j < basis.rank; ++j) p[i] += basis.at(i, j) * c[j];
  }
  CHECK(norm2(remove_motion(p, basis)) < 1e-8 * norm2(p));

  const auto q = remove_motion(gaussian(256, rng), basis);
  const auto s = remove_motion(q, basis);
  for (std::size_t i = 0; i < 256; ++i) CHECK(std::abs(s[i] - q[i]) < 1e-10);
  CHECK_THROWS_AS(remove_motion(Samples(255, 0.0), basis), InvalidInput);
}

TEST_CASE("remove_motion: equals least-squares residual and is orthogonal to motion") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_motion(256, rng);
    const auto p = gaussian(256, rng);
    const auto s = remove_motion(p, build_basis(m));
    const auto oracle = oracle_least_squares(p, m);
    CHECK(rms_diff(s, oracle, 0, 256) < 1e-8 * rms_diff(p, Samples(256, 0.0), 0, 256));
    for (std::size_t j = 0; j < kMotionColumns; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 256; ++i) dot += s[i] * m.column(j)[i];
      CHECK(std::abs(dot) < 1e-8 * norm2(p) * norm2(m.column(j)));
    }
    CHECK(norm2(s) <= norm2(p) * (1.0 + 1e-12));
  }
}

TEST_CASE("projector is invariant to diagonal scaling of the motion columns") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> scale(0.05, 20.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_motion(128, rng);
    std::array<double, kMotionColumns> lambda{};
    for (auto& l : lambda) l = scale(rng);
    const auto p1 = build_basis(m).projector();
    const auto p2 = build_basis(m.scaled(lambda)).projector();
    double worst = 0.0;
    for (std::size_t i = 0; i < p1.size(); ++i) worst = std::max(worst, std::abs(p1[i] - p2[i]));
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("remove_motion scales linearly with the signal") {
  std::mt19937_64 rng(7);
  const auto basis = build_basis(random_motion(200, rng));
  const auto p = gaussian(200, rng);
  Samples lp(p);
  for (double& v : lp) v *= 3.25;
  const auto s = remove_motion(p, basis);
  const auto ls = remove_motion(lp, basis);
  for (std::size_t i = 0; i < 200; ++i) CHECK(ls[i] == doctest::Approx(3.25 * s[i]).epsilon(1e-12));
}

TEST_CASE("oracle_least_squares: sanity cases") {
  std::mt19937_64 rng(8);
  const auto m = random_motion(100, rng);
  Samples p(100, 0.0);
  const auto c = gaussian(6, rng);
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t j = 0; j < 6; ++j) p[i] += m.column(j)[i] * c[j];
  }
  CHECK(norm2(oracle_least_squares(p, m)) < 1e-9 * norm2(p));

  std::array<Samples, kMotionColumns> zero;
  for (auto& col : zero) col.assign(100, 0.0);
  const auto q = gaussian(100, rng);
  CHECK(oracle_least_squares(q, MotionMatrix(zero)) == q);
}

TEST_CASE("oracle_least_squares agrees with an independent QR computation") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_motion(256, rng);
    const auto p = gaussian(256, rng);
    const auto r1 = oracle_least_squares(p, m);
    const auto r2 = qr_residual(p, m);
    CHECK(rms_diff(r1, r2, 0, 256) < 1e-9);
  }
}
