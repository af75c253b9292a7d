#include <doctest.h>

#include "amgan/errors.hpp"
#include "amgan/synth.hpp"
#include "amgan/vitals.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace amgan;
using namespace amgan::testing;

namespace {

constexpr double kPi = std::numbers::pi;

SubjectProfile steady_profile(double hr, double rr, double spo2) {
  SubjectProfile p;
  p.hr_trajectory.points = {{0.0, hr}};
  p.rr_trajectory.points = {{0.0, rr}};
  p.spo2_true = spo2;
  return p;
}

}  // namespace

TEST_CASE("estimate_hr: single tone and respiratory modulation") {
  const auto x = sinusoid(256, 32.0, 1.2, 1.0, 0.3);
  CHECK(estimate_hr(x, 32.0) == doctest::Approx(72.0).epsilon(0.6 / 72.0));
  Samples y(256);
  for (std::size_t i = 0; i < 256; ++i) {
    const double t = static_cast<double>(i) / 32.0;
    y[i] = std::sin(2 * kPi * 1.2 * t) * (1.0 + 0.3 * std::sin(2 * kPi * 0.3 * t)) + 0.4 * std::sin(2 * kPi * 0.3 * t);
  }
  CHECK(std::abs(estimate_hr(y, 32.0) - 72.0) <= 1.2);
  CHECK_THROWS_AS(estimate_hr(Samples(100, 0.0), 32.0), InvalidInput);
  CHECK_THROWS_AS(estimate_hr(Samples(256, 1.0), 32.0), LowQuality);
}

TEST_CASE("estimate_hr: simulator pulse train at 150 bpm") {
  const auto beats = beat_train(steady_profile(150.0, 15.0, 97.0), 8.0, 32.0);
  CHECK(std::abs(estimate_hr(beats, 32.0) - 150.0) <= 1.5);
}

TEST_CASE("estimate_hr is invariant to amplitude scaling") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = gaussian(256, rng, 0.3);
    const auto tone = sinusoid(256, 32.0, 0.8 + 0.1 * trial, 1.0, 0.0);
    for (std::size_t i = 0; i < 256; ++i) x[i] += tone[i];
    Samples y(x);
    for (double& v : y) v *= 37.5;
    CHECK(estimate_hr(x, 32.0) == doctest::Approx(estimate_hr(y, 32.0)).epsilon(1e-12));
  }
}

TEST_CASE("estimate_rr: AM carrier, unmodulated carrier and simulator") {
  Samples am(256);
  for (std::size_t i = 0; i < 256; ++i) {
    const double t = static_cast<double>(i) / 32.0;
    am[i] = (1.0 + 0.3 * std::sin(2 * kPi * 0.25 * t)) * std::sin(2 * kPi * 1.2 * t);
  }
  CHECK(std::abs(estimate_rr(am, 32.0) - 15.0) <= 1.0);
  CHECK_THROWS_AS(estimate_rr(sinusoid(256, 32.0, 1.2, 1.0, 0.0), 32.0), LowQuality);

  const auto pair = synth_record(steady_profile(80.0, 20.0, 97.0), ArtefactModel{}, 60.0, 32.0, 3);
  const auto filtered = bandpass(pair.clean.ppg(PpgChannel::green), 32.0, FilterSpec{});
  int good = 0, total = 0;
  for (const auto& f : make_windows(filtered.size(), WindowSpec{})) {
    const std::span<const double> w(filtered.data() + f.begin, f.length);
    ++total;
    if (std::abs(estimate_rr(w, 32.0) - 20.0) <= 2.0) ++good;
  }
  CHECK(good == total);
}

TEST_CASE("estimate_spo2: closed forms, prescribed ratios and scaling invariance") {
  CHECK(spo2_from_ratio(1.0) == doctest::Approx(87.5));
  CHECK(spo2_from_ratio(0.419) == doctest::Approx(100.0).epsilon(1e-4));
  CHECK(spo2_from_ratio(0.418) == 100.0);
  CHECK(spo2_from_ratio(0.42) == doctest::Approx(99.97));
  CHECK(spo2_from_ratio(5.0) == 50.0);

  for (double rho : {0.42, 0.6, 0.8, 1.0}) {
    const auto pair = synth_record(steady_profile(90.0, 15.0, 109.0 - 21.5 * rho), ArtefactModel{}, 8.0, 32.0, 4);
    const double s = estimate_spo2(pair.clean.ppg(PpgChannel::red), pair.clean.ppg(PpgChannel::infrared), 32.0);
    CHECK(std::abs(s - (109.0 - 21.5 * rho)) < 0.3);
  }

  const auto pair = synth_record(steady_profile(70.0, 12.0, 95.0), ArtefactModel{}, 8.0, 32.0, 5);
  Samples red = pair.clean.ppg(PpgChannel::red);
  const double s1 = estimate_spo2(red, pair.clean.ppg(PpgChannel::infrared), 32.0);
  for (double& v : red) v *= 3.7;
  const double s2 = estimate_spo2(red, pair.clean.ppg(PpgChannel::infrared), 32.0);
  CHECK(std::abs(s1 - s2) < 1e-9);
  CHECK_THROWS_AS(estimate_spo2(Samples(256, -1.0), Samples(256, 1.0), 32.0), InvalidInput);
  CHECK_THROWS_AS(estimate_spo2(Samples(256, 1.0), Samples(255, 1.0), 32.0), InvalidInput);
}

TEST_CASE("pearson_r: identities, oracle and affine invariance") {
  std::mt19937_64 rng(6);
  const auto a = gaussian(100, rng);
  Samples neg(a);
  for (double& v : neg) v = -v;
  CHECK(pearson_r(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson_r(a, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(pearson_r(a, Samples(100, 2.0)), Undefined);

  for (int trial = 0; trial < 50; ++trial) {
    const auto x = gaussian(64, rng);
    const auto y = gaussian(64, rng);
    // Textbook one-pass sums formula.
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
    }
    const double n = 64.0;
    const double oracle = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    CHECK(std::abs(pearson_r(x, y) - oracle) < 1e-12);

    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const double al = u(rng), be = u(rng), ga = u(rng), de = u(rng);
    Samples ax(x), gy(y);
    for (double& v : ax) v = al * v + be;
    for (double& v : gy) v = ga * v + de;
    const double sign = (al * ga > 0) ? 1.0 : -1.0;
    CHECK(std::abs(pearson_r(ax, gy) - sign * pearson_r(x, y)) < 1e-10);
  }
}

TEST_CASE("agreement: identity, hand computation and LOA coverage") {
  const Samples t = {80, 90, 100, 110};
  const auto same = agreement(t, t);
  CHECK(same.err1 == 0.0);
  CHECK(same.err2 == 0.0);
  CHECK(same.loa_low == 0.0);
  CHECK(same.loa_high == 0.0);
  CHECK(*same.fit_slope == doctest::Approx(1.0));
  CHECK(*same.fit_intercept == doctest::Approx(0.0).epsilon(1e-12));

  const Samples truth = {100, 100, 100, 100};
  const Samples est = {101, 99, 101, 99};
  const auto r = agreement(est, truth);
  CHECK(r.err1 == 1.0);
  CHECK(r.err2 == doctest::Approx(1.0));
  CHECK(r.mean_diff == 0.0);
  // Sample std of (+1,-1,+1,-1) is sqrt(4/3).
  CHECK(r.loa_high == doctest::Approx(2.263213055223333).epsilon(1e-12));
  CHECK(r.loa_low == doctest::Approx(-2.263213055223333).epsilon(1e-12));
  CHECK(r.sd == 0.0);
  CHECK_FALSE(r.fit_slope.has_value());
  CHECK_FALSE(r.pearson_r_overall.has_value());
  CHECK(r.loa_low <= r.loa_high);

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Samples tr(600), es(600);
    std::normal_distribution<double> d(0.0, 2.0);
    std::uniform_real_distribution<double> u(60.0, 160.0);
    for (std::size_t i = 0; i < 600; ++i) {
      tr[i] = u(rng);
      es[i] = tr[i] + 0.5 + d(rng);
    }
    const auto g = agreement(es, tr);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < 600; ++i) {
      const double df = es[i] - tr[i];
      if (df >= g.loa_low && df <= g.loa_high) ++inside;
    }
    CHECK(static_cast<double>(inside) >= 0.93 * 600.0);

    Samples shuffled(es);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(std::abs(pearson_r(shuffled, tr)) < *g.pearson_r_overall);
  }
}

TEST_CASE("median_filter") {
  const Samples x = {1, 9, 2, 8, 3, 7, 4};
  const auto m = median_filter(x, 5);
  CHECK(m[2] == 3.0);
  CHECK(m[3] == 7.0);
  CHECK(m[0] == 2.0);
  CHECK(m[5] == 5.5);
  CHECK(m[6] == 4.0);
  CHECK(median_filter(x, 1) == x);
}
