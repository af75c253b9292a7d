#include <doctest.h>

#include "amgan/errors.hpp"
#include "amgan/record_csv.hpp"
#include "amgan/signal.hpp"
#include "test_util.hpp"

#include <complex>
#include <sstream>

using namespace amgan;
using namespace amgan::testing;

namespace {

// Mid-signal amplitude of a filtered sinusoid: max |y| away from the edges.
double mid_amplitude(const Samples& y) { return max_abs_range(y, y.size() / 4, 3 * y.size() / 4); }

double response_magnitude(const SosCascade& sos, double f, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * z1 + s.b2 * z1 * z1) / (1.0 + s.a1 * z1 + s.a2 * z1 * z1);
  return std::abs(h);
}

}  // namespace

TEST_CASE("integrate_velocity: closed-form cases") {
  CHECK(integrate_velocity(Samples{0, 0, 0, 0}, 32.0) == Samples{0, 0, 0, 0});
  const auto v = integrate_velocity(Samples{1, 1, 1, 1}, 4.0);
  REQUIRE(v.size() == 4);
  CHECK(v[0] == doctest::Approx(0.25));
  CHECK(v[1] == doctest::Approx(0.5));
  CHECK(v[2] == doctest::Approx(0.75));
  CHECK(v[3] == doctest::Approx(1.0));
}

TEST_CASE("integrate_velocity: matches dense lower-triangular product") {
  std::mt19937_64 rng(11);
  const auto acc = gaussian(64, rng);
  const double fs = 32.0;
  const auto v = integrate_velocity(acc, fs);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    double zi = 0.0;
    for (std::size_t j = 0; j < acc.size(); ++j) zi += (j <= i ? 1.0 : 0.0) * acc[j];
    CHECK(v[i] == doctest::Approx(zi / fs).epsilon(1e-12));
  }
  CHECK(v[0] == acc[0] / fs);
}

TEST_CASE("integrate_velocity: linear and monotone for non-negative input") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = gaussian(100, rng);
    const auto b = gaussian(100, rng);
    const double alpha = 1.7, beta = -0.3;
    Samples mix(100);
    for (std::size_t i = 0; i < 100; ++i) mix[i] = alpha * a[i] + beta * b[i];
    const auto va = integrate_velocity(a, 32.0);
    const auto vb = integrate_velocity(b, 32.0);
    const auto vm = integrate_velocity(mix, 32.0);
    for (std::size_t i = 0; i < 100; ++i) CHECK(std::abs(vm[i] - (alpha * va[i] + beta * vb[i])) < 1e-12);
  }
  Samples pos(50);
  for (auto& x : pos) x = std::abs(gaussian(1, rng)[0]);
  const auto v = integrate_velocity(pos, 10.0);
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] >= v[i - 1]);
}

TEST_CASE("integrate_velocity: errors") {
  CHECK_THROWS_AS(integrate_velocity(Samples{}, 32.0), InvalidInput);
  CHECK_THROWS_AS(integrate_velocity(Samples{1.0, std::nan("")}, 32.0), InvalidInput);
}

TEST_CASE("butterworth design matches reference magnitude response") {
  // |H| of scipy.signal.butter(4, [0.2, 6.5], 'band', fs=32) at these frequencies.
  const auto sos = design_butterworth_bandpass(32.0, FilterSpec{});
  REQUIRE(sos.size() == 4);
  CHECK(response_magnitude(sos, 0.2, 32.0) == doctest::Approx(0.7071067811863859).epsilon(1e-8));
  CHECK(response_magnitude(sos, 3.0, 32.0) == doctest::Approx(0.9998777033941394).epsilon(1e-8));
  CHECK(response_magnitude(sos, 6.5, 32.0) == doctest::Approx(0.7071067811865479).epsilon(1e-8));
  CHECK(response_magnitude(sos, 8.0, 32.0) == doctest::Approx(0.2769126361719239).epsilon(1e-8));
  CHECK(response_magnitude(sos, 0.0, 32.0) < 1e-12);
}

TEST_CASE("sosfiltfilt matches reference zero-phase output") {
  // scipy.signal.sosfiltfilt on x[i] = sin(0.3 i) + 0.5 cos(1.7 i) + 0.01 i.
  Samples x(300);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i);
    x[i] = std::sin(0.3 * t) + 0.5 * std::cos(1.7 * t) + 0.01 * t;
  }
  const auto y = bandpass(x, 32.0, FilterSpec{});
  CHECK(y[0] == doctest::Approx(0.15293066607931044).epsilon(1e-7));
  CHECK(y[1] == doctest::Approx(-0.04595713793889922).epsilon(1e-7));
  CHECK(y[50] == doctest::Approx(0.6183493746743982).epsilon(1e-7));
  CHECK(y[150] == doctest::Approx(0.7256459209135052).epsilon(1e-7));
  CHECK(y[298] == doctest::Approx(-0.5058655892179021).epsilon(1e-7));
  CHECK(y[299] == doctest::Approx(-0.13367665144678775).epsilon(1e-7));
}

TEST_CASE("bandpass: DC rejection, pass-band and stop-band") {
  const FilterSpec spec;
  const Samples dc(1024, 5.0);
  const auto y = bandpass(dc, 32.0, spec);
  REQUIRE(y.size() == dc.size());
  CHECK(max_abs_range(y, 64, 1024 - 64) < 0.05);

  const auto pass = bandpass(sinusoid(1024, 32.0, 1.5), 32.0, spec);
  CHECK(mid_amplitude(pass) >= 0.95);
  CHECK(mid_amplitude(pass) <= 1.05);

  const auto stop = bandpass(sinusoid(1024, 32.0, 10.0), 32.0, spec);
  CHECK(mid_amplitude(stop) < 0.05);
}

TEST_CASE("bandpass: DC attenuation of at least 40 dB") {
  const auto sos = design_butterworth_bandpass(32.0, FilterSpec{});
  CHECK(20.0 * std::log10(response_magnitude(sos, 1e-4, 32.0)) < -40.0);
}

TEST_CASE("bandpass: linear time-invariant mid-signal") {
  std::mt19937_64 rng(5);
  const std::size_t n = 3000;
  const auto x = gaussian(n, rng);
  const std::size_t shift = 17;
  Samples shifted(n, 0.0);
  for (std::size_t i = shift; i < n; ++i) shifted[i] = x[i - shift];
  const auto y = bandpass(x, 32.0, FilterSpec{});
  const auto ys = bandpass(shifted, 32.0, FilterSpec{});
  // Slowest pole has |z| ~ 0.963, so edge transients fall below 1e-8 after ~500 samples.
  for (std::size_t i = 1400; i < 1600; ++i) CHECK(std::abs(ys[i] - y[i - shift]) < 1e-8);

  const auto x2 = gaussian(n, rng);
  Samples mix(n);
  for (std::size_t i = 0; i < n; ++i) mix[i] = 2.0 * x[i] - 0.5 * x2[i];
  const auto y2 = bandpass(x2, 32.0, FilterSpec{});
  const auto ym = bandpass(mix, 32.0, FilterSpec{});
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ym[i] - (2.0 * y[i] - 0.5 * y2[i])) < 1e-9);
}

TEST_CASE("bandpass: errors") {
  CHECK_THROWS_AS(bandpass(Samples(100, 1.0), 12.0, FilterSpec{8, 0.2, 6.5}), InvalidSpec);
  CHECK_THROWS_AS(bandpass(Samples(100, 1.0), 32.0, FilterSpec{7, 0.2, 6.5}), InvalidSpec);
  CHECK_THROWS_AS(bandpass(Samples(23, 1.0), 32.0, FilterSpec{}), InvalidInput);
  CHECK_NOTHROW(bandpass(Samples(24, 1.0), 32.0, FilterSpec{}));
}

TEST_CASE("resample: identity, sinusoid and constants") {
  std::mt19937_64 rng(3);
  const auto x = gaussian(77, rng);
  CHECK(resample(x, 32.0, 32.0) == x);

  const auto hi = sinusoid(1024, 256.0, 1.0);
  const auto lo = resample(hi, 256.0, 32.0);
  REQUIRE(lo.size() == 128);
  const auto truth = sinusoid(128, 32.0, 1.0);
  CHECK(rms_diff(lo, truth, 16, 112) < 0.02);

  const auto c = resample(Samples(1250, 3.0), 125.0, 32.0);
  REQUIRE(c.size() == 320);
  for (std::size_t i = 20; i < 300; ++i) CHECK(std::abs(c[i] - 3.0) < 1e-6);
}

TEST_CASE("resample: down then up preserves band-limited content") {
  const double fs = 128.0;
  const std::size_t n = 1024;
  Samples x(n, 0.0);
  const auto a = sinusoid(n, fs, 0.7, 1.0, 0.3);
  const auto b = sinusoid(n, fs, 2.1, 0.5, 1.1);
  const auto c = sinusoid(n, fs, 3.6, 0.3, 2.0);
  for (std::size_t i = 0; i < n; ++i) x[i] = a[i] + b[i] + c[i];
  const auto down = resample(x, fs, 32.0);
  const auto up = resample(down, 32.0, fs);
  REQUIRE(up.size() == n);
  CHECK(rms_diff(up, x, 128, n - 128) < 0.03);
}

TEST_CASE("resample: errors") {
  CHECK_THROWS_AS(resample(Samples{1.0, std::numeric_limits<double>::infinity()}, 10, 5), InvalidInput);
  CHECK_THROWS_AS(resample(Samples{1.0}, 0.0, 5), InvalidInput);
}

TEST_CASE("make_windows: counts and offsets") {
  const WindowSpec spec;
  CHECK(make_windows(256, spec).size() == 1);
  const auto frames = make_windows(320, spec);
  REQUIRE(frames.size() == 3);
  CHECK(frames[0] == FrameRange{0, 256});
  CHECK(frames[1] == FrameRange{32, 256});
  CHECK(frames[2] == FrameRange{64, 256});
  CHECK_THROWS_AS(make_windows(255, spec), InvalidInput);
}

TEST_CASE("make_windows: closed-form count over random triples") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> wd(1, 400);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = wd(rng);
    const int h = std::uniform_int_distribution<int>(1, w)(rng);
    const int l = std::uniform_int_distribution<int>(w, 5000)(rng);
    const WindowSpec spec{static_cast<double>(w), static_cast<double>(h), 1.0};
    const auto frames = make_windows(static_cast<std::size_t>(l), spec);
    REQUIRE(frames.size() == static_cast<std::size_t>((l - w) / h + 1));
    CHECK(frames.back().end() <= static_cast<std::size_t>(l));
  }
}

TEST_CASE("window spec validation") {
  CHECK_THROWS_AS(WindowSpec({1.0, 2.0, 32.0}).validate(), InvalidSpec);
  CHECK_THROWS_AS(WindowSpec({8.0, 1.0, 32.1}).window_samples(), InvalidSpec);
}

TEST_CASE("record invariants") {
  std::map<PpgChannel, Samples> ppg{{PpgChannel::green, Samples(10, 1.0)}};
  CHECK_NOTHROW(MultiChannelRecord(32.0, ppg, Samples(10), Samples(10), Samples(10)));
  CHECK_THROWS_AS(MultiChannelRecord(32.0, ppg, Samples(9), Samples(10), Samples(10)), InvalidInput);
  CHECK_THROWS_AS(MultiChannelRecord(0.0, ppg, Samples(10), Samples(10), Samples(10)), InvalidInput);
  CHECK_THROWS_AS(MultiChannelRecord(32.0, {}, Samples(10), Samples(10), Samples(10)), InvalidInput);
  CHECK_THROWS_AS(MultiChannelRecord(32.0, {}, Samples(), Samples(), Samples()), InvalidInput);
}

TEST_CASE("record csv: round trip infers sample rate") {
  std::mt19937_64 rng(8);
  std::map<PpgChannel, Samples> ppg{{PpgChannel::green, gaussian(50, rng)},
                                    {PpgChannel::red, gaussian(50, rng)},
                                    {PpgChannel::infrared, gaussian(50, rng)}};
  const MultiChannelRecord rec(125.0, ppg, gaussian(50, rng), gaussian(50, rng), gaussian(50, rng));
  std::stringstream ss;
  write_record_csv(ss, rec);
  CHECK(ss.str().rfind("t,ppg_green,ppg_red,ppg_ir,ax,ay,az\n", 0) == 0);
  const auto back = read_record_csv(ss);
  CHECK(back.sample_rate_hz() == 125.0);
  CHECK(back.ppg(PpgChannel::red) == rec.ppg(PpgChannel::red));
  CHECK(back.acc_z() == rec.acc_z());
}

TEST_CASE("record csv: rejects malformed input") {
  {
    std::stringstream ss("t,ppg_green,ax,ay,az\n0,1,0,0,0\n0.1,1,0,0,0\n0.3,1,0,0,0\n");
    CHECK_THROWS_AS(read_record_csv(ss), InvalidInput);
  }
  {
    std::stringstream ss("t,ppg_green,ax,ay,az\n0,1,0,0,0\n0,1,0,0,0\n");
    CHECK_THROWS_AS(read_record_csv(ss), InvalidInput);
  }
  {
    std::stringstream ss("t,ax,ay,az\n0,0,0,0\n1,0,0,0\n");
    CHECK_THROWS_AS(read_record_csv(ss), InvalidInput);
  }
  {
    std::stringstream ss("t,ppg_green,ax,ay,az\n0,1,0,0,0\n0.5,x,0,0,0\n");
    CHECK_THROWS_AS(read_record_csv(ss), InvalidInput);
  }
  {
    std::stringstream ss("t,ppg_green,ax,ay,az\n0,1,0,0,0\n0.5,2,0,0,0\n");
    const auto rec = read_record_csv(ss);
    CHECK(rec.sample_rate_hz() == 2.0);
    CHECK(!rec.has(PpgChannel::red));
  }
}
