#include "amgan/signal.hpp"

#include "amgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

namespace amgan {

std::string to_string(PpgChannel c) {
  switch (c) {
    case PpgChannel::green: return "green";
    case PpgChannel::red: return "red";
    case PpgChannel::infrared: return "ir";
  }
  return "?";
}

MultiChannelRecord::MultiChannelRecord(double sample_rate_hz, std::map<PpgChannel, Samples> ppg,
                                       Samples acc_x, Samples acc_y, Samples acc_z)
    : sample_rate_hz_(sample_rate_hz),
      length_(acc_x.size()),
      ppg_(std::move(ppg)),
      acc_{std::move(acc_x), std::move(acc_y), std::move(acc_z)} {
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw InvalidInput("record: sample rate must be positive and finite");
  }
  if (length_ == 0) throw InvalidInput("record: length must be at least one sample");
  if (ppg_.empty()) throw InvalidInput("record: at least one PPG channel is required");
  for (const auto& a : acc_) {
    if (a.size() != length_) throw InvalidInput("record: acceleration axes differ in length");
  }
  for (const auto& [tag, v] : ppg_) {
    if (v.size() != length_) {
      throw InvalidInput("record: PPG channel '" + to_string(tag) + "' has wrong length");
    }
  }
}

const Samples& MultiChannelRecord::ppg(PpgChannel c) const {
  auto it = ppg_.find(c);
  if (it == ppg_.end()) throw InvalidInput("record: missing PPG channel '" + to_string(c) + "'");
  return it->second;
}

void WindowSpec::validate() const {
  if (!(hop_seconds > 0.0) || !(window_seconds >= hop_seconds) || !(sample_rate_hz > 0.0)) {
    throw InvalidSpec("window spec: need window_seconds >= hop_seconds > 0 and positive rate");
  }
  const double w = window_seconds * sample_rate_hz;
  const double h = hop_seconds * sample_rate_hz;
  if (std::abs(w - std::round(w)) > 1e-9 || std::abs(h - std::round(h)) > 1e-9) {
    throw InvalidSpec("window spec: window and hop must be whole numbers of samples");
  }
}

std::size_t WindowSpec::window_samples() const {
  validate();
  return static_cast<std::size_t>(std::llround(window_seconds * sample_rate_hz));
}

std::size_t WindowSpec::hop_samples() const {
  validate();
  return static_cast<std::size_t>(std::llround(hop_seconds * sample_rate_hz));
}

void FilterSpec::validate(double sample_rate_hz) const {
  if (order <= 0 || order % 2 != 0) throw InvalidSpec("filter spec: order must be even and positive");
  if (!(low_cut_hz > 0.0) || !(high_cut_hz > low_cut_hz)) {
    throw InvalidSpec("filter spec: need 0 < low_cut_hz < high_cut_hz");
  }
  if (!(high_cut_hz < sample_rate_hz / 2.0)) {
    throw InvalidSpec("filter spec: high cut must lie below the Nyquist frequency");
  }
}

Samples integrate_velocity(std::span<const double> acc, double fs) {
  if (acc.empty()) throw InvalidInput("integrate_velocity: empty input");
  if (!(fs > 0.0) || !std::isfinite(fs)) throw InvalidInput("integrate_velocity: bad sample rate");
  Samples v(acc.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (!std::isfinite(acc[i])) throw InvalidInput("integrate_velocity: non-finite sample");
    sum += acc[i];
    v[i] = sum / fs;
  }
  return v;
}

VelocityTriple integrate_velocity(const MultiChannelRecord& rec) {
  const double fs = rec.sample_rate_hz();
  return {integrate_velocity(rec.acc_x(), fs), integrate_velocity(rec.acc_y(), fs),
          integrate_velocity(rec.acc_z(), fs), fs};
}

namespace {

using cplx = std::complex<double>;

cplx eval_biquad(const Biquad& s, double omega) {
  const cplx z1 = std::polar(1.0, -omega);
  const cplx z2 = z1 * z1;
  return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

// Steady-state DF-II-T state of one section under a unit step.
std::array<double, 2> step_state(const Biquad& s) {
  const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  return {gain - s.b0, s.b2 - s.a2 * gain};
}

void run_section(const Biquad& s, Samples& x, double z1, double z2) {
  for (double& v : x) {
    const double y = s.b0 * v + z1;
    z1 = s.b1 * v - s.a1 * y + z2;
    z2 = s.b2 * v - s.a2 * y;
    v = y;
  }
}

// Runs the cascade in place with initial states scaled by `x0`.
void run_cascade_steady(const SosCascade& sos, Samples& x, double x0) {
  double scale = x0;
  for (const auto& s : sos) {
    const auto zi = step_state(s);
    run_section(s, x, zi[0] * scale, zi[1] * scale);
    scale *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  }
}

}  // namespace

SosCascade design_butterworth_bandpass(double fs, const FilterSpec& spec) {
  spec.validate(fs);
  const int n = spec.order / 2;
  const double fs2 = 2.0 * fs;
  const double w1 = fs2 * std::tan(std::numbers::pi * spec.low_cut_hz / fs);
  const double w2 = fs2 * std::tan(std::numbers::pi * spec.high_cut_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  std::vector<cplx> zpoles;
  for (int k = 0; k < n; ++k) {
    const cplx p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n));
    const cplx half = p * bw / 2.0;
    const cplx disc = std::sqrt(half * half - w0 * w0);
    for (const cplx s : {half + disc, half - disc}) zpoles.push_back((fs2 + s) / (fs2 - s));
  }

  constexpr double kImagTol = 1e-12;
  std::vector<cplx> upper;
  std::vector<double> reals;
  for (const cplx z : zpoles) {
    if (z.imag() > kImagTol) {
      upper.push_back(z);
    } else if (std::abs(z.imag()) <= kImagTol) {
      reals.push_back(z.real());
    }
  }
  std::sort(reals.begin(), reals.end());

  SosCascade sos;
  for (const cplx z : upper) sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    sos.push_back({1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }
  if (sos.size() != static_cast<std::size_t>(n)) {
    throw InvalidSpec("butterworth design: unexpected pole pairing");
  }

  // Unit gain at the digital image of the geometric centre frequency.
  const double omega0 = 2.0 * std::atan(w0 / fs2);
  double mag = 1.0;
  for (const auto& s : sos) mag *= std::abs(eval_biquad(s, omega0));
  const double per_section = std::pow(mag, -1.0 / n);
  for (auto& s : sos) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return sos;
}

Samples sosfilt(const SosCascade& sos, std::span<const double> x) {
  Samples y(x.begin(), x.end());
  for (const auto& s : sos) run_section(s, y, 0.0, 0.0);
  return y;
}

Samples sosfiltfilt(const SosCascade& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw InvalidInput("sosfiltfilt: need at least two samples");
  const std::size_t padlen = std::min<std::size_t>(3 * (2 * sos.size() + 1), n - 1);

  Samples ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run_cascade_steady(sos, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  run_cascade_steady(sos, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  return Samples(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
                 ext.begin() + static_cast<std::ptrdiff_t>(padlen + n));
}

Samples bandpass(std::span<const double> x, double fs, const FilterSpec& spec) {
  spec.validate(fs);
  if (x.size() < static_cast<std::size_t>(3 * spec.order)) {
    throw InvalidInput("bandpass: input shorter than 3 * filter order");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("bandpass: non-finite sample");
  }
  return sosfiltfilt(design_butterworth_bandpass(fs, spec), x);
}

namespace {

constexpr double kKaiserBeta = 8.0;
constexpr double kZeroCrossings = 16.0;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

Samples resample(std::span<const double> x, double fs_in, double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) throw InvalidInput("resample: rates must be positive");
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("resample: non-finite sample");
  }
  if (fs_in == fs_out) return Samples(x.begin(), x.end());
  if (x.empty()) return {};

  const double ratio = fs_out / fs_in;
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * ratio));
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  const auto n = static_cast<std::ptrdiff_t>(x.size());

  Samples y(out_len, 0.0);
  for (std::size_t m = 0; m < out_len; ++m) {
    const double pos = static_cast<double>(m) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(pos - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor(pos + half_width)));
    double acc = 0.0;
    double wsum = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double t = pos - static_cast<double>(k);
      const double u = t / half_width;
      if (std::abs(u) >= 1.0) continue;
      const double win = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) / i0_beta;
      const double h = cutoff * sinc(cutoff * t) * win;
      acc += h * x[static_cast<std::size_t>(k)];
      wsum += h;
    }
    y[m] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return y;
}

MultiChannelRecord resample(const MultiChannelRecord& rec, double fs_out) {
  const double fs = rec.sample_rate_hz();
  std::map<PpgChannel, Samples> ppg;
  for (const auto& [tag, v] : rec.ppg_channels()) ppg.emplace(tag, resample(v, fs, fs_out));
  return MultiChannelRecord(fs_out, std::move(ppg), resample(rec.acc_x(), fs, fs_out),
                            resample(rec.acc_y(), fs, fs_out), resample(rec.acc_z(), fs, fs_out));
}

std::vector<FrameRange> make_windows(std::size_t length_samples, const WindowSpec& spec) {
  const std::size_t w = spec.window_samples();
  const std::size_t h = spec.hop_samples();
  if (length_samples < w) throw InvalidInput("make_windows: record shorter than one window");
  const std::size_t count = (length_samples - w) / h + 1;
  std::vector<FrameRange> frames;
  frames.reserve(count);
  for (std::size_t k = 0; k < count; ++k) frames.push_back({k * h, w});
  return frames;
}

std::vector<FrameRange> make_windows(const MultiChannelRecord& rec, const WindowSpec& spec) {
  if (std::abs(rec.sample_rate_hz() - spec.sample_rate_hz) > 1e-9 * spec.sample_rate_hz) {
    throw InvalidInput("make_windows: record rate differs from window spec rate");
  }
  return make_windows(rec.length_samples(), spec);
}

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return std::sqrt(ss / static_cast<double>(x.size()));
}

}  // namespace amgan
