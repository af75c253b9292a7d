#include "amgan/vitals.hpp"

#include "amgan/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

namespace amgan {

namespace {

constexpr double kQualityFactor = 3.0;
// Envelope fluctuation (relative to mean beat height) below which a window is
// treated as unmodulated.
constexpr double kMinEnvelopeDepth = 0.01;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> magnitude_spectrum(std::span<const double> x, std::size_t nfft) {
  double* in = fftw_alloc_real(nfft);
  fftw_complex* out = fftw_alloc_complex(nfft / 2 + 1);
  std::unique_ptr<double, decltype(&fftw_free)> in_guard(in, fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out_guard(out, fftw_free);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in, out, FFTW_ESTIMATE);
  std::fill(in, in + nfft, 0.0);
  std::copy(x.begin(), x.end(), in);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(out[k][0], out[k][1]);
  return mag;
}

void require_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput(std::string(what) + ": non-finite sample");
  }
}

}  // namespace

SpectralPeak spectral_peak(std::span<const double> x, double fs, double lo_hz, double hi_hz, std::size_t min_fft) {
  if (x.size() < 4) throw InvalidInput("spectral_peak: window too short");
  if (!(fs > 0.0) || !(lo_hz < hi_hz) || !(hi_hz <= fs / 2.0)) throw InvalidInput("spectral_peak: bad band");
  require_finite(x, "spectral_peak");
  const double m = mean(x);
  const std::size_t n = x.size();
  Samples w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
    w[i] = (x[i] - m) * hann;
  }
  const std::size_t nfft = next_pow2(std::max(min_fft, n));
  const auto mag = magnitude_spectrum(w, nfft);
  const double df = fs / static_cast<double>(nfft);
  const auto k_lo = static_cast<std::size_t>(std::ceil(lo_hz / df));
  const auto k_hi = std::min(static_cast<std::size_t>(std::floor(hi_hz / df)), mag.size() - 1);
  if (k_lo >= k_hi) throw InvalidInput("spectral_peak: band narrower than one bin");

  std::size_t best = k_lo;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    if (mag[k] > mag[best]) best = k;
  }
  std::vector<double> band(mag.begin() + static_cast<std::ptrdiff_t>(k_lo), mag.begin() + static_cast<std::ptrdiff_t>(k_hi) + 1);
  std::nth_element(band.begin(), band.begin() + static_cast<std::ptrdiff_t>(band.size() / 2), band.end());
  SpectralPeak p;
  p.band_median = band[band.size() / 2];
  p.magnitude = mag[best];
  double offset = 0.0;
  if (best > 0 && best + 1 < mag.size() && mag[best - 1] > 0.0 && mag[best + 1] > 0.0 && mag[best] > 0.0) {
    const double a = std::log(mag[best - 1]), b = std::log(mag[best]), c = std::log(mag[best + 1]);
    const double den = a - 2.0 * b + c;
    if (den < 0.0) offset = std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
  }
  p.freq_hz = (static_cast<double>(best) + offset) * df;
  return p;
}

double estimate_hr(std::span<const double> window, double fs) {
  if (static_cast<double>(window.size()) < 4.0 * fs) throw InvalidInput("estimate_hr: window shorter than 4 s");
  const auto p = spectral_peak(window, fs, kHrBandLowHz, kHrBandHighHz);
  if (!(p.magnitude >= kQualityFactor * p.band_median) || p.magnitude == 0.0) {
    throw LowQuality("estimate_hr: no spectral peak above the noise floor");
  }
  return 60.0 * p.freq_hz;
}

double estimate_rr(std::span<const double> window, double fs) {
  if (static_cast<double>(window.size()) < 4.0 * fs) throw InvalidInput("estimate_rr: window shorter than 4 s");
  require_finite(window, "estimate_rr");
  const double hr_hz = estimate_hr(window, fs) / 60.0;
  const std::size_t n = window.size();
  const double m = mean(window);
  // Beat maxima: highest sample within +-0.3 beat periods, refined parabolically.
  const auto reach = std::max<std::size_t>(1, static_cast<std::size_t>(0.3 * fs / hr_hz));
  std::vector<double> t, v;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const std::size_t lo = i >= reach ? i - reach : 0;
    const std::size_t hi = std::min(n - 1, i + reach);
    bool is_max = window[i] > m;
    for (std::size_t j = lo; j <= hi && is_max; ++j) {
      if (j != i && (window[j] > window[i] || (window[j] == window[i] && j < i))) is_max = false;
    }
    if (!is_max) continue;
    const double a = window[i - 1], b = window[i], c = window[i + 1];
    const double den = a - 2.0 * b + c;
    const double off = den < 0.0 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
    t.push_back(static_cast<double>(i) + off);
    v.push_back(b - 0.25 * (a - c) * off - m);
  }
  if (t.size() < 3) throw LowQuality("estimate_rr: too few beats for an envelope");
  const double vmean = mean(v);
  if (!(std::abs(vmean) > 0.0) || stddev(v) < kMinEnvelopeDepth * std::abs(vmean)) {
    throw LowQuality("estimate_rr: beat amplitudes carry no modulation");
  }
  Samples env(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i);
    while (k + 1 < t.size() && t[k + 1] < ti) ++k;
    if (ti <= t.front()) env[i] = v.front();
    else if (ti >= t.back()) env[i] = v.back();
    else env[i] = v[k] + (v[k + 1] - v[k]) * (ti - t[k]) / (t[k + 1] - t[k]);
  }
  const auto p = spectral_peak(env, fs, kRrBandLowHz, kRrBandHighHz, 8192);
  if (!(p.magnitude >= kQualityFactor * p.band_median)) {
    throw LowQuality("estimate_rr: no envelope peak above the noise floor");
  }
  return 60.0 * p.freq_hz;
}

double spo2_from_ratio(double rho) { return std::clamp(109.0 - 21.5 * rho, 50.0, 100.0); }

double estimate_spo2(std::span<const double> red, std::span<const double> ir, double fs) {
  if (red.size() != ir.size()) throw InvalidInput("estimate_spo2: channel lengths differ");
  const double dc_red = mean(red);
  const double dc_ir = mean(ir);
  if (!(dc_red > 0.0) || !(dc_ir > 0.0)) throw InvalidInput("estimate_spo2: DC component must be positive");
  const FilterSpec band{8, kHrBandLowHz, kHrBandHighHz};
  const double ac_red = rms(bandpass(red, fs, band));
  const double ac_ir = rms(bandpass(ir, fs, band));
  if (!(ac_ir > 0.0)) throw LowQuality("estimate_spo2: no pulsatile infrared component");
  return spo2_from_ratio((ac_red / dc_red) / (ac_ir / dc_ir));
}

double pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("pearson_r: length mismatch");
  if (a.size() < 2) throw InvalidInput("pearson_r: need at least two samples");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw Undefined("pearson_r: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

AgreementReport agreement(std::span<const double> estimates, std::span<const double> truths) {
  if (estimates.size() != truths.size()) throw InvalidInput("agreement: length mismatch");
  if (estimates.size() < 2) throw InvalidInput("agreement: need at least two pairs");
  const std::size_t n = estimates.size();
  Samples diff(n), absdiff(n);
  double pct = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truths[i] == 0.0) throw InvalidInput("agreement: zero ground truth");
    diff[i] = estimates[i] - truths[i];
    absdiff[i] = std::abs(diff[i]);
    pct += absdiff[i] / std::abs(truths[i]);
  }
  AgreementReport r;
  r.n = n;
  r.err1 = mean(absdiff);
  r.err2 = 100.0 * pct / static_cast<double>(n);
  r.sd = stddev(absdiff);
  r.mean_diff = mean(diff);
  const double sdd = stddev(diff);
  r.loa_low = r.mean_diff - 1.96 * sdd;
  r.loa_high = r.mean_diff + 1.96 * sdd;
  const double mt = mean(truths), me = mean(estimates);
  double stt = 0.0, ste = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    stt += (truths[i] - mt) * (truths[i] - mt);
    ste += (truths[i] - mt) * (estimates[i] - me);
  }
  if (stt > 0.0) {
    r.fit_slope = ste / stt;
    r.fit_intercept = me - *r.fit_slope * mt;
  }
  try {
    r.pearson_r_overall = pearson_r(estimates, truths);
  } catch (const Undefined&) {
  }
  return r;
}

Samples median_filter(std::span<const double> x, std::size_t width) {
  if (width == 0) throw InvalidInput("median_filter: width must be positive");
  const std::size_t half = width / 2;
  Samples out(x.size());
  std::vector<double> buf;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(x.size(), i + (width - half));
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(buf.begin(), buf.end());
    const std::size_t m = buf.size();
    out[i] = m % 2 ? buf[m / 2] : 0.5 * (buf[m / 2 - 1] + buf[m / 2]);
  }
  return out;
}

}  // namespace amgan
