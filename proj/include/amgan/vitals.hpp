#pragma once

#include "amgan/signal.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace amgan {

inline constexpr double kHrBandLowHz = 0.7;
inline constexpr double kHrBandHighHz = 4.0;
inline constexpr double kRrBandLowHz = 0.1;
inline constexpr double kRrBandHighHz = 1.0;

struct SpectralPeak {
  double freq_hz = 0.0;
  double magnitude = 0.0;
  double band_median = 0.0;
};

// Magnitude spectrum peak of a mean-removed, Hann-tapered window zero-padded to
// at least min_fft points, restricted to [lo_hz, hi_hz] and refined by
// parabolic interpolation of the log magnitude.
SpectralPeak spectral_peak(std::span<const double> x, double fs, double lo_hz, double hi_hz,
                           std::size_t min_fft = 2048);

// Beats per minute. Throws LowQuality when the in-band peak is below three
// times the in-band median magnitude.
double estimate_hr(std::span<const double> window, double fs);

// Breaths per minute from the spectrum of the beat-amplitude envelope.
double estimate_rr(std::span<const double> window, double fs);

// 109 - 21.5 * rho, clamped to [50, 100]; AC is the RMS of the 0.7-4 Hz
// band-passed window, DC the mean of the raw window.
double estimate_spo2(std::span<const double> red, std::span<const double> ir, double fs);

double spo2_from_ratio(double rho);

// Throws Undefined when either input is constant.
double pearson_r(std::span<const double> a, std::span<const double> b);

struct AgreementReport {
  std::size_t n = 0;
  double err1 = 0.0;
  double err2 = 0.0;
  double sd = 0.0;
  double mean_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  // Undefined when either series is constant.
  std::optional<double> pearson_r_overall;
  std::optional<double> fit_slope;
  std::optional<double> fit_intercept;
};

AgreementReport agreement(std::span<const double> estimates, std::span<const double> truths);

// Sliding median over `width` samples; windows shrink at the edges.
Samples median_filter(std::span<const double> x, std::size_t width = 5);

struct VitalsFrame {
  std::size_t window_index = 0;
  double t0 = 0.0;
  std::optional<double> hr_bpm;
  std::optional<double> rr_bpm;
  std::optional<double> spo2_pct;
  std::optional<double> pearson_r;
};

}  // namespace amgan
