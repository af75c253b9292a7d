#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace amgan {

using Samples = std::vector<double>;

enum class PpgChannel { green, red, infrared };

std::string to_string(PpgChannel c);

// Synchronized PPG channel(s) plus triaxial acceleration at one sampling rate.
// Validated on construction and immutable afterwards.
class MultiChannelRecord {
 public:
  MultiChannelRecord(double sample_rate_hz, std::map<PpgChannel, Samples> ppg,
                     Samples acc_x, Samples acc_y, Samples acc_z);

  double sample_rate_hz() const { return sample_rate_hz_; }
  std::size_t length_samples() const { return length_; }
  double duration_seconds() const { return static_cast<double>(length_) / sample_rate_hz_; }

  bool has(PpgChannel c) const { return ppg_.count(c) != 0; }
  const Samples& ppg(PpgChannel c) const;
  const std::map<PpgChannel, Samples>& ppg_channels() const { return ppg_; }

  const Samples& acc_x() const { return acc_[0]; }
  const Samples& acc_y() const { return acc_[1]; }
  const Samples& acc_z() const { return acc_[2]; }
  const std::array<Samples, 3>& acc() const { return acc_; }

 private:
  double sample_rate_hz_;
  std::size_t length_;
  std::map<PpgChannel, Samples> ppg_;
  std::array<Samples, 3> acc_;
};

struct VelocityTriple {
  Samples v_x, v_y, v_z;
  double sample_rate_hz = 0.0;
};

struct WindowSpec {
  double window_seconds = 8.0;
  double hop_seconds = 1.0;
  double sample_rate_hz = 32.0;

  void validate() const;
  std::size_t window_samples() const;
  std::size_t hop_samples() const;
};

// Band-pass design parameters. `order` is the total band-pass order (number of
// poles), so the low-pass prototype has order/2 poles and the cascade has
// order/2 second-order sections.
struct FilterSpec {
  int order = 8;
  double low_cut_hz = 0.2;
  double high_cut_hz = 6.5;

  void validate(double sample_rate_hz) const;
  // Samples at each record edge whose filtered values are not trusted.
  std::size_t untrusted_edge_samples() const { return static_cast<std::size_t>(order) * 8; }
};

// Half-open sample range [begin, begin + length).
struct FrameRange {
  std::size_t begin = 0;
  std::size_t length = 0;
  std::size_t end() const { return begin + length; }
  bool operator==(const FrameRange&) const = default;
};

// One biquad in direct form II transposed, normalized so a0 == 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

using SosCascade = std::vector<Biquad>;

// v[i] = (1/fs) * sum_{j<=i} acc[j].
Samples integrate_velocity(std::span<const double> acc, double fs);

VelocityTriple integrate_velocity(const MultiChannelRecord& rec);

SosCascade design_butterworth_bandpass(double fs, const FilterSpec& spec);

// Causal cascade filter with zero initial state.
Samples sosfilt(const SosCascade& sos, std::span<const double> x);

// Zero-phase (forward-backward) filtering with odd-extension padding and
// steady-state initial conditions.
Samples sosfiltfilt(const SosCascade& sos, std::span<const double> x);

Samples bandpass(std::span<const double> x, double fs, const FilterSpec& spec);

// Kaiser-windowed sinc interpolation (beta 8). Output length is
// round(len * fs_out / fs_in).
Samples resample(std::span<const double> x, double fs_in, double fs_out);

std::vector<FrameRange> make_windows(std::size_t length_samples, const WindowSpec& spec);
std::vector<FrameRange> make_windows(const MultiChannelRecord& rec, const WindowSpec& spec);

// Resamples every channel of a record.
MultiChannelRecord resample(const MultiChannelRecord& rec, double fs_out);

double mean(std::span<const double> x);
double stddev(std::span<const double> x);  // sample (n-1) convention
double rms(std::span<const double> x);

}  // namespace amgan
