#pragma once

#include "amgan/motion.hpp"
#include "amgan/signal.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace amgan {

struct TrajectoryPoint {
  double t = 0.0;
  double value = 0.0;
};

// Piecewise-linear function of time, held constant outside its knots.
struct Trajectory {
  std::vector<TrajectoryPoint> points;

  double at(double t) const;
  double min_value() const;
  double max_value() const;
};

// One Gaussian bump of the beat template. Width and offset are fractions of
// the beat period.
struct PulseComponent {
  double amplitude = 1.0;
  double width = 0.1;
  double offset = 0.25;
};

struct SubjectProfile {
  Trajectory hr_trajectory;  // beats/min
  Trajectory rr_trajectory;  // breaths/min
  double spo2_true = 97.0;
  std::vector<PulseComponent> pulse_shape = {{1.0, 0.08, 0.22}, {0.35, 0.10, 0.52}};
  // AC/DC ratio of the green and infrared channels. Red is derived from the
  // infrared value and spo2_true.
  std::map<PpgChannel, double> perfusion = {{PpgChannel::green, 0.02}, {PpgChannel::infrared, 0.015}};
  std::map<PpgChannel, double> baseline = {
      {PpgChannel::green, 1000.0}, {PpgChannel::red, 800.0}, {PpgChannel::infrared, 1200.0}};
  // Depth of the respiratory amplitude modulation of each beat.
  double resp_modulation = 0.25;

  void validate() const;
  // (109 - spo2) / 21.5
  double ratio_of_ratios() const;
  double channel_perfusion(PpgChannel c) const;
};

struct Sinusoid {
  double freq_hz = 1.0;
  double amplitude = 1.0;
  double phase = 0.0;
};

struct ArtefactModel {
  // Noise = motion * xi over the columns (a_x, a_y, a_z, v_x, v_y, v_z), with
  // velocity integrated from the raw acceleration.
  std::array<double, kMotionColumns> xi{};
  std::array<std::vector<Sinusoid>, 3> acc_generators;
  double jitter_sigma = 0.0;
  double nonlinear_gain = 0.0;
  // When non-empty, each axis also carries a sinusoid phase-locked to the
  // instantaneous heart rate with this amplitude (collision scenario).
  std::array<double, 3> hr_locked_amplitude{};
  std::array<double, 3> hr_locked_phase{};
  // Per-channel multiplier of the noise relative to that channel's pulse size.
  std::map<PpgChannel, double> channel_gain = {
      {PpgChannel::green, 1.0}, {PpgChannel::red, 1.0}, {PpgChannel::infrared, 1.0}};

  void validate() const;
  bool has_motion() const;
};

// Diagonal motion scaling and signal scaling used by invariance checks.
struct ScalingFixture {
  std::array<double, kMotionColumns> lambda_diag{1, 1, 1, 1, 1, 1};
  double signal_scale = 1.0;

  void validate() const;
};

struct SynthPair {
  MultiChannelRecord clean;
  MultiChannelRecord noisy;
};

SynthPair synth_record(const SubjectProfile& profile, const ArtefactModel& artefact, double duration_s, double fs,
                       std::uint64_t seed);

// Clean pulsatile component of one channel (no DC), before respiration is
// folded into the amplitude; exposed for calibration and tests.
Samples beat_train(const SubjectProfile& profile, double duration_s, double fs);

// |c_k| / |c_1| of the pulse template's Fourier series over one beat.
double harmonic_ratio(const std::vector<PulseComponent>& shape, int k = 2);

// Ratio of band-passed noise RMS to band-passed clean RMS on one channel.
double artefact_intensity(const SynthPair& pair, const FilterSpec& fspec, PpgChannel channel = PpgChannel::green);

struct StageSpec {
  double duration_s = 60.0;
  double hr_bpm = 75.0;
  double rr_bpm = 14.0;
  double intensity = 1.0;
};

// Four-stage protocol of increasing activity.
std::vector<StageSpec> default_stages();

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct CorpusOptions {
  WindowSpec window;
  FilterSpec filter;
  bool collision = false;
  double nonlinear_gain = 0.0;
  // Subject split. Negative values pick the defaults: n/3 test subjects, a
  // quarter of the rest for validation.
  int n_val = -1;
  int n_test = -1;
};

struct WindowTruth {
  std::size_t index = 0;
  double t0 = 0.0;
  double hr_bpm = 0.0;
  double rr_bpm = 0.0;
  double spo2_pct = 0.0;
};

struct CorpusRecord {
  std::size_t id = 0;
  std::size_t subject = 0;
  std::size_t stage = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;
  SubjectProfile profile;
  ArtefactModel artefact;
  double intensity = 0.0;
  SynthPair data;
  std::vector<WindowTruth> windows;
};

struct Corpus {
  double sample_rate_hz = 32.0;
  std::uint64_t seed = 0;
  CorpusOptions options;
  std::vector<CorpusRecord> records;

  std::size_t window_count() const;
};

Corpus build_corpus(std::size_t n_subjects, const std::vector<StageSpec>& stages, double fs, std::uint64_t seed,
                    const CorpusOptions& options = {});

// Writes rec<k>.csv (noisy), rec<k>_clean.csv and manifest.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
// Reads records back; profiles and artefacts are restored from the manifest.
Corpus read_corpus(const std::filesystem::path& dir);

std::string manifest_json(const Corpus& corpus);

}  // namespace amgan
