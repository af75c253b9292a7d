#pragma once

#include "amgan/model.hpp"
#include "amgan/synth.hpp"
#include "amgan/train.hpp"
#include "amgan/vitals.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace amgan {

struct PipelineConfig {
  FilterSpec filter;
  WindowSpec window;
  GeneratorConfig generator;
  TrainConfig train;
  std::filesystem::path corpus;
  std::filesystem::path checkpoint;
  std::filesystem::path report;

  void validate() const;
  // Dotted key, e.g. "train.epochs" or "generator.encoder_channels" (comma list).
  void set(const std::string& key, const std::string& value);
};

// Flat `key = value` lines; '#' starts a comment.
PipelineConfig load_pipeline_config(const std::filesystem::path& path, PipelineConfig base = {});

enum class Method { mr, amgan };
Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct Denoiser {
  Method method = Method::mr;
  GeneratorParams* generator = nullptr;  // required for amgan
  bool zero_motion = false;
};

// Denoised window in raw units: the band-passed, motion-free waveform plus the
// mean of the raw window, so AC/DC ratios survive.
struct DenoisedWindow {
  std::size_t index = 0;
  double t0 = 0.0;
  std::map<PpgChannel, Samples> channels;
};

std::vector<DenoisedWindow> denoise_record(const MultiChannelRecord& rec, const Denoiser& d, const FilterSpec& fspec,
                                           const WindowSpec& wspec);

// Per-window HR, RR (green) and SpO2 (red/infrared when present). Estimates
// that fail the quality gate are held from the nearest valid window; the
// series are then median-filtered.
struct VitalsSeries {
  std::vector<VitalsFrame> raw;
  std::vector<VitalsFrame> smoothed;
  std::size_t hr_low_quality = 0;
  std::size_t rr_low_quality = 0;
};

VitalsSeries estimate_vitals(const std::vector<DenoisedWindow>& windows, double fs, std::size_t median_width = 5);

struct VitalAgreement {
  std::string name;
  Samples estimates;
  Samples truths;
  AgreementReport report;
};

// Empty hr, rr and spo2 slots.
std::array<VitalAgreement, 3> vital_slots();
// Appends the (estimate, truth) pair of every vital present in `f`.
void collect_vitals(std::array<VitalAgreement, 3>& slots, const VitalsFrame& f, const WindowTruth& truth);

struct EvaluationReport {
  std::string method;
  std::size_t records = 0;
  std::size_t windows = 0;
  double mean_pearson_r = 0.0;
  std::size_t hr_low_quality = 0;
  std::size_t rr_low_quality = 0;
  std::vector<VitalAgreement> vitals;  // hr, rr, spo2
};

// Denoise every record (optionally one split), estimate vitals and compare
// with the simulator's ground truth.
EvaluationReport evaluate_corpus(const Corpus& corpus, const Denoiser& d, std::optional<Split> split = std::nullopt);

nlohmann::json to_json(const AgreementReport& r);
nlohmann::json to_json(const EvaluationReport& r);

// Bland-Altman (mean, difference) and scatter (truth, estimate) plot data.
void write_plot_csvs(const VitalAgreement& v, const std::filesystem::path& stem);

}  // namespace amgan
