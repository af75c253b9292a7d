#pragma once

#include "amgan/model.hpp"
#include "amgan/motion.hpp"
#include "amgan/synth.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace amgan {

// Generator input for one window. The PPG is shifted and scaled to zero mean
// and unit variance (raw = normalised * scale + offset); each motion column is
// scaled to unit RMS on its own.
struct ModelWindow {
  Samples ppg;     // L
  Samples motion;  // 6 x L, column-major by channel
  double offset = 0.0;
  double scale = 1.0;
};

ModelWindow prepare_window(const ConditionedRecord& rec, const FrameRange& frame, PpgChannel channel);

// Runs the generator in eval mode and maps each output back to raw units.
std::vector<Samples> generator_denoise(GeneratorParams& g, const std::vector<ModelWindow>& windows, bool zero_motion,
                                       std::size_t batch_size = 64);

enum class TargetKind { mr, clean };
std::string to_string(TargetKind t);
TargetKind target_from_string(const std::string& s);

struct TrainingWindow {
  std::size_t record = 0;
  Split split = Split::train;
  ModelWindow input;
  Samples target;  // normalised with the input statistics
  Samples clean;   // band-passed clean truth, same normalisation
  WindowTruth truth;
};

struct WindowDataset {
  std::size_t length = 0;
  double sample_rate_hz = 32.0;
  std::vector<TrainingWindow> windows;

  WindowDataset subset(Split split) const;
};

// Windows of every record; targets from the reference pipeline (mr) or the
// band-passed clean channel.
WindowDataset build_window_dataset(const Corpus& corpus, TargetKind target, PpgChannel channel = PpgChannel::green);

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 2e-4;
  std::size_t batch_size = 32;
  double lambda_mse = 1000.0;
  double real_label = 0.9;
  std::uint64_t seed = 0;
  bool literal_generator_loss = false;
  bool no_discriminator = false;
  bool no_acc = false;
  // Upper bound of the per-window scale of random motion-span noise added to
  // training inputs; 0 disables it.
  double augment_sigma = 0.7;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double val_pearson = 0.0;
  double val_hr_mae = 0.0;
};

struct TrainResult {
  GeneratorParams generator;  // best validation epoch
  DiscriminatorParams discriminator;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

struct ValidationScore {
  double pearson = 0.0;  // mean per-window R against the clean truth
  double hr_mae = 0.0;
  std::size_t hr_windows = 0;
};

ValidationScore validate_generator(GeneratorParams& g, const WindowDataset& data, bool zero_motion);

// Alternating updates: one discriminator step, then one generator step per
// batch. Writes a CSV row per epoch to `csv` when given.
TrainResult train(const WindowDataset& train_set, const WindowDataset& val_set, const GeneratorConfig& gcfg,
                  const TrainConfig& cfg, std::ostream* csv = nullptr);

}  // namespace amgan
