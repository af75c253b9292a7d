#include "amgan/train.hpp"

#include "amgan/adam.hpp"
#include "amgan/errors.hpp"
#include "amgan/vitals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace amgan {

using ad::Mode;

namespace {

// Scale to unit RMS without centring, so scaled columns stay inside the span
// the reference pipeline projects out.
void unit_rms(std::span<double> x) {
  const double r = rms(x);
  for (double& v : x) v = r > 0.0 ? v / r : 0.0;
}

Samples normalise(std::span<const double> x, double offset, double scale) {
  Samples out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - offset) / scale;
  return out;
}

struct Batch {
  Tensor ppg, motion, target;
};

// Adds a random combination of the window's motion columns to the PPG and
// renormalises input and target together. Both targets are unchanged by it:
// the clean truth trivially, the reference output because the added
// component lies in the projected-out span.
void augment(std::span<double> p, std::span<double> t, std::span<const double> motion, double sigma,
             std::mt19937_64& rng) {
  const std::size_t L = p.size();
  std::normal_distribution<double> coef(0.0, sigma);
  for (std::size_t j = 0; j < 6; ++j) {
    const double c = coef(rng);
    for (std::size_t i = 0; i < L; ++i) p[i] += c * motion[j * L + i];
  }
  const double m = mean(p);
  const double s = stddev(p);
  if (!(s > 0.0)) return;
  for (std::size_t i = 0; i < L; ++i) {
    p[i] = (p[i] - m) / s;
    t[i] = (t[i] - m) / s;
  }
}

Batch make_batch(const WindowDataset& data, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                 bool zero_motion, double augment_sigma, std::mt19937_64& rng) {
  const std::size_t B = end - begin, L = data.length;
  std::vector<double> p(B * L), m(B * 6 * L, 0.0), t(B * L);
  std::uniform_real_distribution<double> u(0.0, augment_sigma);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& w = data.windows[order[begin + b]];
    const auto off = static_cast<std::ptrdiff_t>(b * L);
    std::copy(w.input.ppg.begin(), w.input.ppg.end(), p.begin() + off);
    if (!zero_motion) std::copy(w.input.motion.begin(), w.input.motion.end(), m.begin() + off * 6);
    std::copy(w.target.begin(), w.target.end(), t.begin() + off);
    if (augment_sigma > 0.0) {
      augment(std::span<double>(p.data() + off, L), std::span<double>(t.data() + off, L), w.input.motion, u(rng), rng);
    }
  }
  return {Tensor({B, 1, L}, std::move(p)), Tensor({B, 6, L}, std::move(m)), Tensor({B, 1, L}, std::move(t))};
}

void zero_grads(const std::vector<Tensor>& ts) {
  for (Tensor t : ts) t.zero_grad();
}

}  // namespace

ModelWindow prepare_window(const ConditionedRecord& rec, const FrameRange& frame, PpgChannel channel) {
  auto it = rec.ppg.find(channel);
  if (it == rec.ppg.end()) throw InvalidInput("prepare_window: missing PPG channel");
  if (frame.end() > rec.length) throw InvalidInput("prepare_window: frame exceeds record");
  const std::span<const double> p(it->second.data() + frame.begin, frame.length);
  ModelWindow w;
  w.offset = mean(p);
  const double s = stddev(p);
  w.scale = s > 0.0 ? s : 1.0;
  w.ppg = normalise(p, w.offset, w.scale);
  w.motion.resize(6 * frame.length);
  for (std::size_t j = 0; j < kMotionColumns; ++j) {
    std::span<double> col(w.motion.data() + j * frame.length, frame.length);
    std::copy_n(rec.motion[j].begin() + static_cast<std::ptrdiff_t>(frame.begin), frame.length, col.begin());
    unit_rms(col);
  }
  return w;
}

std::vector<Samples> generator_denoise(GeneratorParams& g, const std::vector<ModelWindow>& windows, bool zero_motion,
                                       std::size_t batch_size) {
  const std::size_t L = g.config.input_length;
  if (batch_size == 0) throw InvalidInput("generator_denoise: batch size must be positive");
  ad::NoGradGuard no_grad;
  std::vector<Samples> out;
  out.reserve(windows.size());
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t B = std::min(batch_size, windows.size() - begin);
    std::vector<double> p(B * L), m(B * 6 * L, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& w = windows[begin + b];
      if (w.ppg.size() != L || w.motion.size() != 6 * L) {
        throw ShapeError("generator_denoise: window length " + std::to_string(w.ppg.size()) + ", model expects " +
                         std::to_string(L));
      }
      std::copy(w.ppg.begin(), w.ppg.end(), p.begin() + static_cast<std::ptrdiff_t>(b * L));
      if (!zero_motion) std::copy(w.motion.begin(), w.motion.end(), m.begin() + static_cast<std::ptrdiff_t>(b * 6 * L));
    }
    const Tensor y = generator_forward(g, Tensor({B, 1, L}, std::move(p)), Tensor({B, 6, L}, std::move(m)), Mode::Eval);
    const auto yd = y.data();
    for (std::size_t b = 0; b < B; ++b) {
      const auto& w = windows[begin + b];
      Samples s(L);
      for (std::size_t i = 0; i < L; ++i) s[i] = yd[b * L + i] * w.scale + w.offset;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::string to_string(TargetKind t) { return t == TargetKind::mr ? "mr" : "clean"; }

TargetKind target_from_string(const std::string& s) {
  if (s == "mr") return TargetKind::mr;
  if (s == "clean") return TargetKind::clean;
  throw InvalidInput("unknown target '" + s + "' (expected mr or clean)");
}

WindowDataset WindowDataset::subset(Split split) const {
  WindowDataset out;
  out.length = length;
  out.sample_rate_hz = sample_rate_hz;
  for (const auto& w : windows) {
    if (w.split == split) out.windows.push_back(w);
  }
  return out;
}

WindowDataset build_window_dataset(const Corpus& corpus, TargetKind target, PpgChannel channel) {
  WindowSpec wspec = corpus.options.window;
  wspec.sample_rate_hz = corpus.sample_rate_hz;
  WindowDataset out;
  out.length = wspec.window_samples();
  out.sample_rate_hz = corpus.sample_rate_hz;
  for (const auto& rec : corpus.records) {
    const auto cond = condition_record(rec.data.noisy, corpus.options.filter);
    const auto clean = bandpass(rec.data.clean.ppg(channel), corpus.sample_rate_hz, corpus.options.filter);
    const auto frames = make_windows(cond.length, wspec);
    std::vector<ReferenceFrame> refs;
    if (target == TargetKind::mr) refs = reference_pipeline(cond, wspec, channel);
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const auto& f = frames[k];
      TrainingWindow tw;
      tw.record = rec.id;
      tw.split = rec.split;
      tw.input = prepare_window(cond, f, channel);
      const std::span<const double> c(clean.data() + f.begin, f.length);
      tw.clean = normalise(c, tw.input.offset, tw.input.scale);
      tw.target = target == TargetKind::mr ? normalise(refs[k].s_ref, tw.input.offset, tw.input.scale) : tw.clean;
      if (k < rec.windows.size()) tw.truth = rec.windows[k];
      out.windows.push_back(std::move(tw));
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch_size must be positive");
  if (!(lr > 0.0) || !(lambda_mse > 0.0)) throw ConfigError("train: lr and lambda must be positive");
  if (!(real_label > 0.5 && real_label <= 1.0)) throw ConfigError("train: real_label must be in (0.5, 1]");
  if (!(augment_sigma >= 0.0)) throw ConfigError("train: augment_sigma must be non-negative");
}

ValidationScore validate_generator(GeneratorParams& g, const WindowDataset& data, bool zero_motion) {
  ValidationScore s;
  if (data.windows.empty()) return s;
  std::vector<ModelWindow> inputs;
  inputs.reserve(data.windows.size());
  for (const auto& w : data.windows) inputs.push_back(w.input);
  const auto out = generator_denoise(g, inputs, zero_motion);
  double rsum = 0.0, hsum = 0.0;
  std::size_t rn = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& w = data.windows[i];
    try {
      rsum += pearson_r(out[i], w.clean);
      ++rn;
    } catch (const Undefined&) {
    }
    if (w.truth.hr_bpm > 0.0) {
      try {
        hsum += std::abs(estimate_hr(out[i], data.sample_rate_hz) - w.truth.hr_bpm);
        ++s.hr_windows;
      } catch (const LowQuality&) {
      }
    }
  }
  s.pearson = rn ? rsum / static_cast<double>(rn) : 0.0;
  s.hr_mae = s.hr_windows ? hsum / static_cast<double>(s.hr_windows) : 0.0;
  return s;
}

TrainResult train(const WindowDataset& train_set, const WindowDataset& val_set, const GeneratorConfig& gcfg,
                  const TrainConfig& cfg, std::ostream* csv) {
  cfg.validate();
  gcfg.validate();
  if (train_set.windows.empty()) throw InvalidInput("train: empty training set");
  if (train_set.length != gcfg.input_length) {
    throw ShapeError("train: window length " + std::to_string(train_set.length) + " but generator expects " +
                     std::to_string(gcfg.input_length));
  }

  TrainResult res;
  GeneratorParams g = GeneratorParams::init(gcfg, cfg.seed * 2 + 1);
  DiscriminatorParams d = DiscriminatorParams::init(gcfg, cfg.seed * 2 + 2);
  auto g_params = g.trainable();
  auto d_params = d.trainable();
  ad::AdamConfig acfg;
  acfg.lr = cfg.lr;
  ad::AdamState g_state, d_state;
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::size_t> order(train_set.windows.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -2.0;
  if (csv) *csv << "epoch,loss_g,loss_d,val_pearson,val_hr_mae\n";

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_g = 0.0, sum_d = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::size_t batch_index = begin / cfg.batch_size;
      const Batch batch = make_batch(train_set, order, begin, end, cfg.no_acc, cfg.augment_sigma, rng);
      double loss_g = 0.0, loss_d = 0.0;
      try {
        ad::tape().clear();
        const Tensor fake = generator_forward(g, batch.ppg, batch.motion, Mode::Train);
        if (!cfg.no_discriminator) {
          zero_grads(d_params);
          const Tensor real_logits = discriminator_logits(d, batch.target, Mode::Train);
          const Tensor fake_logits = discriminator_logits(d, fake.detach(), Mode::Train);
          const Tensor ld = discriminator_loss(real_logits, fake_logits, cfg.real_label);
          loss_d = ld.item();
          ad::backward(ld);
          ad::adam_step(d_params, d_state, acfg);
        }
        zero_grads(g_params);
        Tensor logits;
        if (!cfg.no_discriminator) logits = discriminator_logits(d, fake, Mode::Train);
        const LossTerms lg = generator_loss(logits, fake, batch.target, cfg.lambda_mse, cfg.literal_generator_loss,
                                            !cfg.no_discriminator);
        loss_g = lg.total.item();
        if (!std::isfinite(loss_g) || !std::isfinite(loss_d)) throw NumericError("non-finite loss");
        ad::backward(lg.total);
        ad::adam_step(g_params, g_state, acfg);
      } catch (const NumericError& e) {
        ad::tape().clear();
        throw TrainingDiverged("train: epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) +
                               ": " + e.what());
      }
      sum_g += loss_g;
      sum_d += loss_d;
      ++batches;
    }
    ad::tape().clear();

    EpochLog row;
    row.epoch = epoch;
    row.loss_g = sum_g / static_cast<double>(batches);
    row.loss_d = sum_d / static_cast<double>(batches);
    const auto score = validate_generator(g, val_set.windows.empty() ? train_set : val_set, cfg.no_acc);
    row.val_pearson = score.pearson;
    row.val_hr_mae = score.hr_mae;
    res.log.push_back(row);
    if (csv) {
      *csv << row.epoch << ',' << row.loss_g << ',' << row.loss_d << ',' << row.val_pearson << ',' << row.val_hr_mae
           << '\n'
           << std::flush;
    }
    if (row.val_pearson > best) {
      best = row.val_pearson;
      res.best_epoch = epoch;
      res.generator = g.clone();
      res.discriminator = d.clone();
    }
  }
  return res;
}

}  // namespace amgan
