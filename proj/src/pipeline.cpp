#include "amgan/pipeline.hpp"

#include "amgan/errors.hpp"
#include "amgan/motion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace amgan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

std::array<std::size_t, 4> parse_widths(const std::string& key, const std::string& v) {
  std::array<std::size_t, 4> out{};
  std::stringstream ss(v);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == 4) throw ConfigError("config: " + key + " needs exactly four widths");
    out[i++] = parse_number<std::size_t>(key, trim(item));
  }
  if (i != 4) throw ConfigError("config: " + key + " needs exactly four widths");
  return out;
}

// Hold failed estimates from the nearest earlier valid window (or the first
// valid one at the start), then smooth.
std::vector<std::optional<double>> fill_and_smooth(const std::vector<std::optional<double>>& raw, std::size_t width) {
  std::vector<std::optional<double>> out(raw.size());
  const auto first = std::find_if(raw.begin(), raw.end(), [](const auto& v) { return v.has_value(); });
  if (first == raw.end()) return out;
  Samples filled(raw.size());
  double last = **first;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i]) last = *raw[i];
    filled[i] = last;
  }
  const auto smooth = median_filter(filled, width);
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = smooth[i];
  return out;
}

template <typename F>
std::optional<double> guarded(F&& f) {
  try {
    return f();
  } catch (const LowQuality&) {
    return std::nullopt;
  } catch (const Undefined&) {
    return std::nullopt;
  }
}

}  // namespace

void PipelineConfig::validate() const {
  window.validate();
  filter.validate(window.sample_rate_hz);
  generator.validate();
  train.validate();
  if (window.window_samples() != generator.input_length) {
    throw ConfigError("config: window of " + std::to_string(window.window_samples()) +
                      " samples does not match generator.input_length " + std::to_string(generator.input_length));
  }
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "filter.order") filter.order = parse_number<int>(key, v);
  else if (key == "filter.low_cut_hz") filter.low_cut_hz = parse_number<double>(key, v);
  else if (key == "filter.high_cut_hz") filter.high_cut_hz = parse_number<double>(key, v);
  else if (key == "window.seconds") window.window_seconds = parse_number<double>(key, v);
  else if (key == "window.hop_seconds") window.hop_seconds = parse_number<double>(key, v);
  else if (key == "window.sample_rate_hz") window.sample_rate_hz = parse_number<double>(key, v);
  else if (key == "generator.input_length") generator.input_length = parse_number<std::size_t>(key, v);
  else if (key == "generator.encoder_channels") generator.encoder_channels = parse_widths(key, v);
  else if (key == "generator.kernel_size") generator.kernel_size = parse_number<std::size_t>(key, v);
  else if (key == "generator.stride") generator.stride = parse_number<std::size_t>(key, v);
  else if (key == "generator.attention_heads") generator.attention_heads = parse_number<std::size_t>(key, v);
  else if (key == "generator.attention_dim") generator.attention_dim = parse_number<std::size_t>(key, v);
  else if (key == "generator.leaky_slope") generator.leaky_slope = parse_number<double>(key, v);
  else if (key == "generator.swap_qkv") generator.swap_qkv = parse_bool(key, v);
  else if (key == "generator.use_attention") generator.use_attention = parse_bool(key, v);
  else if (key == "train.epochs") train.epochs = parse_number<std::size_t>(key, v);
  else if (key == "train.lr") train.lr = parse_number<double>(key, v);
  else if (key == "train.batch_size") train.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "train.lambda_mse") train.lambda_mse = parse_number<double>(key, v);
  else if (key == "train.real_label") train.real_label = parse_number<double>(key, v);
  else if (key == "train.seed") train.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "train.literal_generator_loss") train.literal_generator_loss = parse_bool(key, v);
  else if (key == "train.no_discriminator") train.no_discriminator = parse_bool(key, v);
  else if (key == "train.no_acc") train.no_acc = parse_bool(key, v);
  else if (key == "train.augment_sigma") train.augment_sigma = parse_number<double>(key, v);
  else if (key == "paths.corpus") corpus = v;
  else if (key == "paths.checkpoint") checkpoint = v;
  else if (key == "paths.report") report = v;
  else throw ConfigError("config: unknown key '" + key + "'");
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

Method method_from_string(const std::string& s) {
  if (s == "mr") return Method::mr;
  if (s == "amgan") return Method::amgan;
  throw ConfigError("unknown method '" + s + "' (expected mr or amgan)");
}

std::string to_string(Method m) { return m == Method::mr ? "mr" : "amgan"; }

std::vector<DenoisedWindow> denoise_record(const MultiChannelRecord& input, const Denoiser& d, const FilterSpec& fspec,
                                           const WindowSpec& wspec) {
  if (d.method == Method::amgan && d.generator == nullptr) throw InvalidInput("denoise: amgan needs a generator");
  const MultiChannelRecord rec =
      input.sample_rate_hz() == wspec.sample_rate_hz ? input : resample(input, wspec.sample_rate_hz);
  const auto cond = condition_record(rec, fspec);
  const auto frames = make_windows(cond.length, wspec);

  std::vector<DenoisedWindow> out(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    out[k].index = k;
    out[k].t0 = static_cast<double>(frames[k].begin) / wspec.sample_rate_hz;
  }
  for (const auto& [channel, raw] : rec.ppg_channels()) {
    std::vector<Samples> clean;
    if (d.method == Method::mr) {
      for (auto& rf : reference_pipeline(cond, wspec, channel)) clean.push_back(std::move(rf.s_ref));
    } else {
      std::vector<ModelWindow> inputs;
      inputs.reserve(frames.size());
      for (const auto& f : frames) inputs.push_back(prepare_window(cond, f, channel));
      clean = generator_denoise(*d.generator, inputs, d.zero_motion);
    }
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const double dc = mean(std::span<const double>(raw.data() + frames[k].begin, frames[k].length));
      for (double& v : clean[k]) v += dc;
      out[k].channels[channel] = std::move(clean[k]);
    }
  }
  return out;
}

VitalsSeries estimate_vitals(const std::vector<DenoisedWindow>& windows, double fs, std::size_t median_width) {
  VitalsSeries vs;
  std::vector<std::optional<double>> hr, rr, spo2;
  for (const auto& w : windows) {
    VitalsFrame f;
    f.window_index = w.index;
    f.t0 = w.t0;
    if (auto g = w.channels.find(PpgChannel::green); g != w.channels.end()) {
      f.hr_bpm = guarded([&] { return estimate_hr(g->second, fs); });
      f.rr_bpm = guarded([&] { return estimate_rr(g->second, fs); });
      if (!f.hr_bpm) ++vs.hr_low_quality;
      if (!f.rr_bpm) ++vs.rr_low_quality;
    }
    auto red = w.channels.find(PpgChannel::red);
    auto ir = w.channels.find(PpgChannel::infrared);
    if (red != w.channels.end() && ir != w.channels.end()) {
      f.spo2_pct = guarded([&] { return estimate_spo2(red->second, ir->second, fs); });
    }
    hr.push_back(f.hr_bpm);
    rr.push_back(f.rr_bpm);
    spo2.push_back(f.spo2_pct);
    vs.raw.push_back(f);
  }
  const auto hs = fill_and_smooth(hr, median_width);
  const auto rs = fill_and_smooth(rr, median_width);
  const auto ss = fill_and_smooth(spo2, median_width);
  vs.smoothed = vs.raw;
  for (std::size_t i = 0; i < vs.raw.size(); ++i) {
    vs.smoothed[i].hr_bpm = hs[i];
    vs.smoothed[i].rr_bpm = rs[i];
    vs.smoothed[i].spo2_pct = ss[i];
  }
  return vs;
}

std::array<VitalAgreement, 3> vital_slots() {
  std::array<VitalAgreement, 3> out;
  out[0].name = "hr";
  out[1].name = "rr";
  out[2].name = "spo2";
  return out;
}

void collect_vitals(std::array<VitalAgreement, 3>& slots, const VitalsFrame& f, const WindowTruth& truth) {
  const std::array<std::pair<std::optional<double>, double>, 3> pairs{
      {{f.hr_bpm, truth.hr_bpm}, {f.rr_bpm, truth.rr_bpm}, {f.spo2_pct, truth.spo2_pct}}};
  for (std::size_t v = 0; v < 3; ++v) {
    if (!pairs[v].first) continue;
    slots[v].estimates.push_back(*pairs[v].first);
    slots[v].truths.push_back(pairs[v].second);
  }
}

EvaluationReport evaluate_corpus(const Corpus& corpus, const Denoiser& d, std::optional<Split> split) {
  WindowSpec wspec = corpus.options.window;
  wspec.sample_rate_hz = corpus.sample_rate_hz;
  const FilterSpec& fspec = corpus.options.filter;

  EvaluationReport rep;
  rep.method = to_string(d.method);
  auto vit = vital_slots();
  double rsum = 0.0;
  std::size_t rn = 0;
  for (const auto& rec : corpus.records) {
    if (split && rec.split != *split) continue;
    ++rep.records;
    const auto den = denoise_record(rec.data.noisy, d, fspec, wspec);
    const auto vs = estimate_vitals(den, wspec.sample_rate_hz);
    rep.hr_low_quality += vs.hr_low_quality;
    rep.rr_low_quality += vs.rr_low_quality;
    const auto clean = bandpass(rec.data.clean.ppg(PpgChannel::green), corpus.sample_rate_hz, fspec);
    const auto frames = make_windows(clean.size(), wspec);
    const std::size_t n = std::min({den.size(), rec.windows.size(), frames.size()});
    for (std::size_t k = 0; k < n; ++k) {
      ++rep.windows;
      collect_vitals(vit, vs.smoothed[k], rec.windows[k]);
      const auto& g = den[k].channels.at(PpgChannel::green);
      const std::span<const double> c(clean.data() + frames[k].begin, frames[k].length);
      if (auto r = guarded([&] { return pearson_r(g, c); })) {
        rsum += *r;
        ++rn;
      }
    }
  }
  if (rep.windows == 0) throw InvalidInput("evaluate: no windows in the selected records");
  rep.mean_pearson_r = rn > 0 ? rsum / static_cast<double>(rn) : 0.0;
  for (auto& v : vit) {
    if (v.estimates.size() < 2) continue;
    v.report = agreement(v.estimates, v.truths);
    rep.vitals.push_back(std::move(v));
  }
  return rep;
}

nlohmann::json to_json(const AgreementReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"n", r.n},
          {"err1", r.err1},
          {"err2", r.err2},
          {"sd", r.sd},
          {"mean_diff", r.mean_diff},
          {"loa_low", r.loa_low},
          {"loa_high", r.loa_high},
          {"pearson_r_overall", opt(r.pearson_r_overall)},
          {"fit_slope", opt(r.fit_slope)},
          {"fit_intercept", opt(r.fit_intercept)}};
}

nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json j;
  for (const auto& v : r.vitals) j[v.name] = to_json(v.report);
  j["summary"] = {{"method", r.method},
                  {"records", r.records},
                  {"windows", r.windows},
                  {"mean_pearson_r", r.mean_pearson_r},
                  {"hr_low_quality", r.hr_low_quality},
                  {"rr_low_quality", r.rr_low_quality}};
  return j;
}

void write_plot_csvs(const VitalAgreement& v, const std::filesystem::path& stem) {
  auto path = [&](const char* kind) {
    auto p = stem;
    p += std::string("_") + kind + "_" + v.name + ".csv";
    return p;
  };
  std::ofstream ba(path("bland_altman"));
  std::ofstream sc(path("scatter"));
  if (!ba || !sc) throw InvalidInput("cannot write plot data next to " + stem.string());
  ba << "mean,diff\n";
  sc << "truth,estimate\n";
  ba.precision(17);
  sc.precision(17);
  for (std::size_t i = 0; i < v.estimates.size(); ++i) {
    const double e = v.estimates[i], t = v.truths[i];
    ba << 0.5 * (e + t) << ',' << e - t << '\n';
    sc << t << ',' << e << '\n';
  }
}

}  // namespace amgan
