#include "amgan/checkpoint.hpp"
#include "amgan/errors.hpp"
#include "amgan/pipeline.hpp"
#include "amgan/record_csv.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace amgan;
namespace fs = std::filesystem;

namespace {

// Flags that map onto dotted config keys. Values pass through
// PipelineConfig::set so flag and file parsing agree.
class Overrides {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = values_[key];
    opts_.emplace_back(key, app->add_option(flag, slot, help));
  }
  void apply(PipelineConfig& cfg) const {
    for (const auto& [key, opt] : opts_) {
      if (opt->count() > 0) cfg.set(key, values_.at(key));
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> opts_;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out.precision(17);
  return out;
}

fs::path stem_of(const fs::path& p) { return p.parent_path() / p.stem(); }

PpgChannel channel_from_string(const std::string& s) {
  if (s == "green") return PpgChannel::green;
  if (s == "red") return PpgChannel::red;
  if (s == "ir") return PpgChannel::infrared;
  throw ConfigError("unknown channel '" + s + "' (expected green, red or ir)");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

double to_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \r", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput(path.string() + ": bad number '" + s + "'");
  }
}

void write_windows(std::ostream& out, const std::vector<DenoisedWindow>& windows, PpgChannel channel) {
  out.precision(17);
  const std::size_t n = windows.empty() ? 0 : windows.front().channels.at(channel).size();
  out << "window_index,t0";
  for (std::size_t i = 0; i < n; ++i) out << ",sample_" << i;
  out << '\n';
  for (const auto& w : windows) {
    out << w.index << ',' << w.t0;
    for (double v : w.channels.at(channel)) out << ',' << v;
    out << '\n';
  }
}

// Window CSV as written by `denoise`, merged into `windows` under `channel`.
void read_windows(const fs::path& path, PpgChannel channel, std::vector<DenoisedWindow>& windows) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("window_index,t0", 0) != 0) {
    throw InvalidInput(path.string() + ": expected a window_index,t0,sample_... header");
  }
  const std::size_t width = split_csv(line).size();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != width) throw InvalidInput(path.string() + ": ragged row " + std::to_string(row + 1));
    if (row >= windows.size()) {
      windows.emplace_back();
      windows.back().index = static_cast<std::size_t>(to_double(cells[0], path));
      windows.back().t0 = to_double(cells[1], path);
    } else if (windows[row].index != static_cast<std::size_t>(to_double(cells[0], path))) {
      throw InvalidInput(path.string() + ": window indices differ between channel files");
    }
    Samples s(width - 2);
    for (std::size_t i = 2; i < width; ++i) s[i - 2] = to_double(cells[i], path);
    windows[row].channels[channel] = std::move(s);
    ++row;
  }
  if (row != windows.size()) throw InvalidInput(path.string() + ": window count differs between channel files");
}

std::map<std::size_t, WindowTruth> read_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("window_index,t0,hr_bpm,rr_bpm,spo2_pct", 0) != 0) {
    throw InvalidInput(path.string() + ": expected header window_index,t0,hr_bpm,rr_bpm,spo2_pct");
  }
  std::map<std::size_t, WindowTruth> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = split_csv(line);
    if (c.size() != 5) throw InvalidInput(path.string() + ": expected five columns");
    WindowTruth t{static_cast<std::size_t>(to_double(c[0], path)), to_double(c[1], path), to_double(c[2], path),
                  to_double(c[3], path), to_double(c[4], path)};
    out[t.index] = t;
  }
  return out;
}

void write_truth(const fs::path& path, const std::vector<WindowTruth>& windows) {
  auto out = open_out(path);
  out << "window_index,t0,hr_bpm,rr_bpm,spo2_pct\n";
  for (const auto& w : windows) out << w.index << ',' << w.t0 << ',' << w.hr_bpm << ',' << w.rr_bpm << ',' << w.spo2_pct << '\n';
}

void write_frames(const fs::path& path, const VitalsSeries& vs) {
  auto out = open_out(path);
  auto cell = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  out << "window_index,t0,hr_raw,hr,rr_raw,rr,spo2_raw,spo2\n";
  for (std::size_t i = 0; i < vs.raw.size(); ++i) {
    out << vs.raw[i].window_index << ',' << vs.raw[i].t0;
    cell(vs.raw[i].hr_bpm);
    cell(vs.smoothed[i].hr_bpm);
    cell(vs.raw[i].rr_bpm);
    cell(vs.smoothed[i].rr_bpm);
    cell(vs.raw[i].spo2_pct);
    cell(vs.smoothed[i].spo2_pct);
    out << '\n';
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

// A checkpoint trained without motion input is always run with zeros there.
GeneratorParams load_generator(const fs::path& checkpoint, Denoiser& d) {
  if (checkpoint.empty()) throw ConfigError("--method amgan needs --checkpoint");
  auto lc = load_checkpoint(checkpoint);
  d.zero_motion = d.zero_motion || lc.meta.no_acc;
  return std::move(lc.generator);
}

std::optional<Split> split_option(const std::string& s) {
  if (s == "all") return std::nullopt;
  return split_from_string(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-artefact removal for wrist PPG: simulation, training, denoising and vital-sign agreement."};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "Flat key = value file; command-line flags take precedence");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Write a synthetic corpus with exact ground truth");
  std::size_t subjects = 12;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  bool collision = false;
  double nonlinear_gain = 0.0, intensity_scale = 1.0;
  Overrides sim_over;
  sim->add_option("--subjects", subjects, "Number of subjects")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "Random seed");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_flag("--collision", collision, "Add motion locked to the heart rate");
  sim->add_option("--nonlinear-gain", nonlinear_gain, "Quadratic artefact gain")->check(CLI::NonNegativeNumber);
  sim->add_option("--intensity-scale", intensity_scale, "Multiplier on stage artefact intensity; 0 gives clean input")
      ->check(CLI::NonNegativeNumber);
  sim_over.add(sim, "--fs", "window.sample_rate_hz", "Sample rate in Hz");

  // train
  auto* tr = app.add_subcommand("train", "Train the generator on a corpus");
  Overrides tr_over;
  std::string target = "mr", log_path;
  bool no_attention = false, no_discriminator = false, no_acc = false;
  tr_over.add(tr, "--corpus", "paths.corpus", "Corpus directory");
  tr_over.add(tr, "--out", "paths.checkpoint", "Checkpoint path");
  tr_over.add(tr, "--seed", "train.seed", "Random seed");
  tr_over.add(tr, "--epochs", "train.epochs", "Training epochs");
  tr_over.add(tr, "--lr", "train.lr", "Adam learning rate");
  tr_over.add(tr, "--batch", "train.batch_size", "Batch size");
  tr_over.add(tr, "--lambda", "train.lambda_mse", "Weight of the MSE term");
  tr_over.add(tr, "--widths", "generator.encoder_channels", "Four encoder widths, comma separated");
  tr_over.add(tr, "--heads", "generator.attention_heads", "Attention heads");
  tr->add_option("--target", target, "Regression target: mr or clean")->check(CLI::IsMember({"mr", "clean"}));
  tr->add_option("--log", log_path, "Per-epoch metrics CSV (default <out>.metrics.csv)");
  tr->add_flag("--no-attention", no_attention, "Concatenate bottlenecks instead of cross-attention");
  tr->add_flag("--no-discriminator", no_discriminator, "Drop the adversarial term");
  tr->add_flag("--no-acc", no_acc, "Zero the motion input");

  // denoise
  auto* dn = app.add_subcommand("denoise", "Denoise one record CSV window by window");
  Overrides dn_over;
  std::string dn_method = "mr", dn_in, dn_out, dn_channel = "green";
  bool dn_zero_motion = false;
  dn->add_option("--method", dn_method, "mr or amgan")->check(CLI::IsMember({"mr", "amgan"}));
  dn->add_option("--in", dn_in, "Record CSV")->required();
  dn->add_option("--out", dn_out, "Window CSV (default stdout)");
  dn->add_option("--channel", dn_channel, "green, red or ir")->check(CLI::IsMember({"green", "red", "ir"}));
  dn->add_flag("--zero-motion", dn_zero_motion, "Feed zeros as the motion input (amgan)");
  dn_over.add(dn, "--checkpoint", "paths.checkpoint", "Generator checkpoint (amgan)");

  // vitals
  auto* vt = app.add_subcommand("vitals", "Heart rate, respiration and SpO2 from denoised windows");
  std::string vt_in, vt_red, vt_ir, vt_truth, vt_out;
  Overrides vt_over;
  vt->add_option("--in", vt_in, "Denoised green window CSV")->required();
  vt->add_option("--red", vt_red, "Denoised red window CSV");
  vt->add_option("--ir", vt_ir, "Denoised infrared window CSV");
  vt->add_option("--truth", vt_truth, "Truth CSV: window_index,t0,hr_bpm,rr_bpm,spo2_pct");
  vt->add_option("--out", vt_out, "Report JSON")->required();
  vt_over.add(vt, "--fs", "window.sample_rate_hz", "Sample rate in Hz");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Denoise a corpus, estimate vitals and report agreement");
  Overrides ev_over;
  std::string ev_method = "mr", ev_split = "all";
  bool ev_zero_motion = false;
  ev_over.add(ev, "--corpus", "paths.corpus", "Corpus directory");
  ev_over.add(ev, "--checkpoint", "paths.checkpoint", "Generator checkpoint (amgan)");
  ev_over.add(ev, "--out", "paths.report", "Report JSON (default stdout)");
  ev->add_option("--method", ev_method, "mr or amgan")->check(CLI::IsMember({"mr", "amgan"}));
  ev->add_option("--split", ev_split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  ev->add_flag("--zero-motion", ev_zero_motion, "Feed zeros as the motion input (amgan)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every op and the model");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_pipeline_config(config_path);

    if (*sim) {
      sim_over.apply(cfg);
      cfg.window.validate();
      auto stages = default_stages();
      for (auto& s : stages) s.intensity *= intensity_scale;
      CorpusOptions opt;
      opt.window = cfg.window;
      opt.filter = cfg.filter;
      opt.collision = collision;
      opt.nonlinear_gain = nonlinear_gain;
      const auto corpus = build_corpus(subjects, stages, cfg.window.sample_rate_hz, sim_seed, opt);
      write_corpus(corpus, sim_out);
      for (const auto& r : corpus.records) {
        write_truth(fs::path(sim_out) / ("rec" + std::to_string(r.id) + "_truth.csv"), r.windows);
      }
      std::cout << "wrote " << corpus.records.size() << " records (" << corpus.window_count() << " windows) to "
                << sim_out << '\n';
      return 0;
    }

    if (*tr) {
      tr_over.apply(cfg);
      if (no_attention) cfg.generator.use_attention = false;
      if (no_discriminator) cfg.train.no_discriminator = true;
      if (no_acc) cfg.train.no_acc = true;
      if (cfg.corpus.empty() || cfg.checkpoint.empty()) throw ConfigError("train needs --corpus and --out");
      const auto corpus = read_corpus(cfg.corpus);
      cfg.window = corpus.options.window;
      cfg.filter = corpus.options.filter;
      cfg.validate();
      const auto data = build_window_dataset(corpus, target_from_string(target));
      const auto log_file = log_path.empty() ? fs::path(cfg.checkpoint.string() + ".metrics.csv") : fs::path(log_path);
      auto log = open_out(log_file);
      const auto result = train(data.subset(Split::train), data.subset(Split::val), cfg.generator, cfg.train, &log);
      CheckpointMeta meta;
      meta.config = cfg.generator;
      meta.no_attention = !cfg.generator.use_attention;
      meta.no_discriminator = cfg.train.no_discriminator;
      meta.no_acc = cfg.train.no_acc;
      meta.seed = cfg.train.seed;
      meta.epochs = cfg.train.epochs;
      meta.best_epoch = result.best_epoch;
      meta.target = target;
      save_checkpoint(result.generator, meta, cfg.checkpoint);
      const auto& best = result.log.at(result.best_epoch - 1);
      std::cout << "best epoch " << result.best_epoch << ": val R " << best.val_pearson << ", val HR MAE "
                << best.val_hr_mae << '\n';
      return 0;
    }

    if (*dn) {
      dn_over.apply(cfg);
      const auto rec = read_record_csv(fs::path(dn_in));
      const PpgChannel channel = channel_from_string(dn_channel);
      if (!rec.has(channel)) throw InvalidInput(dn_in + ": no " + dn_channel + " channel");
      Denoiser d;
      d.method = method_from_string(dn_method);
      d.zero_motion = dn_zero_motion;
      GeneratorParams g;
      if (d.method == Method::amgan) {
        g = load_generator(cfg.checkpoint, d);
        d.generator = &g;
      }
      cfg.window.sample_rate_hz = rec.sample_rate_hz();
      cfg.window.validate();
      cfg.filter.validate(cfg.window.sample_rate_hz);
      const auto windows = denoise_record(rec, d, cfg.filter, cfg.window);
      if (dn_out.empty()) {
        write_windows(std::cout, windows, channel);
      } else {
        auto out = open_out(dn_out);
        write_windows(out, windows, channel);
      }
      return 0;
    }

    if (*vt) {
      vt_over.apply(cfg);
      cfg.window.validate();
      std::vector<DenoisedWindow> windows;
      read_windows(vt_in, PpgChannel::green, windows);
      if (!vt_red.empty() != !vt_ir.empty()) throw ConfigError("vitals: --red and --ir go together");
      if (!vt_red.empty()) {
        read_windows(vt_red, PpgChannel::red, windows);
        read_windows(vt_ir, PpgChannel::infrared, windows);
      }
      const auto vs = estimate_vitals(windows, cfg.window.sample_rate_hz);
      const fs::path stem = stem_of(vt_out);
      write_frames(stem.string() + "_frames.csv", vs);
      nlohmann::json report = nlohmann::json::object();
      if (!vt_truth.empty()) {
        const auto truth = read_truth(vt_truth);
        auto vit = vital_slots();
        for (const auto& f : vs.smoothed) {
          if (auto it = truth.find(f.window_index); it != truth.end()) collect_vitals(vit, f, it->second);
        }
        for (auto& v : vit) {
          if (v.estimates.size() < 2) continue;
          v.report = agreement(v.estimates, v.truths);
          report[v.name] = to_json(v.report);
          write_plot_csvs(v, stem);
        }
      }
      write_json(vt_out, report);
      return 0;
    }

    if (*ev) {
      ev_over.apply(cfg);
      if (cfg.corpus.empty()) throw ConfigError("evaluate needs --corpus");
      const auto corpus = read_corpus(cfg.corpus);
      Denoiser d;
      d.method = method_from_string(ev_method);
      d.zero_motion = ev_zero_motion;
      GeneratorParams g;
      if (d.method == Method::amgan) {
        g = load_generator(cfg.checkpoint, d);
        d.generator = &g;
      }
      const auto rep = evaluate_corpus(corpus, d, split_option(ev_split));
      write_json(cfg.report, to_json(rep));
      if (!cfg.report.empty()) {
        for (const auto& v : rep.vitals) write_plot_csvs(v, stem_of(cfg.report));
      }
      return 0;
    }

    if (*gc) {
      bool ok = true;
      for (const auto& r : run_gradcheck_suite(gc_seed)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.checked << " entries, max error "
                  << r.max_error << ", " << r.skipped << " skipped at kinks)\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
