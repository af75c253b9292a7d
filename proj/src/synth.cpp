#include "amgan/synth.hpp"

#include "amgan/errors.hpp"
#include "amgan/record_csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace amgan {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kTemplateGrid = 1024;
constexpr double kMotionLowHz = 0.5;
constexpr double kMotionHighHz = 3.5;
constexpr double kHarmonicGuardHz = 0.5;
constexpr double kSidebandGuardHz = 0.2;
constexpr double kHrRamp = 0.02;
constexpr double kMaxSecondHarmonic = 0.7;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL));
}

double raw_template(const std::vector<PulseComponent>& comps, double u) {
  double v = 0.0;
  for (const auto& c : comps) {
    double d = u - c.offset;
    d -= std::floor(d + 0.5);
    v += c.amplitude * std::exp(-0.5 * (d / c.width) * (d / c.width));
  }
  return v;
}

// Beat template sampled as a function of beat phase, normalised to zero mean
// and unit RMS over one beat.
class PulseTemplate {
 public:
  explicit PulseTemplate(const std::vector<PulseComponent>& comps) : comps_(comps) {
    double s = 0.0, ss = 0.0;
    for (std::size_t k = 0; k < kTemplateGrid; ++k) {
      const double v = raw_template(comps_, static_cast<double>(k) / kTemplateGrid);
      s += v;
      ss += v * v;
    }
    mean_ = s / kTemplateGrid;
    scale_ = 1.0 / std::sqrt(std::max(ss / kTemplateGrid - mean_ * mean_, 1e-300));
  }

  double operator()(double phase) const {
    const double u = phase / kTwoPi - std::floor(phase / kTwoPi);
    return (raw_template(comps_, u) - mean_) * scale_;
  }

 private:
  std::vector<PulseComponent> comps_;
  double mean_ = 0.0;
  double scale_ = 1.0;
};

// Running phase of a rate trajectory given in cycles per minute.
Samples integrate_phase(const Trajectory& rate, std::size_t n, double fs, double phase0) {
  Samples ph(n);
  double p = phase0;
  for (std::size_t i = 0; i < n; ++i) {
    ph[i] = p;
    p += kTwoPi * rate.at(static_cast<double>(i) / fs) / 60.0 / fs;
  }
  return ph;
}

std::size_t sample_count(double duration_s, double fs) {
  if (!(duration_s > 0.0) || !(fs > 0.0)) throw InvalidInput("synth: duration and rate must be positive");
  return static_cast<std::size_t>(std::llround(duration_s * fs));
}

const std::array<PpgChannel, 3> kAllChannels = {PpgChannel::green, PpgChannel::red, PpgChannel::infrared};

Samples pulsatile(const SubjectProfile& profile, const Samples& beat_phase, const Samples& resp_phase) {
  const PulseTemplate tpl(profile.pulse_shape);
  Samples out(beat_phase.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = tpl(beat_phase[i]) * (1.0 + profile.resp_modulation * std::sin(resp_phase[i]));
  }
  return out;
}

}  // namespace

double harmonic_ratio(const std::vector<PulseComponent>& shape, int k) {
  if (k < 1) throw InvalidInput("harmonic_ratio: harmonic index must be positive");
  auto coef = [&](int h) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < kTemplateGrid; ++i) {
      const double u = static_cast<double>(i) / kTemplateGrid;
      const double v = raw_template(shape, u);
      re += v * std::cos(kTwoPi * h * u);
      im -= v * std::sin(kTwoPi * h * u);
    }
    return std::hypot(re, im);
  };
  return coef(k) / coef(1);
}

double Trajectory::at(double t) const {
  if (points.empty()) throw InvalidInput("trajectory: no points");
  if (t <= points.front().t) return points.front().value;
  if (t >= points.back().t) return points.back().value;
  auto it = std::upper_bound(points.begin(), points.end(), t,
                             [](double v, const TrajectoryPoint& p) { return v < p.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double w = (t - a.t) / (b.t - a.t);
  return a.value + w * (b.value - a.value);
}

double Trajectory::min_value() const {
  double m = INFINITY;
  for (const auto& p : points) m = std::min(m, p.value);
  return m;
}

double Trajectory::max_value() const {
  double m = -INFINITY;
  for (const auto& p : points) m = std::max(m, p.value);
  return m;
}

void SubjectProfile::validate() const {
  auto check_traj = [](const Trajectory& tr, double lo, double hi, const char* what) {
    if (tr.points.empty()) throw InvalidInput(std::string("profile: empty ") + what + " trajectory");
    for (std::size_t i = 0; i < tr.points.size(); ++i) {
      const auto& p = tr.points[i];
      if (!std::isfinite(p.t) || !std::isfinite(p.value) || p.value < lo || p.value > hi) {
        throw InvalidInput(std::string("profile: ") + what + " out of range");
      }
      if (i > 0 && !(p.t > tr.points[i - 1].t)) {
        throw InvalidInput(std::string("profile: ") + what + " knots must be increasing in time");
      }
    }
  };
  check_traj(hr_trajectory, 40.0, 200.0, "hr");
  check_traj(rr_trajectory, 8.0, 45.0, "rr");
  if (!(spo2_true >= 70.0 && spo2_true <= 100.0)) throw InvalidInput("profile: spo2 out of [70, 100]");
  if (pulse_shape.empty()) throw InvalidInput("profile: pulse shape needs at least one component");
  for (const auto& c : pulse_shape) {
    if (!(c.width > 0.0) || !std::isfinite(c.amplitude) || !std::isfinite(c.offset)) {
      throw InvalidInput("profile: invalid pulse component");
    }
  }
  for (PpgChannel c : {PpgChannel::green, PpgChannel::infrared}) {
    if (!perfusion.count(c) || !(perfusion.at(c) > 0.0)) throw InvalidInput("profile: perfusion must be positive");
  }
  for (PpgChannel c : kAllChannels) {
    if (!baseline.count(c) || !(baseline.at(c) > 0.0)) throw InvalidInput("profile: baseline must be positive");
  }
  if (!(resp_modulation >= 0.0 && resp_modulation < 1.0)) throw InvalidInput("profile: resp modulation in [0, 1)");
}

double SubjectProfile::ratio_of_ratios() const { return (109.0 - spo2_true) / 21.5; }

double SubjectProfile::channel_perfusion(PpgChannel c) const {
  if (c == PpgChannel::red) return ratio_of_ratios() * perfusion.at(PpgChannel::infrared);
  return perfusion.at(c);
}

void ArtefactModel::validate() const {
  for (double x : xi) {
    if (!std::isfinite(x)) throw InvalidInput("artefact: xi must be finite");
  }
  for (const auto& axis : acc_generators) {
    for (const auto& s : axis) {
      if (!(s.freq_hz >= 0.5 && s.freq_hz <= 3.5)) throw InvalidInput("artefact: generator frequency outside [0.5, 3.5] Hz");
      if (!std::isfinite(s.amplitude) || !std::isfinite(s.phase)) throw InvalidInput("artefact: non-finite generator");
    }
  }
  if (!(jitter_sigma >= 0.0) || !(nonlinear_gain >= 0.0)) throw InvalidInput("artefact: negative jitter or gain");
  for (const auto& [c, g] : channel_gain) {
    if (!std::isfinite(g)) throw InvalidInput("artefact: non-finite channel gain");
  }
}

bool ArtefactModel::has_motion() const {
  for (std::size_t a = 0; a < 3; ++a) {
    for (const auto& s : acc_generators[a]) {
      if (s.amplitude != 0.0) return true;
    }
    if (hr_locked_amplitude[a] != 0.0) return true;
  }
  return jitter_sigma > 0.0;
}

void ScalingFixture::validate() const {
  for (double l : lambda_diag) {
    if (!(l > 0.0)) throw InvalidInput("scaling fixture: lambda entries must be positive");
  }
  if (!(signal_scale > 0.0)) throw InvalidInput("scaling fixture: signal scale must be positive");
}

Samples beat_train(const SubjectProfile& profile, double duration_s, double fs) {
  profile.validate();
  const std::size_t n = sample_count(duration_s, fs);
  const PulseTemplate tpl(profile.pulse_shape);
  const Samples ph = integrate_phase(profile.hr_trajectory, n, fs, 0.0);
  Samples out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = tpl(ph[i]);
  return out;
}

SynthPair synth_record(const SubjectProfile& profile, const ArtefactModel& artefact, double duration_s, double fs,
                       std::uint64_t seed) {
  profile.validate();
  artefact.validate();
  const std::size_t n = sample_count(duration_s, fs);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uphase(0.0, kTwoPi);
  const double beat0 = uphase(rng);
  const double resp0 = uphase(rng);

  const Samples beat_phase = integrate_phase(profile.hr_trajectory, n, fs, beat0);
  const Samples resp_phase = integrate_phase(profile.rr_trajectory, n, fs, resp0);
  const Samples pulse = pulsatile(profile, beat_phase, resp_phase);

  std::array<Samples, 3> acc;
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (std::size_t a = 0; a < 3; ++a) {
    acc[a].assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      double v = 0.0;
      for (const auto& s : artefact.acc_generators[a]) v += s.amplitude * std::sin(kTwoPi * s.freq_hz * t + s.phase);
      if (artefact.hr_locked_amplitude[a] != 0.0) {
        v += artefact.hr_locked_amplitude[a] * std::sin(beat_phase[i] + artefact.hr_locked_phase[a]);
      }
      acc[a][i] = v;
    }
    if (artefact.jitter_sigma > 0.0) {
      for (double& v : acc[a]) v += artefact.jitter_sigma * jitter(rng);
    }
  }

  Samples noise(n, 0.0);
  for (std::size_t a = 0; a < 3; ++a) {
    const Samples vel = integrate_velocity(acc[a], fs);
    for (std::size_t i = 0; i < n; ++i) noise[i] += artefact.xi[a] * acc[a][i] + artefact.xi[a + 3] * vel[i];
  }
  if (artefact.nonlinear_gain > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      noise[i] += artefact.nonlinear_gain * (acc[0][i] * acc[0][i] + acc[1][i] * acc[1][i] + acc[2][i] * acc[2][i]);
    }
  }

  std::map<PpgChannel, Samples> clean, noisy;
  for (PpgChannel c : kAllChannels) {
    const double dc = profile.baseline.at(c);
    const double amp = dc * profile.channel_perfusion(c);
    const auto g = artefact.channel_gain.find(c);
    const double gain = amp * (g == artefact.channel_gain.end() ? 1.0 : g->second);
    Samples cl(n), no(n);
    for (std::size_t i = 0; i < n; ++i) {
      cl[i] = dc + amp * pulse[i];
      no[i] = cl[i] + gain * noise[i];
    }
    clean.emplace(c, std::move(cl));
    noisy.emplace(c, std::move(no));
  }
  return {MultiChannelRecord(fs, std::move(clean), acc[0], acc[1], acc[2]),
          MultiChannelRecord(fs, std::move(noisy), acc[0], acc[1], acc[2])};
}

double artefact_intensity(const SynthPair& pair, const FilterSpec& fspec, PpgChannel channel) {
  const double fs = pair.clean.sample_rate_hz();
  const Samples& cl = pair.clean.ppg(channel);
  const Samples& no = pair.noisy.ppg(channel);
  Samples diff(cl.size());
  for (std::size_t i = 0; i < cl.size(); ++i) diff[i] = no[i] - cl[i];
  const Samples fd = bandpass(diff, fs, fspec);
  const Samples fc = bandpass(cl, fs, fspec);
  const std::size_t edge = std::min(fspec.untrusted_edge_samples(), cl.size() / 4);
  const std::span<const double> nd(fd.data() + edge, fd.size() - 2 * edge);
  const std::span<const double> nc(fc.data() + edge, fc.size() - 2 * edge);
  return rms(nd) / rms(nc);
}

std::vector<StageSpec> default_stages() {
  return {{60.0, 75.0, 14.0, 0.5}, {60.0, 100.0, 20.0, 1.0}, {60.0, 130.0, 26.0, 1.5}, {60.0, 155.0, 32.0, 2.0}};
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InvalidInput("unknown split '" + s + "'");
}

std::size_t Corpus::window_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.windows.size();
  return n;
}

namespace {

// Frequency in [lo, hi] at least `guard` Hz from every harmonic k*f of the
// heart-rate range (k = 1..3) and `side_guard` Hz from the respiratory
// sidebands k*f +- rr (k = 1..2).
double draw_motion_frequency(std::mt19937_64& rng, double hr_lo, double hr_hi, double rr_lo, double rr_hi,
                             double lo, double hi, double guard, double side_guard) {
  std::uniform_real_distribution<double> u(lo, hi);
  auto clear = [](double f, double a, double b, double g) { return f < a - g || f > b + g; };
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double f = u(rng);
    bool ok = true;
    for (int k = 1; k <= 3 && ok; ++k) ok = clear(f, k * hr_lo, k * hr_hi, guard);
    for (int k = 1; k <= 2 && ok; ++k) {
      ok = clear(f, k * hr_lo + rr_lo, k * hr_hi + rr_hi, side_guard) &&
           clear(f, k * hr_lo - rr_hi, k * hr_hi - rr_lo, side_guard);
    }
    if (ok) return f;
  }
  throw InvalidInput("synth: no motion frequency clears the heart-rate harmonics");
}

struct SubjectTraits {
  double spo2, hr_offset, rr_offset, resp_mod;
  double perf_green, perf_ir;
  double gain_red, gain_ir;
  std::vector<PulseComponent> shape;
};

SubjectTraits draw_subject(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto U = [&](double a, double b) { return a + (b - a) * u(rng); };
  SubjectTraits t;
  t.spo2 = U(93.0, 99.0);
  t.hr_offset = U(-8.0, 8.0);
  t.rr_offset = U(-2.0, 2.0);
  t.resp_mod = U(0.15, 0.3);
  t.perf_green = U(0.015, 0.03);
  t.perf_ir = U(0.01, 0.02);
  t.gain_red = U(0.7, 1.3);
  t.gain_ir = U(0.7, 1.3);
  // Redraw shapes whose second harmonic rivals the fundamental.
  do {
    t.shape = {{1.0, U(0.06, 0.10), U(0.18, 0.26)}, {U(0.2, 0.5), U(0.08, 0.13), U(0.48, 0.58)}};
  } while (harmonic_ratio(t.shape, 2) > kMaxSecondHarmonic);
  return t;
}

}  // namespace

Corpus build_corpus(std::size_t n_subjects, const std::vector<StageSpec>& stages, double fs, std::uint64_t seed,
                    const CorpusOptions& options) {
  if (n_subjects == 0 || stages.empty()) throw InvalidInput("build_corpus: need at least one subject and stage");
  WindowSpec wspec = options.window;
  wspec.sample_rate_hz = fs;
  wspec.validate();
  options.filter.validate(fs);

  const std::size_t n_test =
      options.n_test >= 0 ? static_cast<std::size_t>(options.n_test) : n_subjects / 3;
  if (n_test > n_subjects) throw InvalidInput("build_corpus: more test subjects than subjects");
  const std::size_t n_val =
      options.n_val >= 0 ? static_cast<std::size_t>(options.n_val) : (n_subjects - n_test) / 4;
  if (n_test + n_val > n_subjects) throw InvalidInput("build_corpus: split exceeds subject count");
  const std::size_t n_train = n_subjects - n_test - n_val;

  Corpus corpus;
  corpus.sample_rate_hz = fs;
  corpus.seed = seed;
  corpus.options = options;
  corpus.options.window = wspec;

  std::size_t id = 0;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    std::mt19937_64 srng(derive_seed(seed, s + 1, 0));
    const SubjectTraits traits = draw_subject(srng);
    const Split split = s < n_train ? Split::train : (s < n_train + n_val ? Split::val : Split::test);

    for (std::size_t k = 0; k < stages.size(); ++k) {
      const StageSpec& st = stages[k];
      const std::uint64_t rseed = derive_seed(seed, s + 1, k + 1);
      std::mt19937_64 rng(rseed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      auto U = [&](double a, double b) { return a + (b - a) * u(rng); };

      SubjectProfile prof;
      const double hr = std::clamp(st.hr_bpm + traits.hr_offset, 45.0, 190.0);
      const double rr = std::clamp(st.rr_bpm + traits.rr_offset, 9.0, 44.0);
      prof.hr_trajectory.points = {{0.0, std::clamp(hr * (1.0 - kHrRamp), 40.0, 200.0)},
                                   {st.duration_s, std::clamp(hr * (1.0 + kHrRamp), 40.0, 200.0)}};
      prof.rr_trajectory.points = {{0.0, std::clamp(rr - 1.0, 8.0, 45.0)}, {st.duration_s, std::clamp(rr + 1.0, 8.0, 45.0)}};
      prof.spo2_true = traits.spo2;
      prof.pulse_shape = traits.shape;
      prof.perfusion = {{PpgChannel::green, traits.perf_green}, {PpgChannel::infrared, traits.perf_ir}};
      prof.resp_modulation = traits.resp_mod;

      ArtefactModel art;
      art.channel_gain = {{PpgChannel::green, 1.0}, {PpgChannel::red, traits.gain_red}, {PpgChannel::infrared, traits.gain_ir}};
      art.nonlinear_gain = options.nonlinear_gain;
      art.jitter_sigma = 0.0;
      const double hr_lo = prof.hr_trajectory.min_value() / 60.0;
      const double hr_hi = prof.hr_trajectory.max_value() / 60.0;
      const double rr_lo = prof.rr_trajectory.min_value() / 60.0;
      const double rr_hi = prof.rr_trajectory.max_value() / 60.0;
      // One cadence shared by all axes; each axis has its own amplitude and phase.
      const double cadence = draw_motion_frequency(rng, hr_lo, hr_hi, rr_lo, rr_hi, kMotionLowHz, kMotionHighHz,
                                                   kHarmonicGuardHz, kSidebandGuardHz);
      for (std::size_t a = 0; a < 3; ++a) {
        art.acc_generators[a].push_back({cadence, U(0.5, 1.5), U(0.0, kTwoPi)});
        if (options.collision) {
          art.hr_locked_amplitude[a] = U(0.8, 1.5);
          art.hr_locked_phase[a] = U(0.0, kTwoPi);
        }
      }
      std::normal_distribution<double> nrm(0.0, 1.0);
      for (double& x : art.xi) x = nrm(rng);

      SynthPair pair = synth_record(prof, art, st.duration_s, fs, rseed);
      double measured = 0.0;
      if (st.intensity > 0.0) {
        measured = artefact_intensity(pair, options.filter);
        const double factor = st.intensity / measured;
        for (double& x : art.xi) x *= factor;
        if (art.nonlinear_gain > 0.0) art.nonlinear_gain *= factor;
      } else {
        art.xi.fill(0.0);
      }
      pair = synth_record(prof, art, st.duration_s, fs, rseed);

      CorpusRecord rec{id, s, k, split, rseed, prof, art, 0.0, std::move(pair), {}};
      rec.intensity = artefact_intensity(rec.data, options.filter);
      const auto frames = make_windows(rec.data.noisy, wspec);
      const double half = 0.5 * wspec.window_seconds;
      for (std::size_t w = 0; w < frames.size(); ++w) {
        const double t0 = static_cast<double>(frames[w].begin) / fs;
        rec.windows.push_back({w, t0, prof.hr_trajectory.at(t0 + half), prof.rr_trajectory.at(t0 + half), prof.spo2_true});
      }
      corpus.records.push_back(std::move(rec));
      ++id;
    }
  }
  return corpus;
}

namespace {

using nlohmann::json;

json trajectory_json(const Trajectory& t) {
  json a = json::array();
  for (const auto& p : t.points) a.push_back({p.t, p.value});
  return a;
}

Trajectory trajectory_from(const json& j) {
  Trajectory t;
  for (const auto& p : j) t.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return t;
}

json channel_map_json(const std::map<PpgChannel, double>& m) {
  json o = json::object();
  for (const auto& [c, v] : m) o[to_string(c)] = v;
  return o;
}

PpgChannel channel_from(const std::string& s) {
  if (s == "green") return PpgChannel::green;
  if (s == "red") return PpgChannel::red;
  if (s == "ir") return PpgChannel::infrared;
  throw InvalidInput("manifest: unknown channel '" + s + "'");
}

std::map<PpgChannel, double> channel_map_from(const json& j) {
  std::map<PpgChannel, double> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[channel_from(it.key())] = it.value().get<double>();
  return m;
}

std::string record_file(std::size_t id) { return "rec" + std::to_string(id) + ".csv"; }
std::string clean_file(std::size_t id) { return "rec" + std::to_string(id) + "_clean.csv"; }

json manifest(const Corpus& corpus) {
  json j;
  j["format"] = "amgan-corpus/1";
  j["sample_rate_hz"] = corpus.sample_rate_hz;
  j["seed"] = corpus.seed;
  const auto& o = corpus.options;
  j["options"] = {{"collision", o.collision},
                  {"nonlinear_gain", o.nonlinear_gain},
                  {"n_val", o.n_val},
                  {"n_test", o.n_test},
                  {"window", {{"window_seconds", o.window.window_seconds},
                              {"hop_seconds", o.window.hop_seconds},
                              {"sample_rate_hz", o.window.sample_rate_hz}}},
                  {"filter", {{"order", o.filter.order},
                              {"low_cut_hz", o.filter.low_cut_hz},
                              {"high_cut_hz", o.filter.high_cut_hz}}}};
  json recs = json::array();
  for (const auto& r : corpus.records) {
    json pj;
    pj["hr_trajectory"] = trajectory_json(r.profile.hr_trajectory);
    pj["rr_trajectory"] = trajectory_json(r.profile.rr_trajectory);
    pj["spo2_true"] = r.profile.spo2_true;
    json shape = json::array();
    for (const auto& c : r.profile.pulse_shape) shape.push_back({c.amplitude, c.width, c.offset});
    pj["pulse_shape"] = shape;
    pj["perfusion"] = channel_map_json(r.profile.perfusion);
    pj["baseline"] = channel_map_json(r.profile.baseline);
    pj["resp_modulation"] = r.profile.resp_modulation;

    json aj;
    aj["xi"] = r.artefact.xi;
    json gens = json::array();
    for (const auto& axis : r.artefact.acc_generators) {
      json ax = json::array();
      for (const auto& s : axis) ax.push_back({s.freq_hz, s.amplitude, s.phase});
      gens.push_back(ax);
    }
    aj["acc_generators"] = gens;
    aj["jitter_sigma"] = r.artefact.jitter_sigma;
    aj["nonlinear_gain"] = r.artefact.nonlinear_gain;
    aj["hr_locked_amplitude"] = r.artefact.hr_locked_amplitude;
    aj["hr_locked_phase"] = r.artefact.hr_locked_phase;
    aj["channel_gain"] = channel_map_json(r.artefact.channel_gain);

    json wins = json::array();
    for (const auto& w : r.windows) {
      wins.push_back({{"index", w.index}, {"t0", w.t0}, {"hr_bpm", w.hr_bpm}, {"rr_bpm", w.rr_bpm}, {"spo2_pct", w.spo2_pct}});
    }
    recs.push_back({{"id", r.id},
                    {"file", record_file(r.id)},
                    {"clean_file", clean_file(r.id)},
                    {"subject", r.subject},
                    {"stage", r.stage},
                    {"split", to_string(r.split)},
                    {"seed", r.seed},
                    {"duration_s", r.data.noisy.duration_seconds()},
                    {"intensity", r.intensity},
                    {"profile", pj},
                    {"artefact", aj},
                    {"windows", wins}});
  }
  j["records"] = recs;
  return j;
}

}  // namespace

std::string manifest_json(const Corpus& corpus) { return manifest(corpus).dump(2) + "\n"; }

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& r : corpus.records) {
    write_record_csv(dir / record_file(r.id), r.data.noisy);
    write_record_csv(dir / clean_file(r.id), r.data.clean);
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw InvalidInput("write_corpus: cannot open manifest in " + dir.string());
  out << manifest_json(corpus);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw InvalidInput("read_corpus: no manifest.json in " + dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("read_corpus: malformed manifest: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "amgan-corpus/1") throw InvalidInput("read_corpus: unknown format");
    Corpus c;
    c.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& o = j.at("options");
    c.options.collision = o.at("collision").get<bool>();
    c.options.nonlinear_gain = o.at("nonlinear_gain").get<double>();
    c.options.n_val = o.at("n_val").get<int>();
    c.options.n_test = o.at("n_test").get<int>();
    c.options.window = {o.at("window").at("window_seconds").get<double>(), o.at("window").at("hop_seconds").get<double>(),
                        o.at("window").at("sample_rate_hz").get<double>()};
    c.options.filter = {o.at("filter").at("order").get<int>(), o.at("filter").at("low_cut_hz").get<double>(),
                        o.at("filter").at("high_cut_hz").get<double>()};
    for (const auto& rj : j.at("records")) {
      SubjectProfile prof;
      const auto& pj = rj.at("profile");
      prof.hr_trajectory = trajectory_from(pj.at("hr_trajectory"));
      prof.rr_trajectory = trajectory_from(pj.at("rr_trajectory"));
      prof.spo2_true = pj.at("spo2_true").get<double>();
      prof.pulse_shape.clear();
      for (const auto& s : pj.at("pulse_shape")) {
        prof.pulse_shape.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
      }
      prof.perfusion = channel_map_from(pj.at("perfusion"));
      prof.baseline = channel_map_from(pj.at("baseline"));
      prof.resp_modulation = pj.at("resp_modulation").get<double>();

      ArtefactModel art;
      const auto& aj = rj.at("artefact");
      art.xi = aj.at("xi").get<std::array<double, kMotionColumns>>();
      for (std::size_t a = 0; a < 3; ++a) {
        for (const auto& s : aj.at("acc_generators").at(a)) {
          art.acc_generators[a].push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
        }
      }
      art.jitter_sigma = 0.0;
      art.nonlinear_gain = aj.at("nonlinear_gain").get<double>();
      art.hr_locked_amplitude = aj.at("hr_locked_amplitude").get<std::array<double, 3>>();
      art.hr_locked_phase = aj.at("hr_locked_phase").get<std::array<double, 3>>();
      art.channel_gain = channel_map_from(aj.at("channel_gain"));

      CorpusRecord r{rj.at("id").get<std::size_t>(),
                     rj.at("subject").get<std::size_t>(),
                     rj.at("stage").get<std::size_t>(),
                     split_from_string(rj.at("split").get<std::string>()),
                     rj.at("seed").get<std::uint64_t>(),
                     prof,
                     art,
                     rj.at("intensity").get<double>(),
                     {read_record_csv(dir / rj.at("clean_file").get<std::string>()),
                      read_record_csv(dir / rj.at("file").get<std::string>())},
                     {}};
      for (const auto& w : rj.at("windows")) {
        r.windows.push_back({w.at("index").get<std::size_t>(), w.at("t0").get<double>(), w.at("hr_bpm").get<double>(),
                             w.at("rr_bpm").get<double>(), w.at("spo2_pct").get<double>()});
      }
      c.records.push_back(std::move(r));
    }
    return c;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("read_corpus: manifest field error: ") + e.what());
  }
}

}  // namespace amgan
