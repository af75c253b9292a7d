#include <doctest.h>

#include "amgan/errors.hpp"
#include "amgan/motion.hpp"
#include "amgan/synth.hpp"
#include "amgan/vitals.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace amgan;
using namespace amgan::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("amgan_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// Per-window Pearson R between s_ref and the band-passed clean signal.
std::vector<double> mr_window_r(const SynthPair& pair, bool skip_edges = false) {
  const FilterSpec fspec;
  const WindowSpec wspec;
  const auto frames = reference_pipeline(pair.noisy, fspec, wspec);
  const auto clean = bandpass(pair.clean.ppg(PpgChannel::green), pair.clean.sample_rate_hz(), fspec);
  const auto ranges = make_windows(pair.noisy, wspec);
  std::vector<double> r;
  for (std::size_t w = 0; w < frames.size(); ++w) {
    if (skip_edges && frames[w].edge) continue;
    const std::span<const double> c(clean.data() + ranges[w].begin, ranges[w].length);
    r.push_back(pearson_r(frames[w].s_ref, c));
  }
  return r;
}

}  // namespace

TEST_CASE("trajectory interpolation") {
  Trajectory t{{{0.0, 60.0}, {10.0, 80.0}, {20.0, 80.0}}};
  CHECK(t.at(-1.0) == 60.0);
  CHECK(t.at(5.0) == 70.0);
  CHECK(t.at(15.0) == 80.0);
  CHECK(t.at(30.0) == 80.0);
  CHECK(t.min_value() == 60.0);
  CHECK(t.max_value() == 80.0);
}

TEST_CASE("profile and artefact validation") {
  SubjectProfile p;
  p.hr_trajectory.points = {{0.0, 250.0}};
  p.rr_trajectory.points = {{0.0, 15.0}};
  CHECK_THROWS_AS(synth_record(p, ArtefactModel{}, 8.0, 32.0, 1), InvalidInput);
  p.hr_trajectory.points = {{0.0, 70.0}};
  p.spo2_true = 60.0;
  CHECK_THROWS_AS(synth_record(p, ArtefactModel{}, 8.0, 32.0, 1), InvalidInput);
  p.spo2_true = 97.0;
  p.pulse_shape.clear();
  CHECK_THROWS_AS(synth_record(p, ArtefactModel{}, 8.0, 32.0, 1), InvalidInput);

  SubjectProfile ok;
  ok.hr_trajectory.points = {{0.0, 70.0}};
  ok.rr_trajectory.points = {{0.0, 15.0}};
  ArtefactModel a;
  a.acc_generators[0] = {{5.0, 1.0, 0.0}};
  CHECK_THROWS_AS(synth_record(ok, a, 8.0, 32.0, 1), InvalidInput);

  ScalingFixture f;
  f.lambda_diag[2] = 0.0;
  CHECK_THROWS_AS(f.validate(), InvalidInput);
}

TEST_CASE("no artefact: noisy equals clean bit-exactly") {
  SubjectProfile p;
  p.hr_trajectory.points = {{0.0, 70.0}, {30.0, 90.0}};
  p.rr_trajectory.points = {{0.0, 15.0}};
  ArtefactModel a;
  a.acc_generators[1] = {{1.0, 0.0, 0.3}};
  const auto pair = synth_record(p, a, 30.0, 32.0, 9);
  for (const auto& [c, v] : pair.clean.ppg_channels()) CHECK(pair.noisy.ppg(c) == v);
  for (double x : pair.noisy.acc_y()) CHECK(x == 0.0);
  const auto again = synth_record(p, a, 30.0, 32.0, 9);
  CHECK(again.clean.ppg(PpgChannel::red) == pair.clean.ppg(PpgChannel::red));
}

TEST_CASE("motionless record: reference pipeline is the band-passed PPG") {
  SubjectProfile p;
  p.hr_trajectory.points = {{0.0, 70.0}};
  p.rr_trajectory.points = {{0.0, 15.0}};
  const auto pair = synth_record(p, ArtefactModel{}, 20.0, 32.0, 2);
  const auto frames = reference_pipeline(pair.noisy, FilterSpec{}, WindowSpec{});
  const auto filtered = bandpass(pair.noisy.ppg(PpgChannel::green), 32.0, FilterSpec{});
  const auto ranges = make_windows(pair.noisy, WindowSpec{});
  REQUIRE(frames.size() == ranges.size());
  for (std::size_t w = 0; w < frames.size(); ++w) {
    CHECK(frames[w].zero_motion);
    CHECK(frames[w].t0 == static_cast<double>(ranges[w].begin) / 32.0);
    for (std::size_t i = 0; i < ranges[w].length; ++i) {
      CHECK(std::abs(frames[w].s_ref[i] - filtered[ranges[w].begin + i]) < 1e-8);
    }
  }
}

TEST_CASE("linear artefacts are removed by the reference pipeline") {
  CorpusOptions opt;
  opt.n_test = 0;
  opt.n_val = 0;
  const auto corpus = build_corpus(4, default_stages(), 32.0, 21, opt);
  for (const auto& rec : corpus.records) {
    CHECK(rec.intensity == doctest::Approx(default_stages()[rec.stage].intensity).epsilon(1e-6));
    const auto r = mr_window_r(rec.data, true);
    CHECK(r.size() == rec.windows.size() - 4);
    for (double v : r) CHECK(v > 0.99);
    // Windows touching the record edges still carry most of the pulse.
    for (double v : mr_window_r(rec.data)) CHECK(v > 0.9);
  }
}

TEST_CASE("collision corpus defeats the reference pipeline") {
  CorpusOptions opt;
  opt.collision = true;
  const auto corpus = build_corpus(2, default_stages(), 32.0, 22, opt);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& rec : corpus.records) {
    for (double r : mr_window_r(rec.data)) {
      sum += r;
      ++n;
    }
  }
  CHECK(sum / static_cast<double>(n) < 0.9);
}

TEST_CASE("harmonic_ratio of simple templates") {
  // A narrow pulse has a nearly flat spectrum; a wide one is close to a sinusoid.
  CHECK(harmonic_ratio({{1.0, 0.01, 0.5}}) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(harmonic_ratio({{1.0, 0.2, 0.5}}) < 0.3);
  // Two equal pulses half a beat apart cancel the fundamental.
  CHECK(harmonic_ratio({{1.0, 0.05, 0.25}, {1.0, 0.05, 0.75}}) > 1e6);
  CHECK_THROWS_AS(harmonic_ratio({{1.0, 0.1, 0.5}}, 0), InvalidInput);
}

TEST_CASE("clean channels round-trip heart rate and saturation") {
  CorpusOptions opt;
  const FilterSpec fspec;
  for (std::uint64_t seed : {23u, 2024u}) {
    const auto corpus = build_corpus(12, default_stages(), 32.0, seed, opt);
    for (const auto& rec : corpus.records) {
      CHECK(harmonic_ratio(rec.profile.pulse_shape) <= 0.7);
      const auto& clean = rec.data.clean;
      const auto green = bandpass(clean.ppg(PpgChannel::green), 32.0, fspec);
      const auto ranges = make_windows(clean, opt.window);
      for (const auto& w : rec.windows) {
        const auto& f = ranges[w.index];
        const std::span<const double> g(green.data() + f.begin, f.length);
        CHECK(std::abs(estimate_hr(g, 32.0) - w.hr_bpm) <= 1.5);
        const std::span<const double> red(clean.ppg(PpgChannel::red).data() + f.begin, f.length);
        const std::span<const double> ir(clean.ppg(PpgChannel::infrared).data() + f.begin, f.length);
        CHECK(std::abs(estimate_spo2(red, ir, 32.0) - rec.profile.spo2_true) <= 0.5);
      }
    }
  }
}

TEST_CASE("corpus window counts, splits and determinism") {
  const auto one = build_corpus(1, {{60.0, 80.0, 15.0, 1.0}}, 32.0, 5);
  REQUIRE(one.records.size() == 1);
  CHECK(one.records[0].windows.size() == 53);
  CHECK(one.window_count() == make_windows(60 * 32, WindowSpec{}).size());

  const auto full = build_corpus(12, default_stages(), 32.0, 1);
  CHECK(full.records.size() == 48);
  CHECK(full.window_count() == 2544);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& r : full.records) {
    counts[static_cast<int>(r.split)] += 1;
    CHECK((r.subject < 6) == (r.split == Split::train));
    CHECK((r.subject >= 8) == (r.split == Split::test));
  }
  CHECK(counts[0] == 24);
  CHECK(counts[1] == 8);
  CHECK(counts[2] == 16);

  const auto a = scratch_dir("corpus_a");
  const auto b = scratch_dir("corpus_b");
  write_corpus(build_corpus(2, default_stages(), 32.0, 77), a);
  write_corpus(build_corpus(2, default_stages(), 32.0, 77), b);
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
    ++files;
  }
  CHECK(files == 2 * 8 + 1);
  CHECK(slurp(a / "manifest.json") != manifest_json(build_corpus(2, default_stages(), 32.0, 78)));

  const auto back = read_corpus(a);
  const auto orig = build_corpus(2, default_stages(), 32.0, 77);
  REQUIRE(back.records.size() == orig.records.size());
  for (std::size_t i = 0; i < orig.records.size(); ++i) {
    CHECK(back.records[i].data.noisy.ppg(PpgChannel::green) == orig.records[i].data.noisy.ppg(PpgChannel::green));
    CHECK(back.records[i].data.clean.acc_z() == orig.records[i].data.clean.acc_z());
    CHECK(back.records[i].artefact.xi == orig.records[i].artefact.xi);
    CHECK(back.records[i].windows.size() == orig.records[i].windows.size());
    CHECK(back.records[i].split == orig.records[i].split);
  }
  CHECK(manifest_json(back) == manifest_json(orig));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("scaling fixture: motion and signal scaling commute with projection") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  const auto corpus = build_corpus(1, {{20.0, 90.0, 15.0, 1.0}}, 32.0, 31);
  const auto cond = condition_record(corpus.records[0].data.noisy, FilterSpec{});
  const auto frame = make_windows(cond.length, WindowSpec{})[3];
  const auto m = motion_window(cond, frame);
  const Samples p(cond.ppg.at(PpgChannel::green).begin() + static_cast<std::ptrdiff_t>(frame.begin),
                  cond.ppg.at(PpgChannel::green).begin() + static_cast<std::ptrdiff_t>(frame.end()));
  for (int trial = 0; trial < 10; ++trial) {
    ScalingFixture fx;
    for (double& l : fx.lambda_diag) l = u(rng);
    fx.signal_scale = u(rng);
    fx.validate();
    Samples lp(p);
    for (double& v : lp) v *= fx.signal_scale;
    const auto s1 = remove_motion(lp, build_basis(m.scaled(fx.lambda_diag)));
    const auto s0 = remove_motion(p, build_basis(m));
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(std::abs(s1[i] - fx.signal_scale * s0[i]) < 1e-8 * fx.signal_scale * max_abs_range(p, 0, p.size()));
    }
  }
}
