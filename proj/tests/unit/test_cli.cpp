#include <doctest.h>

#include "amgan/signal.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

// Exit status of the CLI with stdout and stderr discarded.
int run(const std::string& args) {
  const std::string cmd = std::string(AMGAN_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("amgan_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("cli: usage errors exit 2, validation failures exit 1") {
  Scratch s;
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("simulate --subjects 2") == 2);  // --out is required
  CHECK(run("denoise --method median --in x.csv") == 2);
  CHECK(run("train --corpus " + s / "nowhere") == 1);
  CHECK(run("denoise --in " + s / "missing.csv") == 1);

  std::ofstream(s / "bad.cfg") << "train.epochs = 3\nno.such.key = 1\n";
  CHECK(run("simulate --config " + s / "bad.cfg" + " --out " + s / "d") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("cli: simulate then denoise gives one row per window") {
  Scratch s;
  REQUIRE(run("simulate --subjects 2 --seed 7 --out " + s / "d") == 0);
  CHECK(fs::exists(s / "d/manifest.json"));
  CHECK(fs::exists(s / "d/rec0_truth.csv"));

  REQUIRE(run("denoise --method mr --in " + s / "d/rec0.csv" + " --out " + s / "w.csv") == 0);
  const amgan::WindowSpec w;
  const std::size_t expected = amgan::make_windows(static_cast<std::size_t>(60 * 32), w).size();
  CHECK(line_count(s / "w.csv") == expected + 1);

  std::ifstream in(s / "w.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("window_index,t0,sample_0,", 0) == 0);
  CHECK(std::count(header.begin(), header.end(), ',') == 1 + static_cast<long>(w.window_samples()));
}

TEST_CASE("cli: evaluate on an artefact-free corpus recovers heart rate") {
  Scratch s;
  REQUIRE(run("simulate --subjects 3 --seed 5 --intensity-scale 0 --out " + s / "z") == 0);
  REQUIRE(run("evaluate --method mr --corpus " + s / "z" + " --out " + s / "r.json") == 0);
  const auto j = read_json(s / "r.json");
  CHECK(j.at("hr").at("err1").get<double>() < 1.5);

  const std::set<std::string> schema{"n",         "err1",    "err2",     "sd",        "mean_diff",
                                     "loa_low",   "loa_high", "pearson_r_overall", "fit_slope", "fit_intercept"};
  for (const char* vital : {"hr", "rr", "spo2"}) {
    std::set<std::string> keys;
    for (const auto& [k, v] : j.at(vital).items()) keys.insert(k);
    CHECK(keys == schema);
  }
  const auto n = j.at("hr").at("n").get<std::size_t>();
  CHECK(line_count(s / "r_bland_altman_hr.csv") == n + 1);
  CHECK(line_count(s / "r_scatter_hr.csv") == n + 1);
}

TEST_CASE("cli: vitals on denoised channels against truth") {
  Scratch s;
  REQUIRE(run("simulate --subjects 1 --seed 3 --out " + s / "d") == 0);
  for (const char* c : {"green", "red", "ir"}) {
    REQUIRE(run("denoise --method mr --channel " + std::string(c) + " --in " + s / "d/rec0.csv" + " --out " +
                s / (std::string(c) + ".csv")) == 0);
  }
  REQUIRE(run("vitals --in " + s / "green.csv" + " --red " + s / "red.csv" + " --ir " + s / "ir.csv" + " --truth " +
              s / "d/rec0_truth.csv" + " --out " + s / "v/report.json") == 0);
  const auto j = read_json(s / "v/report.json");
  CHECK(j.at("hr").at("err1").get<double>() < 3.0);
  CHECK(j.at("spo2").at("err1").get<double>() < 2.0);
  CHECK(j.at("hr").at("loa_low").get<double>() <= j.at("hr").at("loa_high").get<double>());
  CHECK(fs::exists(s / "v/report_frames.csv"));
  CHECK(fs::exists(s / "v/report_bland_altman_spo2.csv"));

  // --red without --ir is rejected.
  CHECK(run("vitals --in " + s / "green.csv" + " --red " + s / "red.csv" + " --out " + s / "x.json") == 1);
}

TEST_CASE("cli: train records ablation flags; flags override the config file") {
  Scratch s;
  REQUIRE(run("simulate --subjects 2 --seed 4 --out " + s / "d") == 0);
  std::ofstream(s / "t.cfg") << "# small model\ngenerator.encoder_channels = 4, 8, 8, 16\n"
                             << "generator.attention_heads = 2\ntrain.epochs = 3\ntrain.batch_size = 64\n";
  REQUIRE(run("train --config " + s / "t.cfg" + " --corpus " + s / "d" + " --out " + s / "ck/g.bin" +
              " --epochs 1 --seed 9 --no-attention") == 0);
  const auto j = read_json(s / "ck/g.bin.json");
  CHECK(j.at("ablation").at("no_attention").get<bool>());
  CHECK_FALSE(j.at("ablation").at("no_discriminator").get<bool>());
  CHECK_FALSE(j.at("ablation").at("no_acc").get<bool>());
  CHECK(j.at("epochs").get<int>() == 1);
  CHECK(j.at("seed").get<int>() == 9);
  CHECK(j.at("generator").at("encoder_channels") == nlohmann::json({4, 8, 8, 16}));
  CHECK(line_count(s / "ck/g.bin.metrics.csv") == 2);

  REQUIRE(run("evaluate --method amgan --checkpoint " + s / "ck/g.bin" + " --corpus " + s / "d" + " --out " +
              s / "e.json") == 0);
  CHECK(read_json(s / "e.json").at("summary").at("method") == "amgan");
  CHECK(run("evaluate --method amgan --corpus " + s / "d") == 1);  // no checkpoint
}

TEST_CASE("cli: seeded runs are byte-for-byte reproducible") {
  Scratch s;
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    REQUIRE(run("simulate --subjects 2 --seed 11 --out " + s / ("d" + t)) == 0);
    REQUIRE(run("train --corpus " + s / ("d" + t) + " --out " + s / ("g" + t + ".bin") +
                " --widths 4,8,8,16 --heads 2 --epochs 1 --batch 64 --seed 2") == 0);
    REQUIRE(run("evaluate --method amgan --checkpoint " + s / ("g" + t + ".bin") + " --corpus " + s / ("d" + t) +
                " --out " + s / ("r" + t + ".json")) == 0);
  }
  CHECK(slurp(s / "da/manifest.json") == slurp(s / "db/manifest.json"));
  CHECK(slurp(s / "da/rec3.csv") == slurp(s / "db/rec3.csv"));
  CHECK(slurp(s / "ga.bin") == slurp(s / "gb.bin"));
  CHECK(slurp(s / "ga.bin.metrics.csv") == slurp(s / "gb.bin.metrics.csv"));
  CHECK(slurp(s / "ra.json") == slurp(s / "rb.json"));
}

TEST_CASE("cli: gradcheck passes") { CHECK(run("gradcheck --seed 3") == 0); }
