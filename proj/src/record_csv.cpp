#include "amgan/record_csv.hpp"

#include "amgan/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace amgan {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw InvalidInput("record csv: bad number '" + s + "' on line " + std::to_string(line_no));
  }
  return v;
}

const std::vector<std::pair<std::string, PpgChannel>> kPpgColumns = {
    {"ppg_green", PpgChannel::green}, {"ppg_red", PpgChannel::red}, {"ppg_ir", PpgChannel::infrared}};

}  // namespace

MultiChannelRecord read_record_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("record csv: missing header");
  const auto header = split_commas(line);
  if (header.size() < 5 || header.front() != "t") {
    throw InvalidInput("record csv: header must start with 't' and name at least 5 columns");
  }
  std::vector<PpgChannel> ppg_order;
  std::size_t col = 1;
  for (const auto& [name, tag] : kPpgColumns) {
    if (col < header.size() && header[col] == name) {
      ppg_order.push_back(tag);
      ++col;
    }
  }
  if (ppg_order.empty()) throw InvalidInput("record csv: no PPG column in header");
  if (header.size() != col + 3 || header[col] != "ax" || header[col + 1] != "ay" ||
      header[col + 2] != "az") {
    throw InvalidInput("record csv: header must end with ax,ay,az");
  }

  std::vector<double> t;
  std::vector<Samples> ppg(ppg_order.size());
  Samples ax, ay, az;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw InvalidInput("record csv: wrong column count on line " + std::to_string(line_no));
    }
    t.push_back(parse_double(cells[0], line_no));
    for (std::size_t i = 0; i < ppg_order.size(); ++i) ppg[i].push_back(parse_double(cells[1 + i], line_no));
    ax.push_back(parse_double(cells[col], line_no));
    ay.push_back(parse_double(cells[col + 1], line_no));
    az.push_back(parse_double(cells[col + 2], line_no));
  }
  if (t.size() < 2) throw InvalidInput("record csv: need at least two rows to infer the sample rate");

  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw InvalidInput("record csv: time column must be strictly increasing");
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double step = t[i] - t[i - 1];
    if (!(step > 0.0)) throw InvalidInput("record csv: time column must be strictly increasing");
    if (std::abs(step - dt) > 1e-6 * dt) throw InvalidInput("record csv: non-uniform sampling");
  }
  // Rates are stored rounded to the nearest 1e-6 Hz so text round-trips are stable.
  const double fs = std::round(1e6 / dt) / 1e6;

  std::map<PpgChannel, Samples> channels;
  for (std::size_t i = 0; i < ppg_order.size(); ++i) channels.emplace(ppg_order[i], std::move(ppg[i]));
  return MultiChannelRecord(fs, std::move(channels), std::move(ax), std::move(ay), std::move(az));
}

MultiChannelRecord read_record_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("record csv: cannot open " + path.string());
  return read_record_csv(in);
}

void write_record_csv(std::ostream& out, const MultiChannelRecord& rec) {
  std::vector<const Samples*> cols;
  out << "t";
  for (const auto& [name, tag] : kPpgColumns) {
    if (rec.has(tag)) {
      out << ',' << name;
      cols.push_back(&rec.ppg(tag));
    }
  }
  out << ",ax,ay,az\n";
  cols.push_back(&rec.acc_x());
  cols.push_back(&rec.acc_y());
  cols.push_back(&rec.acc_z());

  out << std::setprecision(17);
  const double fs = rec.sample_rate_hz();
  for (std::size_t i = 0; i < rec.length_samples(); ++i) {
    out << static_cast<double>(i) / fs;
    for (const Samples* c : cols) out << ',' << (*c)[i];
    out << '\n';
  }
}

void write_record_csv(const std::filesystem::path& path, const MultiChannelRecord& rec) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("record csv: cannot write " + path.string());
  write_record_csv(out, rec);
}

}  // namespace amgan
