#include "amgan/checkpoint.hpp"

#include "amgan/errors.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>

namespace amgan {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'G', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (n > bytes_.size() - pos_) throw CorruptCheckpoint("checkpoint: truncated file");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json config_json(const GeneratorConfig& c) {
  return {{"input_length", c.input_length},
          {"encoder_channels", c.encoder_channels},
          {"kernel_size", c.kernel_size},
          {"stride", c.stride},
          {"attention_heads", c.attention_heads},
          {"attention_dim", c.head_dim()},
          {"leaky_slope", c.leaky_slope},
          {"swap_qkv", c.swap_qkv},
          {"use_attention", c.use_attention}};
}

template <typename T>
T field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) throw CorruptCheckpoint(std::string("checkpoint sidecar: missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw CorruptCheckpoint(std::string("checkpoint sidecar: bad value for field '") + name + "'");
  }
}

GeneratorConfig config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.input_length = field<std::size_t>(j, "input_length");
  c.encoder_channels = field<std::array<std::size_t, 4>>(j, "encoder_channels");
  c.kernel_size = field<std::size_t>(j, "kernel_size");
  c.stride = field<std::size_t>(j, "stride");
  c.attention_heads = field<std::size_t>(j, "attention_heads");
  c.attention_dim = field<std::size_t>(j, "attention_dim");
  c.leaky_slope = field<double>(j, "leaky_slope");
  c.swap_qkv = field<bool>(j, "swap_qkv");
  c.use_attention = field<bool>(j, "use_attention");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(std::string("checkpoint sidecar: ") + e.what());
  }
  return c;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".json";
  return p;
}

void save_checkpoint(const GeneratorParams& g, const CheckpointMeta& meta, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("checkpoint: cannot write " + path.string());
  out.write(kMagic, 4);
  put(out, kVersion);
  const auto named = g.named();
  put(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw InvalidInput("checkpoint: write failed for " + path.string());

  nlohmann::json j;
  j["format"] = "amgan-checkpoint/1";
  j["generator"] = config_json(meta.config);
  j["ablation"] = {{"no_attention", meta.no_attention}, {"no_discriminator", meta.no_discriminator}, {"no_acc", meta.no_acc}};
  j["seed"] = meta.seed;
  j["epochs"] = meta.epochs;
  j["best_epoch"] = meta.best_epoch;
  j["target"] = meta.target;
  std::ofstream side(sidecar_path(path));
  side << j.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp(sidecar_path(path)));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint sidecar: ") + e.what());
  }
  if (!j.contains("generator")) throw CorruptCheckpoint("checkpoint sidecar: missing field 'generator'");
  LoadedCheckpoint lc;
  lc.meta.config = config_from_json(j["generator"]);
  if (j.contains("ablation")) {
    lc.meta.no_attention = field<bool>(j["ablation"], "no_attention");
    lc.meta.no_discriminator = field<bool>(j["ablation"], "no_discriminator");
    lc.meta.no_acc = field<bool>(j["ablation"], "no_acc");
  }
  if (j.contains("seed")) lc.meta.seed = field<std::uint64_t>(j, "seed");
  if (j.contains("epochs")) lc.meta.epochs = field<std::size_t>(j, "epochs");
  if (j.contains("best_epoch")) lc.meta.best_epoch = field<std::size_t>(j, "best_epoch");
  if (j.contains("target")) lc.meta.target = field<std::string>(j, "target");

  lc.generator = GeneratorParams::init(lc.meta.config, 0);
  Reader r(slurp(path));
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CorruptCheckpoint("checkpoint: bad magic header");
  if (r.get<std::uint32_t>() != kVersion) throw CorruptCheckpoint("checkpoint: unsupported version");
  auto named = lc.generator.named();
  if (r.get<std::uint32_t>() != named.size()) throw CorruptCheckpoint("checkpoint: tensor count mismatch");
  for (auto& [name, t] : named) {
    const auto len = r.get<std::uint32_t>();
    if (len > 256) throw CorruptCheckpoint("checkpoint: bad tensor name length");
    std::string stored(len, '\0');
    r.take(stored.data(), len);
    if (stored != name) throw CorruptCheckpoint("checkpoint: expected tensor '" + name + "', found '" + stored + "'");
    const auto rank = r.get<std::uint32_t>();
    ad::Shape shape(rank);
    if (rank > 8) throw CorruptCheckpoint("checkpoint: bad rank for '" + name + "'");
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape != t.shape()) {
      throw CorruptCheckpoint("checkpoint: shape mismatch for '" + name + "': " + ad::shape_string(shape) + " vs " +
                              ad::shape_string(t.shape()));
    }
    r.take(t.mutable_data().data(), t.numel() * sizeof(double));
  }
  if (!r.done()) throw CorruptCheckpoint("checkpoint: trailing bytes");
  return lc;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const GeneratorConfig& expected) {
  auto lc = load_checkpoint(path);
  const auto have = config_json(lc.meta.config);
  const auto want = config_json(expected);
  std::string diff;
  for (const auto& [key, value] : want.items()) {
    if (have.at(key) != value) {
      diff += (diff.empty() ? "" : "; ") + ("field '" + key + "' is " + have.at(key).dump() + ", expected " + value.dump());
    }
  }
  if (!diff.empty()) throw CorruptCheckpoint("checkpoint: " + diff);
  return lc;
}

}  // namespace amgan
