#include "igan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace igan {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written as little-endian");

namespace {

constexpr char kMagic[4] = {'I', 'G', 'A', 'N'};

template <typename V>
std::vector<std::uint8_t> bytes_of(std::span<const V> values) {
  std::vector<std::uint8_t> out(values.size_bytes());
  if (!out.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

template <typename V>
std::vector<V> values_of(const ArchiveEntry& e, DType want, const std::string& name) {
  if (e.dtype != want) throw CheckpointError("checkpoint: entry " + name + " has an unexpected dtype");
  if (e.payload.size() % sizeof(V) != 0) throw CheckpointError("checkpoint: entry " + name + " has a ragged payload");
  std::vector<V> out(e.payload.size() / sizeof(V));
  if (!out.empty()) std::memcpy(out.data(), e.payload.data(), e.payload.size());
  return out;
}

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(V));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf.insert(buf.end(), p, p + n);
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
  template <typename V>
  V get() {
    V v{};
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > bytes.size() - pos) throw CheckpointError("checkpoint: file is truncated");
    const auto* p = bytes.data() + pos;
    pos += n;
    return p;
  }
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

}  // namespace

void Archive::put_f32(const std::string& name, Shape shape, std::span<const float> values) {
  if (shape_numel(shape) != values.size()) throw std::invalid_argument("checkpoint: shape/value mismatch for " + name);
  entries_[name] = {DType::F32, std::move(shape), bytes_of(values)};
}

void Archive::put_f64(const std::string& name, std::span<const double> values) {
  entries_[name] = {DType::F64, {values.size()}, bytes_of(values)};
}

void Archive::put_u64(const std::string& name, std::span<const std::uint64_t> values) {
  entries_[name] = {DType::U64, {values.size()}, bytes_of(values)};
}

void Archive::put_text(const std::string& name, const std::string& text) {
  entries_[name] = {DType::Bytes, {text.size()}, {text.begin(), text.end()}};
}

const ArchiveEntry& Archive::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw CheckpointError("checkpoint: missing entry " + name);
  return it->second;
}

std::vector<float> Archive::get_f32(const std::string& name) const {
  return values_of<float>(entry(name), DType::F32, name);
}
std::vector<double> Archive::get_f64(const std::string& name) const {
  return values_of<double>(entry(name), DType::F64, name);
}
std::vector<std::uint64_t> Archive::get_u64(const std::string& name) const {
  return values_of<std::uint64_t>(entry(name), DType::U64, name);
}
std::string Archive::get_text(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::Bytes) throw CheckpointError("checkpoint: entry " + name + " is not text");
  return {e.payload.begin(), e.payload.end()};
}

std::vector<std::uint8_t> Archive::serialize() const {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(Rng::kAlgorithmId);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, e] : entries_) {  // std::map iterates in name order
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(e.payload.size());
    offset += e.payload.size();
  }
  for (const auto& [name, e] : entries_) w.put_bytes(e.payload.data(), e.payload.size());
  return std::move(w.buf);
}

Archive Archive::parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic, not an IGAN checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(fmt::format("checkpoint: unsupported format version {}", version));
  }
  const auto rng_id = r.get<std::uint32_t>();
  if (rng_id != Rng::kAlgorithmId) throw CheckpointError(fmt::format("checkpoint: unknown RNG algorithm id {}", rng_id));
  const auto count = r.get<std::uint32_t>();

  struct Dir {
    std::string name;
    DType dtype;
    Shape shape;
    std::uint64_t offset, size;
  };
  std::vector<Dir> dir;
  for (std::uint32_t i = 0; i < count; ++i) {
    Dir d;
    const auto len = r.get<std::uint32_t>();
    const auto* p = r.take(len);
    d.name.assign(reinterpret_cast<const char*>(p), len);
    const auto dt = r.get<std::uint8_t>();
    if (dt < 1 || dt > 4) throw CheckpointError("checkpoint: unknown dtype for " + d.name);
    d.dtype = static_cast<DType>(dt);
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) d.shape.push_back(r.get<std::uint64_t>());
    d.offset = r.get<std::uint64_t>();
    d.size = r.get<std::uint64_t>();
    dir.push_back(std::move(d));
  }
  const std::size_t base = r.pos;
  Archive a;
  for (auto& d : dir) {
    if (d.offset > bytes.size() - base || d.size > bytes.size() - base - d.offset) {
      throw CheckpointError("checkpoint: payload of " + d.name + " runs past the end of the file");
    }
    const auto* p = bytes.data() + base + d.offset;
    a.entries_[d.name] = {d.dtype, std::move(d.shape), std::vector<std::uint8_t>(p, p + d.size)};
  }
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("checkpoint: write to " + path.string() + " failed");
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint64_t> encode(const InceptionAllocation& a) {
  return {static_cast<std::uint64_t>(a.tmpl), a.in_channels, a.branch1_1x1_out, a.branch2_bottleneck,
          a.branch2_3x3_out, a.branch3_bottleneck, a.branch3_5x5_out, a.branch4_pool_1x1_out,
          a.stride, a.dilation_1x1, a.dilation_3x3, a.dilation_5x5, a.pool_window};
}

InceptionAllocation decode(const std::vector<std::uint64_t>& v, const std::string& name) {
  if (v.size() != 13 || v[0] > static_cast<std::uint64_t>(InceptionTemplate::SinglePointwise)) {
    throw CheckpointError("checkpoint: malformed allocation " + name);
  }
  InceptionAllocation a;
  a.tmpl = static_cast<InceptionTemplate>(v[0]);
  a.in_channels = v[1];
  a.branch1_1x1_out = v[2];
  a.branch2_bottleneck = v[3];
  a.branch2_3x3_out = v[4];
  a.branch3_bottleneck = v[5];
  a.branch3_5x5_out = v[6];
  a.branch4_pool_1x1_out = v[7];
  a.stride = v[8];
  a.dilation_1x1 = v[9];
  a.dilation_3x3 = v[10];
  a.dilation_5x5 = v[11];
  a.pool_window = v[12];
  return a;
}

void put_adam(Archive& a, const std::string& prefix, const AdamState& s) {
  const std::uint64_t t = s.t;
  a.put_u64(prefix + "/t", {&t, 1});
  for (const auto& slot : s.slots) {
    a.put_f64(prefix + "/m/" + slot.name, slot.m);
    a.put_f64(prefix + "/v/" + slot.name, slot.v);
  }
}

template <typename P>
void get_adam(const Archive& a, const std::string& prefix, const P& params, AdamState& s) {
  s.t = a.get_u64(prefix + "/t").at(0);
  s.slots.clear();
  if (s.t == 0) return;
  for (const auto& p : params) {
    AdamSlot slot{p.name, a.get_f64(prefix + "/m/" + p.name), a.get_f64(prefix + "/v/" + p.name)};
    if (slot.m.size() != p.tensor.numel() || slot.v.size() != p.tensor.numel()) {
      throw CheckpointError("checkpoint: Adam moments for " + p.name + " have the wrong size");
    }
    s.slots.push_back(std::move(slot));
  }
}

}  // namespace

Archive make_checkpoint(Trainer& trainer) {
  Archive a;
  auto& g = trainer.generator();
  auto& d = trainer.discriminator();
  for (const auto& p : g.parameters()) a.put_f32("param/" + p.name, p.tensor.shape(), p.tensor.data());
  for (const auto& p : d.parameters()) a.put_f32("param/" + p.name, p.tensor.shape(), p.tensor.data());
  for (const auto& b : g.buffers()) a.put_f32("buffer/" + b.name, {b.values->size()}, *b.values);
  for (const auto& b : d.buffers()) a.put_f32("buffer/" + b.name, {b.values->size()}, *b.values);

  const auto& st = trainer.state();
  put_adam(a, "adam/G", st.adam_g);
  put_adam(a, "adam/D", st.adam_d);
  const std::uint64_t step = st.step;
  a.put_u64("state/step", {&step, 1});
  a.put_u64("state/rng", st.rng);
  a.put_f64("history/g_loss", st.g_history);
  a.put_f64("history/d_loss", st.d_history);

  const auto& arch = trainer.architecture();
  a.put_u64("alloc/G", encode(arch.generator));
  a.put_u64("alloc/D1", encode(arch.discriminator1));
  a.put_u64("alloc/D2", encode(arch.discriminator2));
  a.put_text("meta/config", config_to_text(trainer.config()));
  return a;
}

void restore_checkpoint(Trainer& trainer, const Archive& a) {
  const auto saved_arch = checkpoint_architecture(a);
  const auto& arch = trainer.architecture();
  if (!saved_arch.generator.same_widths(arch.generator) || !saved_arch.discriminator1.same_widths(arch.discriminator1) ||
      !saved_arch.discriminator2.same_widths(arch.discriminator2)) {
    throw CheckpointError("checkpoint: inception allocations differ from the trainer's architecture");
  }
  auto load_params = [&](auto params) {
    for (auto& p : params) {
      const auto& e = a.entry("param/" + p.name);
      if (e.shape != p.tensor.shape()) {
        throw CheckpointError("checkpoint: " + p.name + " has shape " + to_string(e.shape) + ", model expects " +
                              to_string(p.tensor.shape()));
      }
      const auto v = a.get_f32("param/" + p.name);
      std::copy(v.begin(), v.end(), p.tensor.mutable_data().begin());
    }
  };
  auto load_buffers = [&](auto buffers) {
    for (auto& b : buffers) {
      const auto v = a.get_f32("buffer/" + b.name);
      if (v.size() != b.values->size()) throw CheckpointError("checkpoint: buffer " + b.name + " has the wrong size");
      *b.values = v;
    }
  };
  auto& g = trainer.generator();
  auto& d = trainer.discriminator();
  load_params(g.parameters());
  load_params(d.parameters());
  load_buffers(g.buffers());
  load_buffers(d.buffers());

  auto& st = trainer.state();
  get_adam(a, "adam/G", g.parameters(), st.adam_g);
  get_adam(a, "adam/D", d.parameters(), st.adam_d);
  st.step = a.get_u64("state/step").at(0);
  const auto rng = a.get_u64("state/rng");
  if (rng.size() != st.rng.size()) throw CheckpointError("checkpoint: malformed RNG state");
  std::copy(rng.begin(), rng.end(), st.rng.begin());
  st.g_history = a.get_f64("history/g_loss");
  st.d_history = a.get_f64("history/d_loss");
  if (st.g_history.size() != st.step || st.d_history.size() != st.step) {
    throw CheckpointError("checkpoint: loss history length differs from the step counter");
  }
}

Architecture checkpoint_architecture(const Archive& a) {
  Architecture arch;
  arch.generator = decode(a.get_u64("alloc/G"), "alloc/G");
  arch.discriminator1 = decode(a.get_u64("alloc/D1"), "alloc/D1");
  arch.discriminator2 = decode(a.get_u64("alloc/D2"), "alloc/D2");
  arch.width_divisor = 1;
  return arch;
}

TrainConfig checkpoint_config(const Archive& a) {
  TrainConfig cfg;
  std::istringstream in(a.get_text("meta/config"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const auto key = trim(line.substr(0, eq));
    if (!apply_config_key(cfg, key, trim(line.substr(eq + 1)))) {
      throw CheckpointError("checkpoint: unknown config key " + key);
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------

std::string config_to_text(const TrainConfig& c) {
  std::string out;
  auto kv = [&](const char* k, const auto& v) { out += fmt::format("{} = {}\n", k, v); };
  kv("batch_size", c.batch_size);
  kv("steps", c.steps);
  kv("lr_g", c.lr_g);
  kv("lr_d", c.lr_d);
  kv("beta1", c.beta1);
  kv("beta2", c.beta2);
  kv("adam_eps", c.adam_eps);
  kv("dropout", c.dropout);
  kv("label_smoothing", c.label_smoothing);
  kv("seed", c.seed);
  kv("width_divisor", c.width_divisor);
  kv("sn_iterations", c.sn_iterations);
  kv("discriminator_spectral_norm", c.discriminator_spectral_norm ? "true" : "false");
  kv("checkpoint_interval", c.checkpoint_interval);
  kv("log_interval", c.log_interval);
  return out;
}

namespace {

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

}  // namespace

bool apply_config_key(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "batch_size") c.batch_size = parse_unsigned(key, v);
  else if (key == "steps") c.steps = parse_unsigned(key, v);
  else if (key == "lr_g") c.lr_g = parse_double(key, v);
  else if (key == "lr_d") c.lr_d = parse_double(key, v);
  else if (key == "beta1") c.beta1 = parse_double(key, v);
  else if (key == "beta2") c.beta2 = parse_double(key, v);
  else if (key == "adam_eps") c.adam_eps = parse_double(key, v);
  else if (key == "dropout") c.dropout = parse_double(key, v);
  else if (key == "label_smoothing") c.label_smoothing = parse_double(key, v);
  else if (key == "seed") c.seed = parse_unsigned(key, v);
  else if (key == "width_divisor") c.width_divisor = parse_unsigned(key, v);
  else if (key == "sn_iterations") c.sn_iterations = static_cast<int>(parse_unsigned(key, v));
  else if (key == "discriminator_spectral_norm") c.discriminator_spectral_norm = parse_bool(key, v);
  else if (key == "checkpoint_interval") c.checkpoint_interval = parse_unsigned(key, v);
  else if (key == "log_interval") c.log_interval = parse_unsigned(key, v);
  else return false;
  return true;
}

}  // namespace igan
