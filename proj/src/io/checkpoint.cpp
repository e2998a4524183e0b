#include "trunet/io/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "trunet/errors.hpp"
#include "trunet/model/model.hpp"

namespace trunet {
namespace {

constexpr std::size_t kMaxNameLength = 4096;
constexpr std::size_t kMaxConfigLength = 1 << 20;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }
  const std::vector<std::uint8_t>& buffer() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= end_; }

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (end_ - pos_ < n) throw FormatError(std::string("checkpoint: truncated ") + what, pos_);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8(const char* what) { return *take(1, what); }
  std::uint32_t u32(const char* what) {
    const std::uint8_t* p = take(4, what);
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  }
  std::string string(std::size_t limit, const char* what) {
    const std::size_t at = pos_;
    const std::uint32_t n = u32(what);
    if (n > limit) throw FormatError(std::string("checkpoint: ") + what + " length out of range", at);
    const auto* p = take(n, what);
    return {reinterpret_cast<const char*>(p), n};
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_record(Writer& w, const std::string& name, const Tensor<T>& t) {
  w.string(name);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
  for (T v : t.data()) w.f32(static_cast<float>(v));
}

template <typename T>
struct Record {
  std::string name;
  Tensor<T> value;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, n);
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

// Verifies magic, version and CRC, then returns the config and every record.
template <typename T>
std::pair<ModelConfig, std::vector<Record<T>>> parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kCheckpointMagic + 12 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("checkpoint: bad magic", 0);
  }
  const std::size_t body = bytes.size() - 4;
  Reader crc_reader(bytes.subspan(body), 4);
  const std::uint32_t stored = crc_reader.u32("checksum");
  if (crc32_of(bytes.first(body)) != stored) throw ChecksumError("checkpoint: checksum mismatch");

  Reader r(bytes, body);
  r.take(sizeof kCheckpointMagic, "magic");
  const std::size_t version_at = r.pos();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), version_at);
  }
  const std::size_t config_at = r.pos();
  ModelConfig config;
  try {
    config = ModelConfig::from_text(r.string(kMaxConfigLength, "config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad config record: ") + e.what(), config_at);
  }

  std::vector<Record<T>> records;
  std::set<std::string> seen;
  while (!r.done()) {
    const std::size_t at = r.pos();
    std::string name = r.string(kMaxNameLength, "record name");
    if (!seen.insert(name).second) throw FormatError("checkpoint: duplicate record " + name, at);
    const int rank = r.u8("rank");
    if (rank < 1 || rank > 4) throw FormatError("checkpoint: bad rank for " + name, at);
    Shape shape;
    for (int i = 0; i < rank; ++i) {
      const std::uint32_t e = r.u32("extent");
      if (e == 0) throw FormatError("checkpoint: zero extent in " + name, at);
      shape.push_back(e);
    }
    const std::int64_t n = shape_numel(shape);
    if (n > static_cast<std::int64_t>((body - r.pos()) / 4)) {
      throw FormatError("checkpoint: truncated payload for " + name, r.pos());
    }
    Tensor<T> t(shape);
    for (std::int64_t i = 0; i < n; ++i) t[i] = static_cast<T>(std::bit_cast<float>(r.u32("payload")));
    records.push_back({std::move(name), std::move(t)});
  }
  return {config, std::move(records)};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::string kMeanSuffix = ".running_mean";
const std::string kVarSuffix = ".running_var";

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParameterStore<T>& params, const ModelConfig& config) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.string(config.to_text());
  for (const auto& name : params.names()) write_record(w, name, params.at(name));
  for (const auto& name : params.batchnorm_names()) {
    const auto& s = params.batchnorm(name);
    write_record(w, name + kMeanSuffix, s.running_mean);
    write_record(w, name + kVarSuffix, s.running_var);
  }
  w.u32(crc32_of(w.buffer()));
  return w.take();
}

template <typename T>
Checkpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  auto [config, records] = parse<T>(bytes);
  std::unordered_map<std::string, Tensor<T>*> by_name;
  for (auto& rec : records) by_name[rec.name] = &rec.value;

  auto fetch = [&](const std::string& name, const Shape& shape) -> Tensor<T>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint: missing parameter " + name);
    if (it->second->shape() != shape) {
      throw DataError("checkpoint: " + name + " has shape " + shape_str(it->second->shape()) + ", expected " +
                      shape_str(shape));
    }
    return *it->second;
  };

  const Layout layout = model_layout(config);
  Checkpoint<T> out{config, {}};
  for (const auto& spec : layout.params) out.params.add(spec.name, std::move(fetch(spec.name, spec.shape)));
  for (const auto& bn : layout.batchnorms) {
    BatchNormState<T> s;
    s.running_mean = std::move(fetch(bn.name + kMeanSuffix, {bn.channels}));
    s.running_var = std::move(fetch(bn.name + kVarSuffix, {bn.channels}));
    s.initialized = true;
    out.params.add_batchnorm(bn.name, std::move(s));
  }
  return out;
}

template <typename T>
void save_checkpoint(const ParameterStore<T>& params, const ModelConfig& config, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params, config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint<T>(bytes);
}

template <typename T>
std::vector<std::string> load_checkpoint_into(const std::filesystem::path& path, ParameterStore<T>& params,
                                              const std::string& prefix) {
  const auto bytes = read_file(path);
  auto records = parse<T>(bytes).second;
  auto starts = [&](const std::string& s) { return s.compare(0, prefix.size(), prefix) == 0; };
  auto ends = [](const std::string& s, const std::string& suffix) {
    return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  auto check_shape = [](const std::string& name, const Tensor<T>& have, const Tensor<T>& got) {
    if (have.shape() != got.shape()) {
      throw DataError("checkpoint: " + name + " has shape " + shape_str(got.shape()) + ", model expects " +
                      shape_str(have.shape()));
    }
  };

  // Validate everything before touching the store.
  for (const auto& rec : records) {
    if (!starts(rec.name)) continue;
    if (params.contains(rec.name)) {
      check_shape(rec.name, params.at(rec.name), rec.value);
      continue;
    }
    const bool is_mean = ends(rec.name, kMeanSuffix), is_var = ends(rec.name, kVarSuffix);
    const std::string layer =
        is_mean ? rec.name.substr(0, rec.name.size() - kMeanSuffix.size())
                : is_var ? rec.name.substr(0, rec.name.size() - kVarSuffix.size()) : std::string();
    if (layer.empty() || !params.contains_batchnorm(layer)) {
      throw DataError("checkpoint: model has no parameter " + rec.name);
    }
    const auto& s = params.batchnorm(layer);
    check_shape(rec.name, is_mean ? s.running_mean : s.running_var, rec.value);
  }

  std::vector<std::string> loaded;
  for (auto& rec : records) {
    if (!starts(rec.name)) continue;
    if (params.contains(rec.name)) {
      params.at(rec.name) = std::move(rec.value);
    } else if (ends(rec.name, kMeanSuffix)) {
      auto& s = params.batchnorm(rec.name.substr(0, rec.name.size() - kMeanSuffix.size()));
      s.running_mean = std::move(rec.value);
      s.initialized = true;
    } else {
      auto& s = params.batchnorm(rec.name.substr(0, rec.name.size() - kVarSuffix.size()));
      s.running_var = std::move(rec.value);
      s.initialized = true;
    }
    loaded.push_back(rec.name);
  }
  if (loaded.empty()) throw DataError("checkpoint: no records match prefix '" + prefix + "'");
  return loaded;
}

#define TRUNET_INSTANTIATE(T)                                                                                   \
  template std::vector<std::uint8_t> encode_checkpoint<T>(const ParameterStore<T>&, const ModelConfig&);        \
  template Checkpoint<T> decode_checkpoint<T>(std::span<const std::uint8_t>);                                   \
  template void save_checkpoint<T>(const ParameterStore<T>&, const ModelConfig&, const std::filesystem::path&); \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);                                      \
  template std::vector<std::string> load_checkpoint_into<T>(const std::filesystem::path&, ParameterStore<T>&,   \
                                                            const std::string&);

TRUNET_INSTANTIATE(float)
TRUNET_INSTANTIATE(double)

#undef TRUNET_INSTANTIATE

}  // namespace trunet
