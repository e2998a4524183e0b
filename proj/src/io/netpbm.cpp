#include "trunet/io/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "trunet/errors.hpp"

namespace trunet {
namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  // Where the last number began.
  std::size_t last_start() const { return last_start_; }

  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space();
    const std::size_t start = last_start_ = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw FormatError(std::string("netpbm: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("netpbm: expected ") + what, start);
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("netpbm: missing whitespace after maxval", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t last_start_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Tensor<float> decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("netpbm: expected P5 or P6 magic", 0);
  }
  const std::int64_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader r(bytes, 2);
  const long w = r.number("width");
  const long h = r.number("height");
  const long maxval = r.number("maxval");
  if (w < 1 || h < 1) throw FormatError("netpbm: zero image extent", 2);
  if (maxval != 255) throw FormatError("netpbm: only maxval 255 is supported", r.last_start());
  r.end_header();
  const std::size_t offset = r.pos();
  const std::size_t need = static_cast<std::size_t>(channels * h * w);
  if (bytes.size() - offset < need) {
    throw FormatError("netpbm: truncated raster (" + std::to_string(bytes.size() - offset) + " of " +
                          std::to_string(need) + " bytes)",
                      bytes.size());
  }
  Tensor<float> out({channels, h, w});
  const std::int64_t plane = h * w;
  for (std::int64_t p = 0; p < plane; ++p) {
    for (std::int64_t c = 0; c < channels; ++c) {
      out[c * plane + p] = static_cast<float>(bytes[offset + p * channels + c]) / 255.0f;
    }
  }
  return out;
}

Tensor<float> read_netpbm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_netpbm(bytes);
  } catch (const FormatError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Tensor<float> read_mask(const std::filesystem::path& path) {
  Tensor<float> m = read_netpbm(path);
  if (m.dim(0) != 1) throw DataError(path.string() + ": mask must be a single-channel PGM");
  // Grey levels were divided by 255; > 127 becomes foreground.
  for (float& v : m.data()) v = v * 255.0f > 127.5f ? 1.0f : 0.0f;
  return m;
}

std::vector<std::uint8_t> encode_netpbm(const Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("encode_netpbm: expected (1,H,W) or (3,H,W), got " + shape_str(image.shape()));
  }
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::string header =
      std::string(c == 1 ? "P5" : "P6") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + static_cast<std::size_t>(image.numel()));
  const std::int64_t plane = h * w;
  for (std::int64_t p = 0; p < plane; ++p) {
    for (std::int64_t k = 0; k < c; ++k) {
      const float v = std::clamp(image[k * plane + p], 0.0f, 1.0f);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  return out;
}

void write_netpbm(const Tensor<float>& image, const std::filesystem::path& path) {
  const auto bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace trunet
