#include "trunet/model/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

#include "trunet/errors.hpp"

namespace trunet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

}  // namespace

double parse_ratio(const std::string& text) {
  const std::string t = trim(text);
  auto parse_one = [&](const std::string& part) {
    double v = 0;
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, v);
    if (ec != std::errc() || ptr != end || part.empty()) {
      throw ConfigError("expected a number or a/b ratio, got '" + text + "'");
    }
    return v;
  };
  const auto slash = t.find('/');
  if (slash == std::string::npos) return parse_one(t);
  const double den = parse_one(t.substr(slash + 1));
  if (den == 0) throw ConfigError("zero denominator in '" + text + "'");
  return parse_one(t.substr(0, slash)) / den;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.width_mult = 0.125;
  c.stage_depths = {1, 1, 1, 1};
  c.heads = 4;
  c.input_size = 64;
  return c;
}

int ModelConfig::channels(int full_scale) const {
  const long c = std::lround(static_cast<double>(full_scale) * width_mult);
  return c < 1 ? 1 : static_cast<int>(c);
}

int ModelConfig::bridge_channels() const {
  const int c = bottleneck_channels();
  const int branches = int{use_transformer} + int{use_dilated};
  return branches == 0 ? c : branches * c;
}

void ModelConfig::validate() const {
  if (!(width_mult > 0) || !std::isfinite(width_mult)) throw ConfigError("width_mult must be positive");
  for (int d : stage_depths) {
    if (d < 1) throw ConfigError("stage_depths must all be >= 1");
  }
  if (input_size < 16 || input_size % 16 != 0) {
    throw ConfigError("input_size must be a positive multiple of 16, got " + std::to_string(input_size));
  }
  if (ffn_ratio < 1) throw ConfigError("ffn_ratio must be >= 1");
  if (heads < 1) throw ConfigError("heads must be >= 1");
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (use_transformer) {
    if (bottleneck_channels() % heads != 0) {
      throw ConfigError("heads (" + std::to_string(heads) + ") must divide the bottleneck width (" +
                        std::to_string(bottleneck_channels()) + ")");
    }
    if (tokens() > max_tokens) {
      throw ConfigError("transformer would see " + std::to_string(tokens()) + " tokens, above max_tokens=" +
                        std::to_string(max_tokens) + "; lower input_size or raise max_tokens");
    }
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "width_mult=" << format_double(width_mult) << '\n';
  os << "stage_depths=" << stage_depths[0] << ',' << stage_depths[1] << ',' << stage_depths[2] << ','
     << stage_depths[3] << '\n';
  os << "use_transformer=" << (use_transformer ? "true" : "false") << '\n';
  os << "use_dilated=" << (use_dilated ? "true" : "false") << '\n';
  os << "heads=" << heads << '\n';
  os << "ffn_ratio=" << ffn_ratio << '\n';
  os << "input_size=" << input_size << '\n';
  os << "max_tokens=" << max_tokens << '\n';
  return os.str();
}

bool ModelConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "width_mult") {
    width_mult = parse_ratio(value);
  } else if (key == "stage_depths") {
    std::vector<int> parts;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(parse_int(key, trim(item)));
    if (parts.size() != 4) throw ConfigError("stage_depths: expected 4 comma-separated integers");
    for (int i = 0; i < 4; ++i) stage_depths[i] = parts[i];
  } else if (key == "use_transformer") {
    use_transformer = parse_bool(key, value);
  } else if (key == "use_dilated") {
    use_dilated = parse_bool(key, value);
  } else if (key == "heads") {
    heads = parse_int(key, value);
  } else if (key == "ffn_ratio") {
    ffn_ratio = parse_int(key, value);
  } else if (key == "input_size") {
    input_size = parse_int(key, value);
  } else if (key == "max_tokens") {
    max_tokens = parse_int(key, value);
  } else {
    return false;
  }
  return true;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (!c.set(key, line.substr(eq + 1))) throw ConfigError("unknown model key '" + key + "'");
  }
  return c;
}

}  // namespace trunet
