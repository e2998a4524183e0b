#include "trunet/cli/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "trunet/errors.hpp"

namespace trunet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] != '-') {
      const auto v = std::stoull(value, &used);
      if (used == value.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an unsigned integer, got '" + value + "'");
}

}  // namespace

Aggregation parse_aggregation(const std::string& text) {
  if (text == "per_image") return Aggregation::kPerImageMean;
  if (text == "pooled") return Aggregation::kPooled;
  throw ConfigError("aggregation must be per_image or pooled, got '" + text + "'");
}

const char* aggregation_name(Aggregation a) {
  return a == Aggregation::kPooled ? "pooled" : "per_image";
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "data_dir") {
    data_dir = value;
  } else if (key == "synth_n") {
    synth_n = parse_int(key, value);
  } else if (key == "synth_seed") {
    synth_seed = parse_u64(key, value);
  } else if (key == "out") {
    out = value;
  } else if (key == "precision") {
    precision = parse_int(key, value);
  } else if (key == "threshold") {
    threshold = parse_ratio(value);
  } else if (key == "aggregation") {
    aggregation = parse_aggregation(value);
  } else if (key == "eval_batch") {
    eval_batch = parse_int(key, value);
  } else if (key == "train_list") {
    train_list = value;
  } else if (key == "val_list") {
    val_list = value;
  } else if (key == "test_list") {
    test_list = value;
  } else if (!model.set(key, value) && !train.set(key, value)) {
    throw ConfigError("unknown key '" + key + "'");
  }
  explicit_[key] = value;
}

void RunConfig::apply_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + t + "'");
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_text(text.str(), path.string());
}

void RunConfig::apply_env(const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string key = name.substr(prefix.size());
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(name + ": " + e.what());
    }
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (precision != 32 && precision != 64) {
    throw ConfigError("precision must be 32 or 64, got " + std::to_string(precision));
  }
  if (synth_n < 3) throw ConfigError("synth_n must be >= 3");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must be in (0, 1)");
  if (eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
  if (out.empty()) throw ConfigError("out must not be empty");
  if (has_lists()) {
    if (train_list.empty() || val_list.empty() || test_list.empty()) {
      throw ConfigError("train_list, val_list and test_list must be given together");
    }
    if (data_dir.empty()) throw ConfigError("id lists need data_dir");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "# model\n" << model.to_text() << "# train\n" << train.to_text() << "# run\n";
  os << "data_dir=" << data_dir << '\n'
     << "synth_n=" << synth_n << '\n'
     << "synth_seed=" << synth_seed << '\n'
     << "out=" << out << '\n'
     << "precision=" << precision << '\n'
     << "threshold=" << format_double(threshold) << '\n'
     << "aggregation=" << aggregation_name(aggregation) << '\n'
     << "eval_batch=" << eval_batch << '\n'
     << "train_list=" << train_list << '\n'
     << "val_list=" << val_list << '\n'
     << "test_list=" << test_list << '\n';
  return os.str();
}

}  // namespace trunet
