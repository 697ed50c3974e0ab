#include "splitface/config.hpp"

#include <fstream>
#include <sstream>

#include "splitface/text.hpp"

namespace splitface {

namespace {

double as_double(std::string_view key, std::string_view v) {
  const auto d = text::to_double(v);
  if (!d) throw ConfigError(std::string(key) + ": '" + std::string(v) + "' is not a number");
  return *d;
}

long long as_int(std::string_view key, std::string_view v) {
  const auto i = text::to_int(v);
  if (!i) throw ConfigError(std::string(key) + ": '" + std::string(v) + "' is not an integer");
  return *i;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  auto& t = train;
  if (key == "data.dataset") dataset = std::string(value);
  else if (key == "model.width_scale") t.width_scale = as_double(key, value);
  else if (key == "model.seed") t.seed = static_cast<std::uint64_t>(as_int(key, value));
  else if (key == "train.epochs_stage1") t.epochs_stage1 = static_cast<int>(as_int(key, value));
  else if (key == "train.epochs_stage2") t.epochs_stage2 = static_cast<int>(as_int(key, value));
  else if (key == "train.batch_size") t.batch_size = static_cast<int>(as_int(key, value));
  else if (key == "train.eval_batch_size") t.eval_batch_size = static_cast<int>(as_int(key, value));
  else if (key == "train.learning_rate") t.learning_rate = as_double(key, value);
  else if (key == "train.d") t.d = static_cast<int>(as_int(key, value));
  else if (key == "train.segment_dropout") t.segment_dropout = as_double(key, value);
  else if (key == "train.flip_probability") t.flip_probability = as_double(key, value);
  else if (key == "train.partial_mix") t.partial_mix = as_double(key, value);
  else if (key == "geometry.tau") t.tau = as_double(key, value);
  else if (key == "fusion.p") p = static_cast<int>(as_int(key, value));
  else if (key == "fusion.threshold_mode") {
    const auto m = parse_threshold_mode(value);
    if (!m) throw ConfigError("fusion.threshold_mode must be optimal or fixed");
    threshold_mode = *m;
  } else if (key == "fusion.aggregator") {
    if (value != "hrp" && value != "product" && value != "median")
      throw ConfigError("fusion.aggregator must be hrp, product or median");
    aggregator = std::string(value);
  } else {
    throw ConfigError("unknown key '" + std::string(key) + "'");
  }
}

std::string RunConfig::resolved() const {
  const auto& t = train;
  std::ostringstream os;
  os << "[data]\ndataset = " << dataset.string() << "\n"
     << "[model]\nwidth_scale = " << text::format_exact(t.width_scale) << "\nseed = " << t.seed << "\n"
     << "[train]\nepochs_stage1 = " << t.epochs_stage1 << "\nepochs_stage2 = " << t.epochs_stage2
     << "\nbatch_size = " << t.batch_size << "\neval_batch_size = " << t.eval_batch_size
     << "\nlearning_rate = " << text::format_exact(t.learning_rate) << "\nd = " << t.d
     << "\nsegment_dropout = " << text::format_exact(t.segment_dropout)
     << "\nflip_probability = " << text::format_exact(t.flip_probability)
     << "\npartial_mix = " << text::format_exact(t.partial_mix) << "\n"
     << "[geometry]\ntau = " << text::format_exact(t.tau) << "\n"
     << "[fusion]\np = " << p << "\nthreshold_mode = " << to_string(threshold_mode)
     << "\naggregator = " << aggregator << "\n";
  return os.str();
}

void RunConfig::validate() const {
  train.validate();
  if (p < 1) throw ConfigError("fusion.p must be at least 1");
}

RunConfig parse_run_config_text(std::string_view content, const std::string& source) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(content)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const std::string at = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + ": unterminated section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(at + ": expected key = value");
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + ": empty key");
    try {
      cfg.set(section.empty() ? std::string(key) : section + "." + std::string(key), value);
    } catch (const ConfigError& e) {
      throw ConfigError(at + ": " + e.detail());
    }
  }
  return cfg;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput("config " + path.string() + " not found");
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_run_config_text(os.str(), path.string());
}

}  // namespace splitface
