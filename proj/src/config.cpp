#include "subalign/config.hpp"

#include "subalign/error.hpp"
#include "subalign/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

namespace subalign {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("config: '{}' expects a number, got '{}'", key, value));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<int>(key, item));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <typename T, typename Ptr>
Setter number(Ptr ptr) {
  return [ptr](RunConfig& c, const std::string& k, const std::string& v) { c.*ptr = parse_number<T>(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.gamma = parse_number<double>(k, v); }},
      {"sigma", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.sigma = parse_number<double>(k, v); }},
      {"d", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.d = parse_number<Index>(k, v); }},
      {"mode", [](RunConfig& c, const std::string&, const std::string& v) { c.adaptation.mode = parse_mode(v); }},
      {"nms_thresh", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.nms_thresh = parse_number<double>(k, v); }},
      {"neg_lambda", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.neg_lambda = parse_number<double>(k, v); }},
      {"detect_thresh", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.detect_thresh = parse_number<double>(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"lambda_reg", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.train.lambda_reg = parse_number<double>(k, v); }},
      {"max_rounds", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.train.max_rounds = parse_number<int>(k, v); }},
      {"iterations", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.train.iterations = parse_number<int>(k, v); }},
      {"initial_negatives", [](RunConfig& c, const std::string& k, const std::string& v) { c.adaptation.train.initial_negatives = parse_number<Index>(k, v); }},
      {"ap_iou", number<double>(&RunConfig::ap_iou)},
      {"weak_ratio", number<double>(&RunConfig::weak_ratio)},
      {"hist_bins", number<std::size_t>(&RunConfig::hist_bins)},
      {"hist_lo", number<double>(&RunConfig::hist_lo)},
      {"hist_hi", number<double>(&RunConfig::hist_hi)},
      {"synth_classes", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.n_classes = parse_number<int>(k, v); }},
      {"synth_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.dim = parse_number<Index>(k, v); }},
      {"synth_samples", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.samples_per_class = parse_number<int>(k, v); }},
      {"synth_separation", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.class_separation = parse_number<double>(k, v); }},
      {"synth_rotation", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.rotation_budget = parse_number<double>(k, v); }},
      {"synth_drift", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.mean_drift = parse_number<double>(k, v); }},
      {"synth_noise", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.noise_scale = parse_number<double>(k, v); }},
      {"synth_feature_noise", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.feature_noise = parse_number<double>(k, v); }},
      {"synth_rank", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.class_rank = parse_number<int>(k, v); }},
      {"synth_strength", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.strength_scale = parse_number<double>(k, v); }},
      {"synth_structure", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.structure_scale = parse_number<double>(k, v); }},
      {"synth_background_scale", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.background_scale = parse_number<double>(k, v); }},
      {"synth_background_rank", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.background_rank = parse_number<int>(k, v); }},
      {"synth_cue", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.cue_strength = parse_number<double>(k, v); }},
      {"synth_cue_dropout", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.cue_dropout = parse_number<double>(k, v); }},
      {"synth_positives", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.positives_per_image = parse_number<int>(k, v); }},
      {"synth_ambiguous", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.ambiguous_per_image = parse_number<int>(k, v); }},
      {"synth_background", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.background_per_image = parse_number<int>(k, v); }},
      {"synth_jitter", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.positive_jitter = parse_number<double>(k, v); }},
      {"synth_noise_classes", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.noise_classes = parse_int_list(k, v); }},
      {"synth_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.seed = parse_number<std::uint64_t>(k, v); }},
  };
  return table;
}

std::string fmt_num(double v) { return io::format_double(v); }

}  // namespace

void RunConfig::validate() const {
  adaptation.validate();
  synth.validate();
  if (!(ap_iou > 0.0 && ap_iou <= 1.0)) throw InvalidArgument("ap_iou must lie in (0, 1]");
  if (!(weak_ratio >= 0.0)) throw InvalidArgument("weak_ratio must be nonnegative");
  if (hist_bins < 1 || !(hist_lo < hist_hi)) throw InvalidArgument("histogram needs bins >= 1 and lo < hi");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(fmt::format("config line {}: expected key = value", lineno));
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '-', '_');
    const auto it = setters().find(key);
    if (it == setters().end()) throw DataError(fmt::format("config line {}: unknown key '{}'", lineno, key));
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_text(path));
}

std::map<std::string, std::string> config_echo(const RunConfig& cfg) {
  const auto& a = cfg.adaptation;
  const auto& s = cfg.synth;
  std::string noise_classes;
  for (std::size_t i = 0; i < s.noise_classes.size(); ++i) {
    if (i) noise_classes += ",";
    noise_classes += std::to_string(s.noise_classes[i]);
  }
  return {
      {"gamma", fmt_num(a.gamma)},
      {"sigma", fmt_num(a.sigma)},
      {"d", std::to_string(a.d)},
      {"mode", to_string(a.mode)},
      {"nms_thresh", fmt_num(a.nms_thresh)},
      {"neg_lambda", fmt_num(a.neg_lambda)},
      {"detect_thresh", fmt_num(a.detect_thresh)},
      {"seed", std::to_string(a.train.seed)},
      {"lambda_reg", fmt_num(a.train.lambda_reg)},
      {"max_rounds", std::to_string(a.train.max_rounds)},
      {"iterations", std::to_string(a.train.iterations)},
      {"initial_negatives", std::to_string(a.train.initial_negatives)},
      {"ap_iou", fmt_num(cfg.ap_iou)},
      {"weak_ratio", fmt_num(cfg.weak_ratio)},
      {"hist_bins", std::to_string(cfg.hist_bins)},
      {"hist_lo", fmt_num(cfg.hist_lo)},
      {"hist_hi", fmt_num(cfg.hist_hi)},
      {"synth_classes", std::to_string(s.n_classes)},
      {"synth_dim", std::to_string(s.dim)},
      {"synth_samples", std::to_string(s.samples_per_class)},
      {"synth_separation", fmt_num(s.class_separation)},
      {"synth_rotation", fmt_num(s.rotation_budget)},
      {"synth_drift", fmt_num(s.mean_drift)},
      {"synth_noise", fmt_num(s.noise_scale)},
      {"synth_feature_noise", fmt_num(s.feature_noise)},
      {"synth_rank", std::to_string(s.class_rank)},
      {"synth_strength", fmt_num(s.strength_scale)},
      {"synth_structure", fmt_num(s.structure_scale)},
      {"synth_background_scale", fmt_num(s.background_scale)},
      {"synth_background_rank", std::to_string(s.background_rank)},
      {"synth_cue", fmt_num(s.cue_strength)},
      {"synth_cue_dropout", fmt_num(s.cue_dropout)},
      {"synth_positives", std::to_string(s.positives_per_image)},
      {"synth_ambiguous", std::to_string(s.ambiguous_per_image)},
      {"synth_background", std::to_string(s.background_per_image)},
      {"synth_jitter", fmt_num(s.positive_jitter)},
      {"synth_noise_classes", noise_classes},
      {"synth_seed", std::to_string(s.seed)},
  };
}

}  // namespace subalign
