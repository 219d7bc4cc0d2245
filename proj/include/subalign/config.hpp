#pragma once

#include "subalign/pipeline.hpp"
#include "subalign/synth.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace subalign {

// Everything a CLI run can be configured with.
struct RunConfig {
  AdaptationConfig adaptation;
  SynthShiftSpec synth;
  double ap_iou = 0.5;
  // A class is flagged weak when its diagonal similarity is below this
  // fraction of the mean diagonal of the other adapted classes.
  double weak_ratio = 0.75;
  std::size_t hist_bins = 40;
  double hist_lo = -4.0;
  double hist_hi = 4.0;

  void validate() const;
};

// Flat `key = value` text; `#` starts a comment; `-` and `_` are
// interchangeable in keys. Unknown keys and malformed values throw DataError;
// out-of-domain values throw InvalidArgument.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical key -> value text for every setting, for echoing into reports.
std::map<std::string, std::string> config_echo(const RunConfig& cfg);

}  // namespace subalign
