#pragma once

#include "subalign/dataset.hpp"
#include "subalign/pipeline.hpp"
#include "subalign/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace subalign::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Feature files: 16-byte little-endian header (magic "SAFT", version 1,
// rows, cols as uint32) followed by rows*cols float32 values, row-major.
inline constexpr std::uint32_t kFeatureMagic = 0x54464153;  // "SAFT" on disk
inline constexpr std::uint32_t kFeatureVersion = 1;

void write_features(const fs::path& path, const Matrix& features);
Matrix read_features(const fs::path& path);

// CSV header lines.
inline constexpr const char* kBoxesHeader = "image_id,x_min,y_min,x_max,y_max";
inline constexpr const char* kGroundTruthHeader = "image_id,x_min,y_min,x_max,y_max,class";
inline constexpr const char* kDetectionsHeader = "image_id,x_min,y_min,x_max,y_max,class,score";

void write_boxes(const fs::path& path, ImageId image_id, const std::vector<BBox>& boxes);
std::vector<BBox> read_boxes(const fs::path& path, ImageId image_id);

void write_ground_truth(const fs::path& path, const std::vector<GroundTruth>& gts,
                        const std::vector<std::string>& classes);
std::vector<GroundTruth> read_ground_truth(const fs::path& path, ImageId image_id,
                                           const std::vector<std::string>& classes);

void write_detections_csv(const fs::path& path, const std::vector<Detection>& dets,
                          const std::vector<std::string>& classes);

// Manifest: one JSON document; file paths are relative to its directory.
Dataset load_dataset(const fs::path& manifest_path);
// Writes manifest.json plus one feature/boxes/(gt) file per image into dir.
fs::path save_dataset(const Dataset& ds, const fs::path& dir);

// Shortest round-trip text form of a double.
std::string format_double(double v);

json to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);
json to_json(const Vector& v);
Vector vector_from_json(const json& j);

json to_json(const LinearDetector& det);
LinearDetector detector_from_json(const json& j);
json to_json(const InitialDetectors& dets, const std::vector<std::string>& classes);
InitialDetectors initial_detectors_from_json(const json& j);

json to_json(const Subspace& s);
Subspace subspace_from_json(const json& j);

json to_json(const AdaptationResult& result);
AdaptationResult adaptation_from_json(const json& j);

json to_json(const std::vector<Detection>& dets, const std::vector<std::string>& classes);
std::vector<Detection> detections_from_json(const json& j, const std::vector<std::string>& classes);

json to_json(const SynthOracle& oracle);

std::string dump(const json& j);  // pretty, trailing newline
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
json read_json(const fs::path& path);

}  // namespace subalign::io
