#include "subalign/io.hpp"

#include "subalign/error.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace subalign::io {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("missing file: {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& text, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("{}:{}: '{}' is not a number", path.string(), line, text));
  }
  return v;
}

ImageId parse_id(const std::string& text, const fs::path& path, std::size_t line) {
  ImageId v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(fmt::format("{}:{}: '{}' is not an image id", path.string(), line, text));
  }
  return v;
}

// Reads a CSV file with the expected header; returns data rows split into fields.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header,
                                               std::size_t fields) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("missing file: {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("{}: empty file", path.string()));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) {
    throw DataError(fmt::format("{}:1: expected header '{}', got '{}'", path.string(), header, line));
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != fields) {
      throw DataError(fmt::format("{}:{}: expected {} fields, got {}", path.string(), lineno, fields,
                                  cells.size()));
    }
    cells.push_back(std::to_string(lineno));
    rows.push_back(std::move(cells));
  }
  return rows;
}

BBox parse_box(const std::vector<std::string>& cells, const fs::path& path, std::size_t line) {
  BBox b{parse_double(cells[1], path, line), parse_double(cells[2], path, line),
         parse_double(cells[3], path, line), parse_double(cells[4], path, line)};
  if (!b.valid()) throw DataError(fmt::format("{}:{}: invalid box", path.string(), line));
  return b;
}

std::string box_fields(ImageId id, const BBox& b) {
  return fmt::format("{},{},{},{},{}", id, format_double(b.x_min), format_double(b.y_min),
                     format_double(b.x_max), format_double(b.y_max));
}

const std::string& class_label(const std::vector<std::string>& classes, int class_id) {
  if (class_id < 0 || class_id >= static_cast<int>(classes.size())) {
    throw DataError(fmt::format("class id {} outside the class list", class_id));
  }
  return classes[static_cast<std::size_t>(class_id)];
}

int class_lookup(const std::vector<std::string>& classes, const std::string& name) {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i);
  }
  return -1;
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DataError(fmt::format("{}: missing field '{}'", where, key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: field '{}': {}", where, key, e.what()));
  }
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf.data(), ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::string read_text(const fs::path& path) { return read_binary(path); }

json read_json(const fs::path& path) {
  const std::string text = read_binary(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_features(const fs::path& path, const Matrix& features) {
  std::string buf;
  buf.reserve(16 + static_cast<std::size_t>(features.size()) * 4);
  put_u32(buf, kFeatureMagic);
  put_u32(buf, kFeatureVersion);
  put_u32(buf, static_cast<std::uint32_t>(features.rows()));
  put_u32(buf, static_cast<std::uint32_t>(features.cols()));
  for (Index r = 0; r < features.rows(); ++r) {
    for (Index c = 0; c < features.cols(); ++c) {
      put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(features(r, c))));
    }
  }
  write_text(path, buf);
}

Matrix read_features(const fs::path& path) {
  const std::string buf = read_binary(path);
  if (buf.size() < 16) throw DataError(fmt::format("{}: truncated header", path.string()));
  if (get_u32(buf, 0) != kFeatureMagic) throw DataError(fmt::format("{}: bad magic", path.string()));
  if (get_u32(buf, 4) != kFeatureVersion) {
    throw DataError(fmt::format("{}: unsupported version {}", path.string(), get_u32(buf, 4)));
  }
  const std::uint64_t rows = get_u32(buf, 8);
  const std::uint64_t cols = get_u32(buf, 12);
  if (buf.size() != 16 + rows * cols * 4) {
    throw DataError(fmt::format("{}: header declares {}x{} values but file holds {} bytes of data",
                                path.string(), rows, cols, buf.size() - 16));
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t at = 16;
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) {
      const float v = std::bit_cast<float>(get_u32(buf, at));
      at += 4;
      if (!std::isfinite(v)) {
        throw DataError(
            fmt::format("{}: non-finite feature at row {}, column {}", path.string(), r, c));
      }
      m(static_cast<Index>(r), static_cast<Index>(c)) = v;
    }
  }
  return m;
}

void write_boxes(const fs::path& path, ImageId image_id, const std::vector<BBox>& boxes) {
  std::string out = std::string(kBoxesHeader) + "\n";
  for (const auto& b : boxes) out += box_fields(image_id, b) + "\n";
  write_text(path, out);
}

std::vector<BBox> read_boxes(const fs::path& path, ImageId image_id) {
  std::vector<BBox> boxes;
  for (const auto& cells : read_csv(path, kBoxesHeader, 5)) {
    const auto line = static_cast<std::size_t>(std::stoul(cells.back()));
    if (parse_id(cells[0], path, line) != image_id) {
      throw DataError(fmt::format("{}:{}: row belongs to image {}, expected {}", path.string(), line,
                                  cells[0], image_id));
    }
    boxes.push_back(parse_box(cells, path, line));
  }
  return boxes;
}

void write_ground_truth(const fs::path& path, const std::vector<GroundTruth>& gts,
                        const std::vector<std::string>& classes) {
  std::string out = std::string(kGroundTruthHeader) + "\n";
  for (const auto& g : gts) out += box_fields(g.image_id, g.box) + "," + class_label(classes, g.class_id) + "\n";
  write_text(path, out);
}

std::vector<GroundTruth> read_ground_truth(const fs::path& path, ImageId image_id,
                                           const std::vector<std::string>& classes) {
  std::vector<GroundTruth> gts;
  for (const auto& cells : read_csv(path, kGroundTruthHeader, 6)) {
    const auto line = static_cast<std::size_t>(std::stoul(cells.back()));
    const ImageId id = parse_id(cells[0], path, line);
    if (id != image_id) {
      throw DataError(fmt::format("{}:{}: row belongs to image {}, expected {}", path.string(), line,
                                  id, image_id));
    }
    const int cls = class_lookup(classes, cells[5]);
    if (cls < 0) {
      throw DataError(fmt::format("{}:{}: unknown class '{}'", path.string(), line, cells[5]));
    }
    gts.push_back({id, parse_box(cells, path, line), cls});
  }
  return gts;
}

void write_detections_csv(const fs::path& path, const std::vector<Detection>& dets,
                          const std::vector<std::string>& classes) {
  std::string out = std::string(kDetectionsHeader) + "\n";
  for (const auto& d : dets) {
    out += box_fields(d.image_id, d.box) + "," + class_label(classes, d.class_id) + "," +
           format_double(d.score) + "\n";
  }
  write_text(path, out);
}

Dataset load_dataset(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) {
    throw DataError(fmt::format("missing file: manifest {}", manifest_path.string()));
  }
  const json j = read_json(manifest_path);
  const std::string where = manifest_path.string();
  const fs::path base = manifest_path.parent_path();

  Dataset ds;
  ds.name = required<std::string>(j, "name", where);
  ds.classes = required<std::vector<std::string>>(j, "classes", where);
  ds.feature_dim = required<Index>(j, "feature_dim", where);
  if (!j.contains("images") || !j.at("images").is_array()) {
    throw DataError(fmt::format("{}: 'images' must be an array", where));
  }
  for (std::size_t i = 0; i < j.at("images").size(); ++i) {
    const json& e = j.at("images")[i];
    const std::string ewhere = fmt::format("{}: images[{}]", where, i);
    ImageRecord im;
    im.id = required<ImageId>(e, "image_id", ewhere);
    const fs::path feat = base / required<std::string>(e, "feature_file", ewhere);
    const fs::path boxes = base / required<std::string>(e, "boxes_file", ewhere);
    for (const auto& p : {feat, boxes}) {
      if (!fs::exists(p)) throw DataError(fmt::format("{}: missing file {}", ewhere, p.string()));
    }
    im.features = read_features(feat);
    if (im.features.cols() != ds.feature_dim) {
      throw DataError(fmt::format("{}: {} has {} columns, manifest feature_dim is {}", ewhere,
                                  feat.string(), im.features.cols(), ds.feature_dim));
    }
    im.boxes = read_boxes(boxes, im.id);
    if (static_cast<Index>(im.boxes.size()) != im.features.rows()) {
      throw DataError(fmt::format("{}: row count mismatch: {} has {} boxes, {} has {} feature rows",
                                  ewhere, boxes.string(), im.boxes.size(), feat.string(),
                                  im.features.rows()));
    }
    if (e.contains("gt_file") && !e.at("gt_file").is_null()) {
      const fs::path gt = base / required<std::string>(e, "gt_file", ewhere);
      if (!fs::exists(gt)) throw DataError(fmt::format("{}: missing file {}", ewhere, gt.string()));
      im.ground_truth = read_ground_truth(gt, im.id, ds.classes);
    }
    ds.images.push_back(std::move(im));
  }
  ds.validate();
  return ds;
}

fs::path save_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  json images = json::array();
  for (const auto& im : ds.images) {
    const std::string stem = fmt::format("img_{}", im.id);
    json e{{"image_id", im.id}, {"feature_file", stem + ".feat"}, {"boxes_file", stem + ".boxes.csv"}};
    write_features(dir / (stem + ".feat"), im.features);
    write_boxes(dir / (stem + ".boxes.csv"), im.id, im.boxes);
    if (im.ground_truth) {
      e["gt_file"] = stem + ".gt.csv";
      write_ground_truth(dir / (stem + ".gt.csv"), *im.ground_truth, ds.classes);
    }
    images.push_back(std::move(e));
  }
  const json manifest{{"name", ds.name},
                      {"classes", ds.classes},
                      {"feature_dim", ds.feature_dim},
                      {"images", std::move(images)}};
  const fs::path path = dir / "manifest.json";
  write_text(path, dump(manifest));
  return path;
}

json to_json(const Matrix& m) {
  json data = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = required<Index>(j, "rows", "matrix");
  const auto cols = required<Index>(j, "cols", "matrix");
  const auto data = required<std::vector<double>>(j, "data", "matrix");
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw DataError(fmt::format("matrix: {}x{} declared but {} values stored", rows, cols, data.size()));
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

json to_json(const LinearDetector& det) {
  return {{"class_id", det.class_id},
          {"weights", to_json(det.weights)},
          {"bias", det.bias},
          {"frame", det.frame.to_string()}};
}

LinearDetector detector_from_json(const json& j) {
  LinearDetector det;
  det.class_id = required<int>(j, "class_id", "detector");
  det.weights = vector_from_json(j.at("weights"));
  det.bias = required<double>(j, "bias", "detector");
  det.frame = Frame::parse(required<std::string>(j, "frame", "detector"));
  if (!det.weights.allFinite() || !std::isfinite(det.bias)) {
    throw DataError("detector has non-finite parameters");
  }
  return det;
}

namespace {

json diagnostics_json(const std::vector<Diagnostic>& diags) {
  json out = json::array();
  for (const auto& d : diags) out.push_back({{"class_id", d.class_id}, {"stage", d.stage}, {"message", d.message}});
  return out;
}

std::vector<Diagnostic> diagnostics_from_json(const json& j) {
  std::vector<Diagnostic> out;
  for (const auto& e : j) {
    out.push_back({e.at("class_id").get<int>(), e.at("stage").get<std::string>(),
                   e.at("message").get<std::string>()});
  }
  return out;
}

}  // namespace

json to_json(const InitialDetectors& dets, const std::vector<std::string>& classes) {
  json list = json::array();
  for (const auto& [c, det] : dets.detectors) list.push_back(to_json(det));
  return {{"classes", classes}, {"detectors", std::move(list)}, {"warnings", diagnostics_json(dets.warnings)}};
}

InitialDetectors initial_detectors_from_json(const json& j) {
  InitialDetectors out;
  if (!j.contains("detectors")) throw DataError("detector bundle: missing 'detectors'");
  for (const auto& e : j.at("detectors")) {
    LinearDetector det = detector_from_json(e);
    out.detectors.emplace(det.class_id, std::move(det));
  }
  if (j.contains("warnings")) out.warnings = diagnostics_from_json(j.at("warnings"));
  return out;
}

json to_json(const Subspace& s) {
  return {{"id", s.id},
          {"basis", to_json(s.basis)},
          {"eigenvalues", to_json(s.eigenvalues)},
          {"mean", to_json(s.stats.mean)},
          {"scale", to_json(s.stats.scale)}};
}

Subspace subspace_from_json(const json& j) {
  Subspace s;
  s.id = required<std::string>(j, "id", "subspace");
  s.basis = matrix_from_json(j.at("basis"));
  s.eigenvalues = vector_from_json(j.at("eigenvalues"));
  s.stats.mean = vector_from_json(j.at("mean"));
  s.stats.scale = vector_from_json(j.at("scale"));
  if (s.stats.mean.size() != s.basis.rows() || s.stats.scale.size() != s.basis.rows() ||
      s.eigenvalues.size() != s.basis.cols()) {
    throw DataError(fmt::format("subspace '{}': inconsistent shapes", s.id));
  }
  return s;
}

json to_json(const AdaptationResult& result) {
  json states = json::array();
  for (const auto& st : result.states) {
    json e{{"class_id", st.class_id},
           {"class_name", st.class_name},
           {"status", to_string(st.diagnostics.status)},
           {"reason", st.diagnostics.reason},
           {"n_pos_src", st.diagnostics.n_pos_src},
           {"n_pos_tgt", st.diagnostics.n_pos_tgt}};
    if (st.source_subspace) e["source_subspace"] = to_json(*st.source_subspace);
    if (st.target_subspace) e["target_subspace"] = to_json(*st.target_subspace);
    if (st.map) {
      e["map"] = {{"source_id", st.map->source_id}, {"target_id", st.map->target_id}, {"m", to_json(st.map->m)}};
    }
    if (st.detector) e["detector"] = to_json(*st.detector);
    states.push_back(std::move(e));
  }
  return {{"mode", to_string(result.mode)},
          {"states", std::move(states)},
          {"diagnostics", diagnostics_json(result.diagnostics)}};
}

AdaptationResult adaptation_from_json(const json& j) {
  AdaptationResult result;
  try {
    result.mode = parse_mode(j.at("mode").get<std::string>());
    for (const auto& e : j.at("states")) {
      ClassAdaptationState st;
      st.class_id = e.at("class_id").get<int>();
      st.class_name = e.at("class_name").get<std::string>();
      st.diagnostics.status = parse_status(e.at("status").get<std::string>());
      st.diagnostics.reason = e.at("reason").get<std::string>();
      st.diagnostics.n_pos_src = e.at("n_pos_src").get<Index>();
      st.diagnostics.n_pos_tgt = e.at("n_pos_tgt").get<Index>();
      if (e.contains("source_subspace")) st.source_subspace = subspace_from_json(e.at("source_subspace"));
      if (e.contains("target_subspace")) st.target_subspace = subspace_from_json(e.at("target_subspace"));
      if (e.contains("map")) {
        const json& m = e.at("map");
        st.map = AlignmentMap{matrix_from_json(m.at("m")), m.at("source_id").get<std::string>(),
                              m.at("target_id").get<std::string>()};
        if (!st.source_subspace || !st.target_subspace ||
            st.map->source_id != st.source_subspace->id || st.map->target_id != st.target_subspace->id) {
          throw DataError(fmt::format("state '{}': alignment map does not match its subspaces", st.class_name));
        }
      }
      if (e.contains("detector")) st.detector = detector_from_json(e.at("detector"));
      result.states.push_back(std::move(st));
    }
    if (j.contains("diagnostics")) result.diagnostics = diagnostics_from_json(j.at("diagnostics"));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("state bundle: {}", e.what()));
  }
  return result;
}

json to_json(const std::vector<Detection>& dets, const std::vector<std::string>& classes) {
  json list = json::array();
  for (const auto& d : dets) {
    list.push_back({{"image_id", d.image_id},
                    {"class", class_label(classes, d.class_id)},
                    {"x_min", d.box.x_min},
                    {"y_min", d.box.y_min},
                    {"x_max", d.box.x_max},
                    {"y_max", d.box.y_max},
                    {"score", d.score}});
  }
  return {{"classes", classes}, {"detections", std::move(list)}};
}

std::vector<Detection> detections_from_json(const json& j, const std::vector<std::string>& classes) {
  std::vector<Detection> out;
  try {
    for (const auto& e : j.at("detections")) {
      const std::string name = e.at("class").get<std::string>();
      const int cls = class_lookup(classes, name);
      if (cls < 0) throw DataError(fmt::format("detections: unknown class '{}'", name));
      out.push_back({e.at("image_id").get<ImageId>(),
                     {e.at("x_min").get<double>(), e.at("y_min").get<double>(),
                      e.at("x_max").get<double>(), e.at("y_max").get<double>()},
                     cls,
                     e.at("score").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("detections: {}", e.what()));
  }
  return out;
}

json to_json(const SynthOracle& oracle) {
  json means = json::array();
  json drifts = json::array();
  json bases = json::array();
  for (const auto& m : oracle.class_means) means.push_back(to_json(m));
  for (const auto& d : oracle.drifts) drifts.push_back(to_json(d));
  json target_bases = json::array();
  json cues = json::array();
  for (const auto& v : oracle.cues) cues.push_back(to_json(v));
  for (const auto& b : oracle.class_bases) bases.push_back(to_json(b));
  for (const auto& b : oracle.target_class_bases) target_bases.push_back(to_json(b));
  return {{"rotation", to_json(oracle.rotation)},
          {"plane_angles", oracle.plane_angles},
          {"class_means", std::move(means)},
          {"drifts", std::move(drifts)},
          {"class_bases", std::move(bases)},
          {"target_class_bases", std::move(target_bases)},
          {"cues", std::move(cues)},
          {"background_mean", to_json(oracle.background_mean)},
          {"background_basis", to_json(oracle.background_basis)}};
}

}  // namespace subalign::io
