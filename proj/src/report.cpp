#include "subalign/report.hpp"

#include "subalign/error.hpp"
#include "subalign/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace subalign {

using nlohmann::json;

std::vector<int> weak_class_ids(const SimilarityMatrix& sim, double ratio) {
  std::vector<int> out;
  const Index n = sim.values.rows();
  if (n < 2) return out;
  const double total = sim.values.diagonal().sum();
  for (Index i = 0; i < n; ++i) {
    const double others = (total - sim.values(i, i)) / static_cast<double>(n - 1);
    if (sim.values(i, i) < ratio * others) out.push_back(sim.class_ids[static_cast<std::size_t>(i)]);
  }
  return out;
}

RunReport build_report(const Dataset& labeled_target, const AdaptationResult* adaptation,
                       const std::vector<Detection>& detections,
                       const std::vector<Detection>* baseline, const RunConfig& cfg) {
  RunReport r;
  r.config = config_echo(cfg);

  std::map<std::string, std::optional<double>> ap;
  std::map<std::string, std::optional<double>> base_ap;
  if (labeled_target.labeled()) {
    ap = per_class_ap(detections, labeled_target, cfg.ap_iou);
    if (baseline) base_ap = per_class_ap(*baseline, labeled_target, cfg.ap_iou);
  }

  for (int c = 0; c < static_cast<int>(labeled_target.classes.size()); ++c) {
    ClassReport cr;
    cr.class_id = c;
    cr.name = labeled_target.classes[static_cast<std::size_t>(c)];
    if (auto it = ap.find(cr.name); it != ap.end()) cr.ap = it->second;
    if (auto it = base_ap.find(cr.name); it != base_ap.end()) cr.baseline_ap = it->second;
    r.classes.push_back(std::move(cr));
  }

  if (adaptation) {
    r.mode = adaptation->mode;
    r.diagnostics = adaptation->diagnostics;
    const SimilarityMatrix sim = similarity_matrix(adaptation->states);
    const std::vector<int> weak = weak_class_ids(sim, cfg.weak_ratio);
    for (const auto& st : adaptation->states) {
      if (st.class_id < 0 || st.class_id >= static_cast<int>(r.classes.size()) ||
          r.classes[static_cast<std::size_t>(st.class_id)].name != st.class_name) {
        throw DataError(fmt::format("adaptation state for class '{}' does not match the dataset's class list",
                                    st.class_name));
      }
      ClassReport& cr = r.classes[static_cast<std::size_t>(st.class_id)];
      cr.n_pos_src = st.diagnostics.n_pos_src;
      cr.n_pos_tgt = st.diagnostics.n_pos_tgt;
      cr.status = st.diagnostics.status;
      cr.reason = st.diagnostics.reason;
      for (std::size_t i = 0; i < sim.class_ids.size(); ++i) {
        if (sim.class_ids[i] == cr.class_id) {
          cr.similarity_diag = sim.values(static_cast<Index>(i), static_cast<Index>(i));
        }
      }
      cr.weak = std::find(weak.begin(), weak.end(), cr.class_id) != weak.end();
    }
  }
  for (const auto& cr : r.classes) {
    if (cr.weak) r.weak_classes.push_back(cr.name);
  }

  const auto defined = [](const std::map<std::string, std::optional<double>>& m) {
    return std::any_of(m.begin(), m.end(), [](const auto& kv) { return kv.second.has_value(); });
  };
  if (defined(ap)) r.mean_ap = mean_ap(ap);
  if (defined(base_ap)) r.baseline_mean_ap = mean_ap(base_ap);
  return r;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const RunReport& report) {
  json per_class = json::object();
  for (const auto& c : report.classes) {
    per_class[c.name] = {{"class_id", c.class_id},
                         {"ap", optional_number(c.ap)},
                         {"baseline_ap", optional_number(c.baseline_ap)},
                         {"n_pos_src", c.n_pos_src},
                         {"n_pos_tgt", c.n_pos_tgt},
                         {"similarity_diag", optional_number(c.similarity_diag)},
                         {"status", c.status ? json(to_string(*c.status)) : json(nullptr)},
                         {"reason", c.reason},
                         {"weak", c.weak}};
  }
  json diagnostics = json::array();
  for (const auto& d : report.diagnostics) {
    diagnostics.push_back({{"class_id", d.class_id}, {"stage", d.stage}, {"message", d.message}});
  }
  return {{"mode", report.mode ? json(to_string(*report.mode)) : json(nullptr)},
          {"ap_convention", kApConvention},
          {"per_class", std::move(per_class)},
          {"mean_ap", optional_number(report.mean_ap)},
          {"baseline", {{"mode", "none"}, {"mean_ap", optional_number(report.baseline_mean_ap)}}},
          {"weak_classes", report.weak_classes},
          {"diagnostics", std::move(diagnostics)},
          {"config", report.config}};
}

json to_json(const Histogram& h) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}, {"underflow", h.underflow}, {"overflow", h.overflow}};
}

json to_json(const SimilarityMatrix& m) {
  return {{"labels", m.labels}, {"class_ids", m.class_ids}, {"values", io::to_json(m.values)}};
}

json score_histograms(const Dataset& ds, const InitialDetectors& initial, const RunConfig& cfg) {
  json per_class = json::object();
  std::vector<double> pooled;
  for (const auto& [c, det] : initial.detectors) {
    const std::vector<double> s = raw_scores(ds, det);
    pooled.insert(pooled.end(), s.begin(), s.end());
    per_class[ds.classes.at(static_cast<std::size_t>(c))] =
        to_json(score_histogram(s, cfg.hist_bins, cfg.hist_lo, cfg.hist_hi));
  }
  return {{"dataset", ds.name},
          {"all", to_json(score_histogram(pooled, cfg.hist_bins, cfg.hist_lo, cfg.hist_hi))},
          {"per_class", std::move(per_class)}};
}

namespace {

// Escapes the five XML special characters.
std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Piecewise-linear approximation of the viridis colormap, t in [0, 1].
std::string colormap(double t) {
  static const double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  int rgb[3];
  for (int k = 0; k < 3; ++k) {
    rgb[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

}  // namespace

std::string histogram_svg(const Histogram& h, const std::string& title) {
  constexpr double width = 640.0;
  constexpr double height = 360.0;
  constexpr double margin = 40.0;
  const double plot_w = width - 2.0 * margin;
  const double plot_h = height - 2.0 * margin;
  const std::size_t peak = h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
  const double bar_w = h.counts.empty() ? 0.0 : plot_w / static_cast<double>(h.counts.size());

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
      width, height, width, height);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", width, height);
  svg += fmt::format("<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
                     width / 2.0, xml_escape(title));
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double bh = peak == 0 ? 0.0 : plot_h * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"#3b528b\"/>\n",
                       margin + bar_w * static_cast<double>(i), margin + plot_h - bh, bar_w * 0.9, bh);
  }
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", margin,
                     margin + plot_h, margin + plot_w);
  svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n", margin,
                     height - 16.0, io::format_double(h.lo));
  svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                     margin + plot_w, height - 16.0, io::format_double(h.hi));
  svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
                     "underflow {} / overflow {} / peak {}</text>\n",
                     width / 2.0, height - 16.0, h.underflow, h.overflow, peak);
  svg += "</svg>\n";
  return svg;
}

std::string similarity_svg(const SimilarityMatrix& m, Index d) {
  constexpr double cell = 36.0;
  constexpr double label_w = 110.0;
  const Index n = m.values.rows();
  const double size = label_w + cell * static_cast<double>(n) + 20.0;
  const double top = std::sqrt(static_cast<double>(std::max<Index>(d, 1)));

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n", size);
  svg += fmt::format("<rect width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n", size);
  for (Index i = 0; i < n; ++i) {
    const std::string label = xml_escape(m.labels[static_cast<std::size_t>(i)]);
    const double offset = label_w + cell * static_cast<double>(i);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                       label_w - 6.0, offset + cell * 0.6, label);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" "
                       "transform=\"rotate(-90 {:.1f} {})\">{}</text>\n",
                       offset + cell * 0.6, label_w - 6.0, offset + cell * 0.6, label_w - 6.0, label);
    for (Index j = 0; j < n; ++j) {
      svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{:.4f}</title></rect>\n",
                         label_w + cell * static_cast<double>(j), offset, cell, cell,
                         colormap(m.values(i, j) / top), m.values(i, j));
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace subalign
