#include "subalign/cli.hpp"

#include "subalign/config.hpp"
#include "subalign/error.hpp"
#include "subalign/evaluation.hpp"
#include "subalign/io.hpp"
#include "subalign/pipeline.hpp"
#include "subalign/report.hpp"
#include "subalign/synth.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <functional>
#include <iostream>
#include <memory>

namespace subalign {

namespace {

namespace fs = std::filesystem;
using io::json;

struct GlobalOptions {
  fs::path config;
  fs::path out = ".";
  std::string log_level = "info";
};

RunConfig load_run_config(const GlobalOptions& g) {
  if (g.config.empty()) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  return load_config(g.config);
}

void setup_logging(const std::string& level) {
  auto logger = std::make_shared<spdlog::logger>("subalign", std::make_shared<spdlog::sinks::stderr_sink_mt>());
  logger->set_pattern("[%l] %v");
  logger->set_level(spdlog::level::from_str(level));
  spdlog::set_default_logger(std::move(logger));
}

void check_classes(const std::vector<std::string>& expected, const json& bundle, const std::string& what) {
  if (!bundle.contains("classes")) return;
  const auto classes = bundle.at("classes").get<std::vector<std::string>>();
  if (classes != expected) throw DataError(fmt::format("{}: class list does not match the dataset's", what));
}

InitialDetectors load_detectors(const fs::path& path, const Dataset& ds) {
  const json j = io::read_json(path);
  check_classes(ds.classes, j, path.string());
  return io::initial_detectors_from_json(j);
}

AdaptationResult load_states(const fs::path& path, const Dataset& ds) {
  AdaptationResult r = io::adaptation_from_json(io::read_json(path));
  for (const auto& st : r.states) {
    if (st.class_id < 0 || st.class_id >= static_cast<int>(ds.classes.size()) ||
        ds.classes[static_cast<std::size_t>(st.class_id)] != st.class_name) {
      throw DataError(fmt::format("{}: state for class '{}' does not match the dataset's class list",
                                  path.string(), st.class_name));
    }
  }
  return r;
}

std::vector<Detection> load_detections(const fs::path& path, const Dataset& ds) {
  const json j = io::read_json(path);
  check_classes(ds.classes, j, path.string());
  return io::detections_from_json(j, ds.classes);
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, io::dump(j)); }

void write_detections(const fs::path& out, const std::string& stem, const std::vector<Detection>& dets,
                      const std::vector<std::string>& classes) {
  write_json(out / (stem + ".json"), io::to_json(dets, classes));
  io::write_detections_csv(out / (stem + ".csv"), dets, classes);
}

void write_analysis(const fs::path& out, const AdaptationResult& adaptation, const Dataset* source,
                    const Dataset* target, const InitialDetectors* initial, const RunConfig& cfg) {
  const SimilarityMatrix sim = similarity_matrix(adaptation.states);
  write_json(out / "similarity.json", to_json(sim));
  Index d = cfg.adaptation.d;
  for (const auto& st : adaptation.states) {
    if (st.source_subspace) d = st.source_subspace->dim();
  }
  io::write_text(out / "similarity.svg", similarity_svg(sim, d));
  if (!initial || (!source && !target)) return;

  json hist = json::object();
  const auto one = [&](const Dataset& ds, const std::string& key) {
    hist[key] = score_histograms(ds, *initial, cfg);
    Histogram h;
    h.lo = cfg.hist_lo;
    h.hi = cfg.hist_hi;
    const json& all = hist[key].at("all");
    h.counts = all.at("counts").get<std::vector<std::size_t>>();
    h.underflow = all.at("underflow").get<std::size_t>();
    h.overflow = all.at("overflow").get<std::size_t>();
    io::write_text(out / ("hist_" + key + ".svg"),
                   histogram_svg(h, fmt::format("{}: initial detector scores", ds.name)));
  };
  if (source) one(*source, "source");
  if (target) one(*target, "target");
  write_json(out / "histograms.json", hist);
}

class Stopwatch {
 public:
  void lap(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    times_[stage] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  json to_json() const { return times_; }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  std::map<std::string, double> times_;
};

std::string fmt_ap(const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : "n/a"; }

// --- subcommands ----------------------------------------------------------

void cmd_synth(const GlobalOptions& g) {
  const RunConfig cfg = load_run_config(g);
  const SynthResult syn = generate_synthetic(cfg.synth);
  io::save_dataset(syn.source, g.out / "source");
  io::save_dataset(syn.target, g.out / "target");
  write_json(g.out / "oracle.json", io::to_json(syn.oracle));
  spdlog::info("wrote {} source and {} target images to {}", syn.source.images.size(),
               syn.target.images.size(), g.out.string());
}

void cmd_train(const GlobalOptions& g, const fs::path& source_path) {
  const RunConfig cfg = load_run_config(g);
  const Dataset source = io::load_dataset(source_path);
  const InitialDetectors initial = train_initial_detectors(source, cfg.adaptation);
  write_json(g.out / "detectors.json", io::to_json(initial, source.classes));
  spdlog::info("trained {} detectors", initial.detectors.size());
}

void cmd_detect(const GlobalOptions& g, const fs::path& target_path, const fs::path& detectors,
                const fs::path& states) {
  const RunConfig cfg = load_run_config(g);
  const Dataset target = strip_labels(io::load_dataset(target_path));
  const AdaptationResult adaptation =
      states.empty() ? pass_through(target, load_detectors(detectors, target)) : load_states(states, target);
  const std::vector<Detection> dets = detect(target, adaptation, cfg.adaptation);
  write_detections(g.out, "detections", dets, target.classes);
  spdlog::info("{} detections", dets.size());
}

void cmd_adapt(const GlobalOptions& g, const fs::path& source_path, const fs::path& target_path,
               const fs::path& detectors) {
  const RunConfig cfg = load_run_config(g);
  const Dataset source = io::load_dataset(source_path);
  const Dataset target = strip_labels(io::load_dataset(target_path));
  const InitialDetectors initial = load_detectors(detectors, source);
  const AdaptationResult adaptation = adapt(source, target, initial, cfg.adaptation);
  write_json(g.out / "states.json", io::to_json(adaptation));
  write_json(g.out / "adapt_report.json", to_json(build_report(target, &adaptation, {}, nullptr, cfg)));
  for (const auto& st : adaptation.states) {
    spdlog::info("{}: {} ({} source / {} target positives)", st.class_name, to_string(st.diagnostics.status),
                 st.diagnostics.n_pos_src, st.diagnostics.n_pos_tgt);
  }
}

void cmd_evaluate(const GlobalOptions& g, const fs::path& target_path, const fs::path& detections,
                  const fs::path& states, const fs::path& baseline) {
  const RunConfig cfg = load_run_config(g);
  const Dataset target = io::load_dataset(target_path);
  if (!target.labeled()) throw DataError(fmt::format("{}: evaluation needs ground truth", target_path.string()));
  const std::vector<Detection> dets = load_detections(detections, target);
  std::optional<AdaptationResult> adaptation;
  if (!states.empty()) adaptation = load_states(states, target);
  std::optional<std::vector<Detection>> base;
  if (!baseline.empty()) base = load_detections(baseline, target);
  const RunReport report =
      build_report(target, adaptation ? &*adaptation : nullptr, dets, base ? &*base : nullptr, cfg);
  write_json(g.out / "report.json", to_json(report));
  fmt::print("mean AP {}\n", fmt_ap(report.mean_ap));
}

void cmd_analyze(const GlobalOptions& g, const fs::path& states, const fs::path& source_path,
                 const fs::path& target_path, const fs::path& detectors) {
  const RunConfig cfg = load_run_config(g);
  std::optional<Dataset> source;
  std::optional<Dataset> target;
  if (!source_path.empty()) source = io::load_dataset(source_path);
  if (!target_path.empty()) target = io::load_dataset(target_path);
  const Dataset* reference = source ? &*source : target ? &*target : nullptr;
  AdaptationResult adaptation = io::adaptation_from_json(io::read_json(states));
  std::optional<InitialDetectors> initial;
  if (!detectors.empty()) {
    if (!reference) throw InvalidArgument("--detectors needs --source or --target to score");
    initial = load_detectors(detectors, *reference);
  }
  write_analysis(g.out, adaptation, source ? &*source : nullptr, target ? &*target : nullptr,
                 initial ? &*initial : nullptr, cfg);
}

void cmd_pipeline(const GlobalOptions& g, const fs::path& source_path, const fs::path& target_path) {
  if (source_path.empty() != target_path.empty()) {
    throw InvalidArgument("--source and --target must be given together");
  }
  const RunConfig cfg = load_run_config(g);
  Stopwatch clock;
  Dataset source;
  Dataset target;
  if (source_path.empty()) {
    SynthResult syn = generate_synthetic(cfg.synth);
    write_json(g.out / "oracle.json", io::to_json(syn.oracle));
    source = std::move(syn.source);
    target = std::move(syn.target);
  } else {
    source = io::load_dataset(source_path);
    target = io::load_dataset(target_path);
  }
  clock.lap("load");

  const InitialDetectors initial = train_initial_detectors(source, cfg.adaptation);
  write_json(g.out / "detectors.json", io::to_json(initial, source.classes));
  clock.lap("train");

  const Dataset unlabeled = strip_labels(target);
  const AdaptationResult adaptation = adapt(source, unlabeled, initial, cfg.adaptation);
  write_json(g.out / "states.json", io::to_json(adaptation));
  clock.lap("adapt");

  const std::vector<Detection> dets = detect(unlabeled, adaptation, cfg.adaptation);
  const std::vector<Detection> base = detect(unlabeled, pass_through(source, initial), cfg.adaptation);
  write_detections(g.out, "detections", dets, target.classes);
  write_detections(g.out, "baseline_detections", base, target.classes);
  clock.lap("detect");

  const RunReport report = build_report(target, &adaptation, dets, &base, cfg);
  write_json(g.out / "report.json", to_json(report));
  write_analysis(g.out, adaptation, &source, &unlabeled, &initial, cfg);
  clock.lap("evaluate");
  write_json(g.out / "timing.json", clock.to_json());

  fmt::print("mode {}: mean AP {} (no adaptation {})\n", to_string(cfg.adaptation.mode), fmt_ap(report.mean_ap),
             fmt_ap(report.baseline_mean_ap));
  for (const auto& name : report.weak_classes) fmt::print("weak class: {}\n", name);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Class-specific subspace alignment for adapting linear object detectors"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "key = value configuration file");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, critical or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}))
      ->capture_default_str();

  fs::path source;
  fs::path target;
  fs::path detectors;
  fs::path states;
  fs::path detections;
  fs::path baseline;
  std::function<void()> action;

  auto* synth = app.add_subcommand("synth", "write a synthetic source/target pair");
  synth->callback([&] { action = [&] { cmd_synth(g); }; });

  auto* train = app.add_subcommand("train", "train initial detectors on a source dataset");
  train->add_option("--source", source, "source manifest")->required();
  train->callback([&] { action = [&] { cmd_train(g, source); }; });

  auto* det = app.add_subcommand("detect", "run detectors on a target dataset");
  det->add_option("--target", target, "target manifest")->required();
  auto* det_d = det->add_option("--detectors", detectors, "initial detector bundle");
  auto* det_s = det->add_option("--states", states, "adaptation state bundle");
  det_d->excludes(det_s);
  det->callback([&] {
    if (detectors.empty() && states.empty()) throw CLI::RequiredError("--detectors or --states");
    action = [&] { cmd_detect(g, target, detectors, states); };
  });

  auto* ad = app.add_subcommand("adapt", "align subspaces and retrain detectors");
  ad->add_option("--source", source, "source manifest")->required();
  ad->add_option("--target", target, "target manifest")->required();
  ad->add_option("--detectors", detectors, "initial detector bundle")->required();
  ad->callback([&] { action = [&] { cmd_adapt(g, source, target, detectors); }; });

  auto* ev = app.add_subcommand("evaluate", "per-class AP and mean AP against ground truth");
  ev->add_option("--target", target, "labeled target manifest")->required();
  ev->add_option("--detections", detections, "detections JSON")->required();
  ev->add_option("--states", states, "adaptation state bundle");
  ev->add_option("--baseline", baseline, "no-adaptation detections JSON");
  ev->callback([&] { action = [&] { cmd_evaluate(g, target, detections, states, baseline); }; });

  auto* an = app.add_subcommand("analyze", "similarity matrix and score histograms");
  an->add_option("--states", states, "adaptation state bundle")->required();
  an->add_option("--source", source, "source manifest");
  an->add_option("--target", target, "target manifest");
  an->add_option("--detectors", detectors, "initial detector bundle, for histograms");
  an->callback([&] { action = [&] { cmd_analyze(g, states, source, target, detectors); }; });

  auto* pl = app.add_subcommand("pipeline", "synthesize or load, then train, adapt, detect and evaluate");
  pl->add_option("--source", source, "source manifest (default: synthesize from config)");
  pl->add_option("--target", target, "target manifest");
  pl->callback([&] { action = [&] { cmd_pipeline(g, source, target); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto used = app.get_subcommands();
    std::cerr << (used.empty() ? app.help() : used.back()->help());
    return kExitUsage;
  }

  setup_logging(g.log_level);
  try {
    fs::create_directories(g.out);
    action();
    return kExitOk;
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("subalign");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(storage.size()), argv.data());
}

}  // namespace subalign
