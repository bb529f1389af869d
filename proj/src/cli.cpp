#include "cellflow/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellflow/annotation.hpp"
#include "cellflow/diffusion.hpp"
#include "cellflow/error.hpp"
#include "cellflow/flow.hpp"
#include "cellflow/formats.hpp"
#include "cellflow/image_io.hpp"
#include "cellflow/patches.hpp"
#include "cellflow/server.hpp"
#include "cellflow/stats.hpp"

namespace cellflow::cli {

namespace {

namespace fs = std::filesystem;

std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return std::isnan(v) ? "n/a" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

struct Metric {
  const char* key;    // Distributions key
  const char* label;  // table row label
  const char* file;   // report file stem
  const char* unit;
};

constexpr Metric kMetrics[] = {
    {"neuron.area", "neuron area", "neuron_area", "um^2"},
    {"neuron.perimeter", "neuron perimeter", "neuron_perimeter", "um"},
    {"neurite.length", "neurite length", "neurite_length", "um"},
    {"dead_cell.area", "dead cell area", "dead_cell_area", "um^2"},
    {"dead_cell.perimeter", "dead cell perimeter", "dead_cell_perimeter", "um"},
};

std::vector<annotation::AnnotationSet> load_annotations(const std::vector<std::string>& files,
                                                        std::optional<double> px_per_micron) {
  std::vector<annotation::AnnotationSet> sets;
  for (const auto& f : files) {
    if (!fs::exists(f)) throw InputError("annotation file not found: " + f);
    try {
      auto set = annotation::parse_text(formats::read_file(f));
      if (px_per_micron) set.px_per_micron = *px_per_micron;
      sets.push_back(std::move(set));
    } catch (const ValidationError& e) {
      throw ValidationError(e.path(), f + ": " + std::string(e.what()).substr(e.path().size() + 2));
    } catch (const IntegrityError& e) {
      throw IntegrityError(f + ": " + e.what());
    }
  }
  return sets;
}

std::unique_ptr<diffusion::Denoiser> make_denoiser(const std::string& spec) {
  if (spec == "zero") return std::make_unique<diffusion::ConstantDenoiser>(0.0);
  if (spec.rfind("constant:", 0) == 0) {
    const std::string num = spec.substr(9);
    char* end = nullptr;
    const double c = std::strtod(num.c_str(), &end);
    if (num.empty() || *end != '\0' || !std::isfinite(c)) {
      throw InputError("bad constant denoiser value '" + num + "'");
    }
    return std::make_unique<diffusion::ConstantDenoiser>(c);
  }
  if (spec.rfind("oracle:", 0) == 0) {
    const fs::path file = spec.substr(7);
    if (!fs::exists(file)) throw InputError("oracle support file not found: " + file.string());
    const std::string text = formats::read_file(file);
    std::vector<double> support;
    try {
      support = nlohmann::json::parse(text).get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      std::istringstream in(text);
      for (double v; in >> v;) support.push_back(v);
      if (!in.eof()) throw InputError("oracle support file must list numbers: " + file.string());
    }
    return std::make_unique<diffusion::EmpiricalOracleDenoiser>(std::move(support));
  }
  throw InputError("unknown denoiser '" + spec + "' (expected zero, constant:<c>, oracle:<file>)");
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted = true; }

class App {
 public:
  App(std::ostream& out, std::ostream& err, const config::EnvLookup& env)
      : out_(out), err_(err), env_(env) {
    app_.require_subcommand(1);
    app_.add_option("--config", config_path_, "TOML config file (overrides CELLFLOW_CONFIG)");
    add_flow();
    add_patchify();
    add_schedule();
    add_sample();
    add_stats();
    add_ttest();
    add_serve();
  }

  int run(const std::vector<std::string>& args) {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app_.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
      out_ << app_.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app_.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitUsage;
    }

    try {
      cfg_ = config::resolve(config_path_, env_);
      return action_();
    } catch (const InputError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const IoError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitEnvironment;
    } catch (const fs::filesystem_error& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitEnvironment;
    }
  }

 private:
  template <typename T, typename U>
  static void override(T& target, const std::optional<U>& flag) {
    if (flag) target = static_cast<T>(*flag);
  }

  flow::FlowParams flow_params() const {
    flow::FlowParams p = cfg_.flow;
    override(p.lambda, lambda_);
    override(p.iterations, iterations_);
    p.validate();
    return p;
  }

  void add_flow_flags(CLI::App* cmd) {
    cmd->add_option("--lambda", lambda_, "brightness-constancy weight (default 1)");
    cmd->add_option("--iterations", iterations_, "Horn-Schunck iterations (default 10)");
  }

  void add_flow() {
    auto* cmd = app_.add_subcommand("flow", "dense optical flow of a PNG frame directory -> CFLO");
    cmd->add_option("input", input_, "directory of grayscale PNG frames")->required();
    cmd->add_option("-o,--output", output_, "CFLO output file")->required();
    add_flow_flags(cmd);
    cmd->callback([this] { action_ = [this] { return cmd_flow(); }; });
  }

  int cmd_flow() {
    const auto params = flow_params();
    const auto video = image_io::load_video(input_);
    if (video.frames.size() < 2) {
      throw ArityError("flow needs at least 2 frames in " + input_);
    }
    const auto fields = flow::video_flow(video.frames, params);
    formats::write_cflo(output_, fields);
    for (std::size_t k = 0; k < fields.size(); ++k) {
      double su = 0.0;
      double sv = 0.0;
      for (double v : fields[k].u.values()) su += std::abs(v);
      for (double v : fields[k].v.values()) sv += std::abs(v);
      const auto n = static_cast<double>(fields[k].u.size());
      out_ << "pair " << k << ": mean|u|=" << fixed(su / n) << " mean|v|=" << fixed(sv / n) << "\n";
    }
    out_ << "wrote " << fields.size() << " flow fields to " << output_ << "\n";
    return kExitOk;
  }

  void add_patchify() {
    auto* cmd = app_.add_subcommand("patchify", "build CVID patch-video samples + manifest");
    cmd->add_option("input", input_, "directory of grayscale PNG frames")->required();
    cmd->add_option("-o,--output", output_, "output directory for CVID files and manifest.json")
        ->required();
    cmd->add_option("--patch-size", patch_size_, "patch width/height in pixels (default 128)");
    cmd->add_option("--overlap", overlap_, "overlap fraction a in [0,1) (default 0.25)");
    cmd->add_option("--frames", frame_count_, "frames per sample K (default 10)");
    cmd->add_option("--stride", frame_stride_, "temporal skip between sampled frames (default 1)");
    cmd->add_flag("--literal-step", literal_step_, "step origins by a*w_p with no tail origin");
    cmd->add_option("--starts", starts_, "comma-separated start frames (default 0)")->delimiter(',');
    cmd->add_flag("--raw", raw_, "skip per-channel normalisation");
    cmd->add_flag("--no-flow", no_flow_, "leave flow channels at zero");
    cmd->add_flag("--augment", augment_, "random horizontal/vertical flips (needs --seed)");
    cmd->add_option("--seed", seed_, "seed for augmentation");
    cmd->add_option("--min-variance", min_variance_, "drop samples with channel-0 variance below this");
    add_flow_flags(cmd);
    cmd->callback([this] { action_ = [this] { return cmd_patchify(); }; });
  }

  int cmd_patchify() {
    patches::PatchSpec spec = cfg_.patches;
    override(spec.patch_size, patch_size_);
    override(spec.overlap, overlap_);
    override(spec.frame_count, frame_count_);
    override(spec.frame_stride, frame_stride_);
    if (literal_step_) spec.literal_step = true;
    spec.validate();
    const auto params = flow_params();
    if (augment_ && !seed_) throw InputError("--augment requires --seed");

    const auto video = image_io::load_video(input_);
    if (video.width() < spec.patch_size || video.height() < spec.patch_size) {
      throw DimensionError("frames are " + std::to_string(video.width()) + "x" +
                           std::to_string(video.height()) + ", smaller than patch size " +
                           std::to_string(spec.patch_size));
    }
    if (starts_.empty()) starts_.push_back(0);

    Rng seeds(seed_.value_or(0));
    std::vector<patches::PatchSample> all;
    for (std::size_t start : starts_) {
      auto batch = patches::extract_patches(video, spec, start);
      for (auto& s : batch) {
        if (!no_flow_) s = patches::fill_flow_channels(std::move(s), params);
        if (!raw_) s = patches::normalize_per_channel(std::move(s));
        if (augment_) s = patches::augment(std::move(s), seeds.bits());
      }
      out_ << "start frame " << start << ": " << batch.size() << " samples\n";
      all.insert(all.end(), std::make_move_iterator(batch.begin()),
                 std::make_move_iterator(batch.end()));
    }
    if (min_variance_) all = patches::filter_low_variance(std::move(all), *min_variance_);
    const auto manifest = patches::export_dataset(all, output_);
    out_ << "samples: " << manifest.entries.size() << "\n";
    return kExitOk;
  }

  void add_schedule_flags(CLI::App* cmd) {
    cmd->add_option("--steps", steps_, "diffusion iterations T (default 1000)");
    cmd->add_option("--kind", kind_, "cosine | linear-log-snr (default cosine)");
  }

  diffusion::DiffusionSchedule schedule() const {
    const int steps = steps_.value_or(cfg_.steps);
    const auto kind = kind_ ? diffusion::parse_schedule_kind(*kind_) : cfg_.schedule;
    return diffusion::make_schedule(steps, kind);
  }

  void add_schedule() {
    auto* cmd = app_.add_subcommand("schedule", "dump a variance schedule as CSV");
    add_schedule_flags(cmd);
    cmd->add_option("-o,--output", output_, "CSV file (stdout when omitted)");
    cmd->callback([this] { action_ = [this] { return cmd_schedule(); }; });
  }

  int cmd_schedule() {
    const std::string csv = diffusion::schedule_csv(schedule());
    if (output_.empty()) {
      out_ << csv;
    } else {
      formats::write_file(output_, csv);
    }
    return kExitOk;
  }

  void add_sample() {
    auto* cmd = app_.add_subcommand("sample", "ancestral sampling with a toy denoiser -> CVID");
    add_schedule_flags(cmd);
    cmd->add_option("--denoiser", denoiser_, "zero | constant:<c> | oracle:<file>")->required();
    cmd->add_option("--frames", frame_count_, "tensor frames K (default 2)");
    cmd->add_option("--size", patch_size_, "tensor height/width N (default 8)");
    cmd->add_option("--seed", seed_, "random seed (default 0)");
    cmd->add_option("-o,--output", output_, "CVID output file")->required();
    cmd->callback([this] { action_ = [this] { return cmd_sample(); }; });
  }

  int cmd_sample() {
    const auto denoiser = make_denoiser(denoiser_);
    const auto sched = schedule();
    const std::size_t frames = frame_count_.value_or(2);
    const std::size_t size = patch_size_.value_or(8);
    if (frames == 0 || size == 0) throw RangeError("--frames and --size must be positive");

    Rng rng(seed_.value_or(0));
    const auto x0 = diffusion::sample(*denoiser, sched, {frames, size, size, patches::kChannels}, rng);

    patches::PatchSample out;
    out.tensor = patches::PatchTensor(frames, size);
    out.culture = "synthetic";
    std::transform(x0.values.begin(), x0.values.end(), out.tensor.data().begin(),
                   [](double v) { return static_cast<float>(v); });
    formats::write_cvid(output_, out);

    double mean = 0.0;
    for (double v : x0.values) mean += v;
    mean /= static_cast<double>(x0.values.size());
    const diffusion::TrainingConfig training;
    out_ << "schedule: " << diffusion::to_string(sched.kind()) << " T=" << sched.steps() << "\n";
    out_ << "sample mean: " << fixed(mean) << "\n";
    out_ << "training config (recorded, not run): lr=" << sci(training.learning_rate)
         << " adam_beta1=" << training.adam_beta1 << " adam_beta2=" << training.adam_beta2
         << " loss=L1\n";
    out_ << "wrote " << output_ << "\n";
    return kExitOk;
  }

  void add_stats() {
    auto* cmd = app_.add_subcommand("stats", "morphometry summary of annotation files");
    cmd->add_option("files", files_a_, "annotation JSON files")->required();
    cmd->add_option("--px-per-micron", px_per_micron_, "override the files' conversion ratio");
    cmd->add_option("--seed", seed_, "bootstrap seed (default 0)");
    cmd->add_option("--out", output_, "write summary.json into this directory");
    cmd->callback([this] { action_ = [this] { return cmd_stats(); }; });
  }

  int cmd_stats() {
    const auto sets = load_annotations(files_a_, px_per_micron_);
    const auto dist = stats::aggregate_distributions(sets);
    out_ << pad("metric", 22) << pad("n", 6) << pad("median", 14) << pad("IQR", 14)
         << "95% CI (median)\n";
    nlohmann::json summary = nlohmann::json::object();
    Rng seeds(seed_.value_or(0));
    for (const Metric& m : kMetrics) {
      const auto& values = dist.at(m.key);
      const auto s = stats::summarize(values, seeds.bits());
      if (values.empty()) {
        out_ << pad(m.label, 22) << pad("0", 6) << "n/a\n";
      } else {
        out_ << pad(m.label, 22) << pad(std::to_string(s.n), 6) << pad(fixed(s.median, 3), 14)
             << pad(fixed(s.iqr, 3), 14) << "[" << fixed(s.ci_low, 3) << ", "
             << fixed(s.ci_high, 3) << "]\n";
      }
      summary[m.file] = {{"unit", m.unit}, {"n", s.n},          {"median", s.median},
                         {"q1", s.q1},     {"q3", s.q3},        {"iqr", s.iqr},
                         {"ci_low", s.ci_low}, {"ci_high", s.ci_high}, {"values", values}};
    }
    summary["neurite_direction"] = {{"unit", "deg"},
                                    {"values", dist.at("neurite.direction")},
                                    {"weights", dist.at("neurite.direction_weight")}};
    if (!output_.empty()) {
      fs::create_directories(output_);
      formats::write_file_atomic(fs::path(output_) / "summary.json", summary.dump(2) + "\n");
    }
    return kExitOk;
  }

  void add_ttest() {
    auto* cmd = app_.add_subcommand("ttest", "two-sample t-tests between two annotation groups");
    cmd->add_option("--a", files_a_, "annotation files of group A")->required();
    cmd->add_option("--b", files_b_, "annotation files of group B")->required();
    cmd->add_option("--name-a", name_a_, "label of group A");
    cmd->add_option("--name-b", name_b_, "label of group B");
    cmd->add_option("--variant", variant_, "welch | pooled (default welch)");
    cmd->add_option("--px-per-micron", px_per_micron_, "override the files' conversion ratio");
    cmd->add_option("--seed", seed_, "bootstrap seed (default 0)");
    cmd->add_option("--out", output_, "directory for per-metric CSV and JSON reports");
    cmd->add_option("--format", format_, "csv | json | both (default both)");
    cmd->callback([this] { action_ = [this] { return cmd_ttest(); }; });
  }

  int cmd_ttest() {
    const auto variant = stats::parse_ttest_variant(variant_);
    if (format_ != "csv" && format_ != "json" && format_ != "both") {
      throw InputError("--format must be csv, json or both");
    }
    const auto da = stats::aggregate_distributions(load_annotations(files_a_, px_per_micron_));
    const auto db = stats::aggregate_distributions(load_annotations(files_b_, px_per_micron_));
    if (!output_.empty()) fs::create_directories(output_);

    out_ << pad("metric", 22) << pad(name_a_ + " median (IQR)", 26)
         << pad(name_b_ + " median (IQR)", 26) << pad("t", 12) << pad("p", 14) << "significant\n";
    Rng seeds(seed_.value_or(0));
    for (const Metric& m : kMetrics) {
      const auto& a = da.at(m.key);
      const auto& b = db.at(m.key);
      const std::uint64_t seed = seeds.bits();
      if (a.size() < 2 || b.size() < 2) {
        out_ << pad(m.label, 22) << "n/a\n";
        continue;
      }
      const auto report = stats::compare(m.label, m.unit, {name_a_, a}, {name_b_, b}, variant);
      const auto exported = stats::build_export(report, seed);
      auto cell = [](const stats::SummaryStats& s) {
        return fixed(s.median, 3) + " (" + fixed(s.iqr, 3) + ")";
      };
      out_ << pad(m.label, 22) << pad(cell(exported.summary_a), 26)
           << pad(cell(exported.summary_b), 26) << pad(fixed(report.test.t_statistic, 4), 12)
           << pad(sci(report.test.p_value), 14) << (report.test.significant ? "yes" : "no") << "\n";
      if (!output_.empty()) {
        const fs::path stem = fs::path(output_) / m.file;
        if (format_ != "json") formats::write_file_atomic(stem.string() + ".csv", stats::to_csv(exported));
        if (format_ != "csv") {
          formats::write_file_atomic(stem.string() + ".json", stats::to_json(exported).dump(2) + "\n");
        }
      }
    }
    out_ << "significance level: " << stats::kSignificanceLevel << "\n";
    return kExitOk;
  }

  void add_serve() {
    auto* cmd = app_.add_subcommand("serve", "HTTP API for the annotation tool");
    cmd->add_option("--frames", frames_dir_, "directory of per-video frame directories")->required();
    cmd->add_option("--annotations", annotations_dir_, "directory for annotation JSON")->required();
    cmd->add_option("--port", port_, "listen port (default 8080, env CELLFLOW_PORT)");
    cmd->add_option("--host", host_, "listen address (default 127.0.0.1)");
    cmd->callback([this] { action_ = [this] { return cmd_serve(); }; });
  }

  int cmd_serve() {
    if (!fs::is_directory(frames_dir_)) throw InputError("not a directory: " + frames_dir_);
    std::error_code ec;
    fs::create_directories(annotations_dir_, ec);
    if (ec) throw IoError("cannot create " + annotations_dir_ + ": " + ec.message());

    server::ServerOptions opts;
    opts.frames_dir = frames_dir_;
    opts.annotations_dir = annotations_dir_;
    opts.host = host_;
    opts.port = port_.value_or(cfg_.port);
    opts.px_per_micron = px_per_micron_.value_or(cfg_.px_per_micron);
    server::AnnotationServer srv(opts);
    const int port = srv.bind();
    out_ << "serving on http://" << host_ << ":" << port << "\n" << std::flush;

    g_interrupted = false;
    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    std::thread watcher([&srv] {
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      srv.stop();
    });
    srv.run();
    g_interrupted = true;
    watcher.join();
    return kExitOk;
  }

  std::ostream& out_;
  std::ostream& err_;
  const config::EnvLookup& env_;
  CLI::App app_{"cellflow: optical flow, patch datasets, diffusion schedules and morphometry", "cellflow"};
  std::function<int()> action_;
  config::Config cfg_;

  std::optional<fs::path> config_path_;
  std::string input_;
  std::string output_;
  std::optional<double> lambda_;
  std::optional<int> iterations_;
  std::optional<std::size_t> patch_size_;
  std::optional<double> overlap_;
  std::optional<std::size_t> frame_count_;
  std::optional<std::size_t> frame_stride_;
  bool literal_step_ = false;
  std::vector<std::size_t> starts_;
  bool raw_ = false;
  bool no_flow_ = false;
  bool augment_ = false;
  std::optional<std::uint64_t> seed_;
  std::optional<double> min_variance_;
  std::optional<int> steps_;
  std::optional<std::string> kind_;
  std::string denoiser_;
  std::vector<std::string> files_a_;
  std::vector<std::string> files_b_;
  std::string name_a_ = "A";
  std::string name_b_ = "B";
  std::string variant_ = "welch";
  std::string format_ = "both";
  std::optional<double> px_per_micron_;
  std::string frames_dir_;
  std::string annotations_dir_;
  std::optional<int> port_;
  std::string host_ = "127.0.0.1";
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const config::EnvLookup& env) {
  App app(out, err, env);
  return app.run(args);
}

}  // namespace cellflow::cli
