#include "trunet/cli/app.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "trunet/cli/run_config.hpp"
#include "trunet/errors.hpp"
#include "trunet/grad_suite.hpp"
#include "trunet/io/checkpoint.hpp"
#include "trunet/io/dataset.hpp"
#include "trunet/io/netpbm.hpp"
#include "trunet/io/resize.hpp"
#include "trunet/io/synth.hpp"
#include "trunet/metrics/bench.hpp"
#include "trunet/metrics/heatmap.hpp"
#include "trunet/metrics/report.hpp"
#include "trunet/rng.hpp"
#include "trunet/train/split.hpp"
#include "trunet/train/trainer.hpp"

extern char** environ;

namespace trunet {

namespace fs = std::filesystem;

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

int fail(std::ostream& err, const char* kind, const std::string& reason, int code) {
  err << "error[" << kind << "]: " << one_line(reason) << '\n';
  return code;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

// Creates the output directory and drops the resolved config into it.
fs::path prepare_out(const RunConfig& cfg) {
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  write_text(dir / "config.txt", cfg.to_text());
  return dir;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Options {
  std::string checkpoint;
  std::string format = "csv";
  bool oracle = false;
  std::vector<std::string> images;
  bool heatmap = false;
  int frames = 30;
  std::string scope = "all";
  std::string inject_fault;
  std::optional<int> synth_n;
  std::optional<int> synth_size;
  bool force = false;
};

// Whole directory when data_dir is set, else the seeded synthetic set.
std::vector<Sample> load_samples(const RunConfig& cfg, int size) {
  std::vector<Sample> data = cfg.data_dir.empty() ? synth_dataset(cfg.synth_n, size, cfg.synth_seed)
                                                  : load_dataset_dir(cfg.data_dir, size);
  if (data.empty()) throw DataError("no samples in " + cfg.data_dir);
  return data;
}

// Id lists when configured, else the seeded 80/10/10 split.
Split<Sample> load_split(const RunConfig& cfg, int size) {
  if (!cfg.has_lists()) return split_dataset(load_samples(cfg, size), cfg.train.seed);
  auto part = [&](const std::string& list) {
    const auto ids = read_id_list(list);
    // An empty id vector would mean the whole directory.
    if (ids.empty()) throw DataError(list + ": no ids");
    return load_dataset_dir(cfg.data_dir, size, ids);
  };
  return {part(cfg.train_list), part(cfg.val_list), part(cfg.test_list)};
}

// Explicitly configured model keys must agree with the checkpoint's config.
void check_against(const RunConfig& cfg, const ModelConfig& stored) {
  std::string diffs;
  for (const auto& [key, value] : cfg.explicit_keys()) {
    ModelConfig probe = stored;
    if (!probe.set(key, value)) continue;
    if (!(probe == stored)) diffs += (diffs.empty() ? "" : ", ") + key + "=" + value;
  }
  if (!diffs.empty()) {
    throw ConfigError("config does not match checkpoint (" + diffs + "); checkpoint has input_size=" +
                      std::to_string(stored.input_size) + " width_mult=" + format_double(stored.width_mult));
  }
}

MetricsReport aggregate(const MetricsReport& r, const RunConfig& cfg, const std::string& method) {
  MetricsReport out = make_report(r.counts, cfg.aggregation);
  out.method = method;
  return out;
}

template <typename T>
int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_out(cfg);
  const auto split = load_split(cfg, cfg.model.input_size);
  const TransResUNet<T> model(cfg.model);
  out << "train: " << split.train.size() << " train / " << split.val.size() << " val / " << split.test.size()
      << " test samples, " << param_count(cfg.model) << " parameters, " << cfg.precision << "-bit\n";
  const auto result = train<T>(model, split.train, split.val, cfg.train, std::nullopt, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss=" << fixed(r.train_loss, 6) << " val_loss=" << fixed(r.val_loss, 6)
        << " (" << fixed(r.seconds, 2) << "s)\n";
    out.flush();
    return true;
  });
  save_checkpoint(result.best, cfg.model, dir / "checkpoint.trk");
  write_text(dir / "history.csv", history_csv(result.history));
  const auto ev = evaluate(model, result.best, split.test, cfg.eval_batch, cfg.threshold);
  const std::vector<MetricsReport> reports{aggregate(ev.report, cfg, "TransResU-Net")};
  write_text(dir / "report.csv", render_report(reports, ReportFormat::kCsv));
  write_text(dir / "report.md", render_report(reports, ReportFormat::kMarkdown));
  out << "best epoch " << result.best_epoch << (result.stopped_early ? " (stopped early)" : "") << '\n'
      << render_report(reports, ReportFormat::kMarkdown);
  return kExitOk;
}

template <typename T>
int cmd_eval(const RunConfig& cfg, const Options& opt, std::ostream& out) {
  if (opt.format != "csv" && opt.format != "markdown") {
    throw ConfigError("format must be csv or markdown, got '" + opt.format + "'");
  }
  const ReportFormat format = opt.format == "csv" ? ReportFormat::kCsv : ReportFormat::kMarkdown;
  std::optional<Checkpoint<T>> ck;
  ModelConfig mc = cfg.model;
  if (!opt.oracle) {
    if (opt.checkpoint.empty()) throw ConfigError("eval needs --checkpoint unless --oracle is given");
    ck = load_checkpoint<T>(opt.checkpoint);
    check_against(cfg, ck->config);
    mc = ck->config;
  }
  std::vector<Sample> data;
  if (cfg.data_dir.empty() || cfg.has_lists()) {
    data = load_split(cfg, mc.input_size).test;
  } else {
    data = load_samples(cfg, mc.input_size);
  }

  MetricsReport report;
  if (opt.oracle) {
    std::vector<ConfusionCounts> counts;
    for (const auto& s : data) counts.push_back(confusion(s.mask, s.mask));
    report = make_report(std::move(counts), cfg.aggregation);
    report.method = "oracle";
  } else {
    const TransResUNet<T> model(mc);
    report = aggregate(evaluate(model, ck->params, data, cfg.eval_batch, cfg.threshold).report, cfg,
                       "TransResU-Net");
  }
  const std::string table = render_report({report}, format);
  const fs::path dir = prepare_out(cfg);
  write_text(dir / (format == ReportFormat::kCsv ? "eval.csv" : "eval.md"), table);
  out << table;
  return kExitOk;
}

template <typename T>
int cmd_infer(const RunConfig& cfg, const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.checkpoint.empty()) throw ConfigError("infer needs --checkpoint");
  Checkpoint<T> ck = load_checkpoint<T>(opt.checkpoint);
  check_against(cfg, ck.config);
  const TransResUNet<T> model(ck.config);
  const int size = ck.config.input_size;
  const fs::path dir = prepare_out(cfg);
  int failed = 0;
  for (const auto& path : opt.images) {
    try {
      Tensor<float> image = read_netpbm(path);
      if (image.dim(0) == 1) {
        Tensor<float> rgb({3, image.dim(1), image.dim(2)});
        for (std::int64_t c = 0; c < 3; ++c) {
          std::copy(image.data().begin(), image.data().end(), rgb.ptr() + c * image.numel());
        }
        image = std::move(rgb);
      }
      image = resize_bilinear(image, size, size);
      Graph<T> graph;
      NoGradGuard<T> no_grad(graph);
      ForwardContext<T> ctx(graph, ck.params, NormMode::kEval);
      const auto result = model.forward(ctx, graph.constant(image.cast<T>().reshaped({1, 3, size, size})));
      const Tensor<float> mask = binarize(result.probabilities.value(), cfg.threshold).template cast<float>();
      const std::string stem = fs::path(path).stem().string();
      write_netpbm(mask.reshaped({1, size, size}), dir / (stem + "_mask.pgm"));
      double fg = 0;
      for (float v : mask.data()) fg += v;
      out << path << " -> " << (dir / (stem + "_mask.pgm")).string() << " foreground "
          << fixed(100.0 * fg / static_cast<double>(mask.numel()), 1) << "%";
      if (opt.heatmap) {
        const Tensor<T>& f = result.decoder[3].value();
        const Tensor<float> heat = activation_heatmap(f.reshaped({f.dim(1), f.dim(2), f.dim(3)}), size);
        write_netpbm(heat, dir / (stem + "_heatmap.ppm"));
        out << ", heatmap " << (dir / (stem + "_heatmap.ppm")).string();
      }
      out << '\n';
    } catch (const std::exception& e) {
      ++failed;
      fail(err, "infer", path + ": " + e.what(), 0);
    }
  }
  if (failed > 0) {
    return fail(err, "infer", std::to_string(failed) + " of " + std::to_string(opt.images.size()) + " images failed",
                kExitInferPartial);
  }
  return kExitOk;
}

template <typename T>
int cmd_bench(const RunConfig& cfg, const Options& opt, std::ostream& out) {
  if (opt.frames < 1) throw ConfigError("frames must be >= 1");
  ModelConfig mc = cfg.model;
  ParameterStore<T> params;
  if (!opt.checkpoint.empty()) {
    Checkpoint<T> ck = load_checkpoint<T>(opt.checkpoint);
    check_against(cfg, ck.config);
    mc = ck.config;
    params = std::move(ck.params);
  }
  const TransResUNet<T> model(mc);
  if (opt.checkpoint.empty()) params = model.init(cfg.train.seed);
  const int s = mc.input_size;
  Tensor<T> image({1, 3, s, s});
  Rng rng(cfg.train.seed);
  for (auto& v : image.data()) v = static_cast<T>(rng.uniform());
  const FpsReport r = fps_benchmark(
      [&] {
        Graph<T> graph;
        NoGradGuard<T> no_grad(graph);
        ForwardContext<T> ctx(graph, params, NormMode::kEval);
        model.forward(ctx, graph.constant(image));
      },
      2, opt.frames);
  std::ostringstream os;
  os << "method,width_mult,input_size,params,frames,fps,mean_latency_ms\n"
     << "TransResU-Net," << format_double(mc.width_mult) << ',' << s << ',' << param_count(mc) << ',' << r.frames
     << ',' << format_4dp(r.fps) << ',' << format_4dp(1e3 * r.mean_latency_s) << '\n'
     << "frame,latency_ms\n";
  for (std::size_t i = 0; i < r.latencies_s.size(); ++i) {
    os << i + 1 << ',' << format_4dp(1e3 * r.latencies_s[i]) << '\n';
  }
  if (r.coarse_timer) os << "# clock resolution is coarser than one frame\n";
  write_text(prepare_out(cfg) / "bench.csv", os.str());
  out << os.str();
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, const Options& opt, std::ostream& out, std::ostream& err) {
  std::vector<GradScope> scopes;
  if (opt.scope == "all") {
    scopes = {GradScope::kPrimitive, GradScope::kBlock, GradScope::kModel};
  } else {
    scopes = {parse_grad_scope(opt.scope)};
  }
  std::optional<ScopedBackwardFault> fault;
  if (!opt.inject_fault.empty()) fault.emplace(opt.inject_fault, 2.0);
  std::ostringstream table;
  table << "scope,case,max_rel_error,tolerance,status\n";
  std::vector<std::string> offenders;
  std::size_t total = 0;
  for (GradScope scope : scopes) {
    for (const auto& c : run_grad_suite(scope, cfg.train.seed)) {
      char err_buf[32], tol_buf[32];
      std::snprintf(err_buf, sizeof(err_buf), "%.3e", c.result.max_rel_error);
      std::snprintf(tol_buf, sizeof(tol_buf), "%.0e", c.tolerance);
      const bool ok = c.passed();
      table << grad_scope_name(scope) << ',' << c.name << ',' << (c.result.finite ? err_buf : "nan") << ','
            << tol_buf << ',' << (ok ? "pass" : "FAIL") << '\n';
      if (!ok) offenders.push_back(c.name + "=" + (c.result.finite ? err_buf : "nan"));
      ++total;
    }
  }
  if (fault && fault->hits() == 0) {
    throw ConfigError("--inject-fault: no backward rule named '" + opt.inject_fault + "' ran");
  }
  write_text(prepare_out(cfg) / "gradcheck.csv", table.str());
  out << table.str();
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : " ") + o;
    return fail(err, "gradcheck",
                std::to_string(offenders.size()) + " of " + std::to_string(total) + " checks above tolerance: " + list,
                kExitGradcheck);
  }
  return kExitOk;
}

int cmd_synth(RunConfig cfg, const Options& opt, std::ostream& out) {
  const int n = opt.synth_n.value_or(cfg.synth_n);
  const int size = opt.synth_size.value_or(cfg.model.input_size);
  const fs::path dir = cfg.out;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!opt.force) throw ConfigError("output directory " + dir.string() + " is not empty; pass --force to overwrite");
    fs::remove_all(dir / "images");
    fs::remove_all(dir / "masks");
    fs::remove(dir / "manifest.txt");
  }
  const auto samples = synth_dataset(n, size, cfg.synth_seed);
  write_dataset_dir(samples, dir);
  cfg.set("synth_n", std::to_string(n));
  cfg.set("input_size", std::to_string(size));
  prepare_out(cfg);
  out << "wrote " << samples.size() << " samples (" << size << "x" << size << ", seed " << cfg.synth_seed << ") to "
      << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

std::map<std::string, std::string> process_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    const auto eq = entry.find('=');
    if (eq == std::string::npos || entry.rfind(kEnvPrefix, 0) != 0) continue;
    env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

int run_cli(const std::vector<std::string>& args, const std::map<std::string, std::string>& env,
            std::ostream& out, std::ostream& err) {
  CLI::App app{"TransResU-Net segmentation: train, evaluate, infer, benchmark, gradient-check, synthesize data"};
  app.name("trunet");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int precision = 32;
  auto* o_config = app.add_option("--config", config_path, "key=value run configuration file");
  auto* o_seed = app.add_option("--seed", seed, "seed (sets seed and synth_seed)");
  auto* o_precision = app.add_option("--precision", precision, "32 or 64");
  auto* o_out = app.add_option("--out", out_dir, "output directory");

  Options opt;
  std::string data_dir;
  auto* train = app.add_subcommand("train", "train, then write checkpoint, history and test report");
  auto* o_train_data = train->add_option("--data", data_dir, "dataset directory (images/, masks/)");

  auto* eval = app.add_subcommand("eval", "metrics table for a checkpoint");
  eval->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
  eval->add_option("--format", opt.format, "csv or markdown");
  eval->add_flag("--oracle", opt.oracle, "score the masks themselves");
  auto* o_eval_data = eval->add_option("--data", data_dir, "dataset directory (images/, masks/)");

  auto* infer = app.add_subcommand("infer", "write binary mask PGMs for images");
  infer->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
  infer->add_option("images", opt.images, "PPM/PGM images")->required();
  infer->add_flag("--heatmap", opt.heatmap, "also write a decoder activation heatmap PPM");

  auto* bench = app.add_subcommand("bench", "frames per second at batch size 1");
  bench->add_option("--checkpoint", opt.checkpoint, "checkpoint file (random weights when omitted)");
  bench->add_option("--frames", opt.frames, "timed frames")->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks in 64-bit");
  gradcheck->add_option("--scope", opt.scope, "primitive, block, model or all")->capture_default_str();
  gradcheck->add_option("--inject-fault", opt.inject_fault, "scale one op's backward rule by 2 (self-test)");

  auto* synth = app.add_subcommand("synth", "write a synthetic PPM/PGM dataset");
  synth->add_option("--n", opt.synth_n, "number of samples");
  synth->add_option("--size", opt.synth_size, "image size");
  synth->add_flag("--force", opt.force, "overwrite a non-empty output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "config", e.what(), kExitConfig);
  }

  try {
    RunConfig cfg;
    if (o_config->count()) cfg.apply_file(config_path);
    cfg.apply_env(env);
    if (o_seed->count()) {
      cfg.set("seed", std::to_string(seed));
      cfg.set("synth_seed", std::to_string(seed));
    }
    if (o_precision->count()) cfg.set("precision", std::to_string(precision));
    if (o_out->count()) cfg.set("out", out_dir);
    if (o_train_data->count() || o_eval_data->count()) cfg.set("data_dir", data_dir);
    cfg.validate();

    const bool f64 = cfg.precision == 64;
    if (train->parsed()) return f64 ? cmd_train<double>(cfg, out) : cmd_train<float>(cfg, out);
    if (eval->parsed()) return f64 ? cmd_eval<double>(cfg, opt, out) : cmd_eval<float>(cfg, opt, out);
    if (infer->parsed()) return f64 ? cmd_infer<double>(cfg, opt, out, err) : cmd_infer<float>(cfg, opt, out, err);
    if (bench->parsed()) return f64 ? cmd_bench<double>(cfg, opt, out) : cmd_bench<float>(cfg, opt, out);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg, opt, out, err);
    if (synth->parsed()) return cmd_synth(cfg, opt, out);
    return fail(err, "config", "no command", kExitConfig);
  } catch (const ConfigError& e) {
    return fail(err, "config", e.what(), kExitConfig);
  } catch (const ShapeError& e) {
    return fail(err, "config", e.what(), kExitConfig);
  } catch (const NumericalError& e) {
    return fail(err, "numerical", e.what(), kExitNumerical);
  } catch (const std::exception& e) {
    return fail(err, "data", e.what(), kExitData);
  }
}

}  // namespace trunet
