#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "aiperf/cli_config.hpp"
#include "aiperf/scoring_report.hpp"

namespace aiperf {

namespace {

std::vector<std::pair<std::string, std::string>> config_echo(const BenchmarkConfig& c) {
  std::vector<std::pair<std::string, std::string>> h;
  h.emplace_back("executor", c.executor == ExecutorKind::Simulated ? "simulated"
                                                                   : "command");
  if (!c.command_template.empty()) h.emplace_back("command_template", c.command_template);
  h.emplace_back("hpo_batch_size", std::to_string(c.hpo_defaults.batch_size));
  h.emplace_back("hpo_kernel_size", std::to_string(c.hpo_defaults.kernel_size));
  h.emplace_back("nas_method", c.fixed.nas_method);
  h.emplace_back("hpo_method", c.fixed.hpo_method);
  h.emplace_back("seed_architecture", c.fixed.seed_architecture);
  h.emplace_back("min_precision_bits", std::to_string(c.fixed.min_precision_bits));
  h.emplace_back("max_error", "0.3");
  h.emplace_back("dl_framework", c.provenance.dl_framework);
  h.emplace_back("initial_weight", c.provenance.initial_weight);
  h.emplace_back("optimizer", c.provenance.optimizer);
  h.emplace_back("learning_rate", c.provenance.learning_rate);
  h.emplace_back("loss_function", c.provenance.loss_function);
  h.emplace_back("parallelism", c.provenance.parallelism);
  h.emplace_back("parallel_data_transformation",
                 std::to_string(c.provenance.parallel_data_transformation));
  h.emplace_back("nonstandard", c.nonstandard_dataset ? "true" : "false");
  return h;
}

int do_run(const std::string& config_path, const std::string& out_dir) {
  BenchmarkConfig config = load_config(config_path);
  validate(config.cluster);

  std::filesystem::path out(out_dir);
  std::filesystem::create_directories(out);

  RunOptions options;
  options.buffer_dir = out / "buffer";
  options.extra_header = config_echo(config);

  RunLog log;
  if (config.executor == ExecutorKind::Simulated) {
    SimulatedExecutor executor(config.cluster, config.dataset);
    log = run_benchmark(config.cluster, config.dataset, executor, options);
  } else {
    CommandExecutor executor(config.command_template, out / "cmd");
    log = run_benchmark(config.cluster, config.dataset, executor, options);
  }

  // Reports are always generated from the saved log so that `report` on the
  // same file reproduces them byte for byte.
  std::filesystem::path log_path = out / "run.log";
  log.save(log_path);
  RunLog reloaded = RunLog::load(log_path);
  ScoreSeries series = compute_score_series(reloaded);
  emit_report(series, reloaded, out);

  std::cout << "run complete: " << log_path.string() << "\n"
            << "final_score_ops_per_second=" << series.final_score << "\n"
            << "valid=" << (series.valid ? "true" : "false") << "\n";
  return series.valid ? 0 : 1;
}

int do_count(const std::string& arch_path, u64 train_images, u64 val_images,
             const std::string& image_shape, bool per_image, const std::string& out_path) {
  ArchitectureGraph graph = ArchitectureGraph::load(arch_path);
  DatasetDescriptor data;
  data.train_images = train_images;
  data.val_images = val_images;
  data.image_shape = parse_tensor_shape(image_shape);
  validate(data);
  if (!(graph.input_shape() == data.image_shape)) {
    graph.set_input_shape(data.image_shape);
  }

  auto classes = count_by_class(graph);
  u64 fp_scale = per_image ? 1 : data.train_images + data.val_images;
  u64 bp_scale = per_image ? 1 : data.train_images;

  std::ostringstream csv;
  csv << "layer_class,fp_ops,bp_ops,bp_fp_ratio,total_ops\n";
  u128 fp_total = 0, bp_total = 0;
  auto row = [&](const std::string& name, u128 fp, u128 bp) {
    double ratio = fp > 0 ? u128_to_double(bp) / u128_to_double(fp) : 0.0;
    char rbuf[32];
    std::snprintf(rbuf, sizeof rbuf, "%.4f", ratio);
    csv << name << ',' << u128_to_string(fp) << ',' << u128_to_string(bp) << ',' << rbuf
        << ',' << u128_to_string(fp + bp) << '\n';
  };
  for (int k = 0; k < 8; ++k) {
    auto kind = static_cast<LayerKind>(k);
    auto it = classes.find(kind);
    if (it == classes.end()) continue;
    u128 fp = it->second.fp.weighted_total() * fp_scale;
    u128 bp = it->second.bp.weighted_total() * bp_scale;
    fp_total += fp;
    bp_total += bp;
    row(layer_kind_name(kind), fp, bp);
  }
  row("Total", fp_total, bp_total);

  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << csv.str();
  }
  return 0;
}

int do_report(const std::string& log_path, const std::string& out_dir) {
  RunLog log = RunLog::load(log_path);
  ScoreSeries series = compute_score_series(log);
  emit_report(series, log, out_dir);
  std::cout << "report written to " << out_dir << ", valid="
            << (series.valid ? "true" : "false") << "\n";
  return series.valid ? 0 : 1;
}

MorphAction parse_action_spec(const std::string& spec) {
  std::vector<std::string> parts;
  std::istringstream in(spec);
  std::string p;
  while (std::getline(in, p, ':')) parts.push_back(p);
  if (parts.size() < 2) {
    throw InapplicableActionError("action spec must be kind:node[:parameter]");
  }
  MorphAction a;
  a.target_node = parts[1];
  int param = parts.size() > 2 ? std::atoi(parts[2].c_str()) : 0;
  if (parts[0] == "deepen") {
    a.kind = MorphKind::DeepenBlock;
    a.parameter = param == 0 ? 3 : param;
  } else if (parts[0] == "widen") {
    a.kind = MorphKind::Widen;
    a.parameter = 2;
  } else if (parts[0] == "kernel") {
    a.kind = MorphKind::ChangeKernel;
    a.parameter = param;
  } else if (parts[0] == "skip") {
    a.kind = MorphKind::AddSkip;
    a.parameter = param == 0 ? 1 : param;
  } else {
    throw InapplicableActionError("unknown action kind '" + parts[0] +
                                  "' (expected deepen|widen|kernel|skip)");
  }
  return a;
}

int do_morph(const std::string& arch_path, const std::string& action_spec,
             const std::string& out_path) {
  ArchitectureGraph graph = ArchitectureGraph::load(arch_path);
  ArchitectureGraph morphed = apply_morph(graph, parse_action_spec(action_spec));
  morphed.save(out_path);
  std::cout << canonical_digest(morphed) << "\n";
  return 0;
}

int do_seed(const std::string& out_path, const std::string& input_shape, int classes) {
  ArchitectureGraph graph = build_resnet50(parse_tensor_shape(input_shape), classes);
  graph.save(out_path);
  std::cout << canonical_digest(graph) << "\n";
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& argv) {
  CLI::App app{"AutoML benchmark harness: analytical op counting, morphism-driven "
               "architecture search, replica scheduling and scoring"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "aiperf-out";
  auto* run = app.add_subcommand("run", "run the benchmark and write log + report");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--out", out_dir, "output directory");

  std::string arch_path, image_shape = "224x224x3", count_out;
  u64 train_images = 1281167, val_images = 50000;
  bool per_image = false;
  auto* count = app.add_subcommand("count", "analytical operation counts of an architecture");
  count->add_option("--arch", arch_path, "architecture file")->required();
  count->add_option("--train-images", train_images, "training images per epoch");
  count->add_option("--val-images", val_images, "validation images per epoch");
  count->add_option("--image-shape", image_shape, "input image shape HxWxC");
  count->add_flag("--per-image", per_image, "per-image counts instead of per-epoch");
  count->add_option("--out", count_out, "write CSV here instead of stdout");

  std::string log_path, report_out = "aiperf-report";
  auto* report = app.add_subcommand("report", "recompute score series from a run log");
  report->add_option("--log", log_path, "run log file")->required();
  report->add_option("--out", report_out, "output directory");

  std::string morph_arch, action_spec, morph_out;
  auto* morph = app.add_subcommand("morph", "apply one morph action to an architecture");
  morph->add_option("--arch", morph_arch, "architecture file")->required();
  morph->add_option("--action", action_spec,
                    "deepen:<node>[:k] | widen:<node> | kernel:<node>:<k> | skip:<node>:<span>")
      ->required();
  morph->add_option("--out", morph_out, "output architecture file")->required();

  std::string seed_out, seed_shape = "224x224x3";
  int seed_classes = 1000;
  auto* seed = app.add_subcommand("seed", "write the fixed seed architecture");
  seed->add_option("--out", seed_out, "output architecture file")->required();
  seed->add_option("--input", seed_shape, "input image shape HxWxC");
  seed->add_option("--classes", seed_classes, "classifier width");

  try {
    std::vector<std::string> args(argv.rbegin(), argv.rend());  // CLI11 wants reversed
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*run) return do_run(config_path, out_dir);
    if (*count) {
      return do_count(arch_path, train_images, val_images, image_shape, per_image,
                      count_out);
    }
    if (*report) return do_report(log_path, report_out);
    if (*morph) return do_morph(morph_arch, action_spec, morph_out);
    if (*seed) return do_seed(seed_out, seed_shape, seed_classes);
  } catch (const FixedFieldOverrideError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigRangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidDatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InapplicableActionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeRepairFailureError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const MalformedLogError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const OutputParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ScoreDomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const GraphError& e) {  // covers parse/shape/input errors
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace aiperf
