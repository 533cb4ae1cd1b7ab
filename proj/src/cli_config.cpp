#include "aiperf/cli_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace aiperf {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigParseError("bad integer for " + key + ": '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigParseError("bad number for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigParseError("bad boolean for " + key + ": '" + value + "'");
}

void check_fixed_string(const std::string& key, const std::string& value,
                        const std::string& fixed) {
  if (value != fixed) {
    throw FixedFieldOverrideError(key + " is fixed to '" + fixed + "', cannot set '" +
                                  value + "'");
  }
}

int require_range(const std::string& key, long long v, long long lo, long long hi) {
  if (v < lo || v > hi) {
    throw ConfigRangeError(key + "=" + std::to_string(v) + " outside [" +
                           std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

}  // namespace

BenchmarkConfig parse_config(std::string_view text) {
  BenchmarkConfig c;
  const FixedConfig fixed_defaults;

  std::istringstream in{std::string(text)};
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigParseError("bad section at line " + std::to_string(line_no));
      }
      section = line.substr(1, line.size() - 2);
      if (section != "cluster" && section != "executor" && section != "hpo" &&
          section != "dataset" && section != "fixed" && section != "provenance") {
        throw ConfigParseError("unknown section [" + section + "]");
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigParseError("expected key=value at line " + std::to_string(line_no));
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string qual = section.empty() ? key : section + "." + key;

    if (section == "cluster" || section.empty()) {
      if (key == "replica_count") {
        c.cluster.replica_count = require_range(qual, parse_int(qual, value), 1, 1 << 20);
        continue;
      }
      if (key == "accelerators_per_replica") {
        c.cluster.accelerators_per_replica =
            require_range(qual, parse_int(qual, value), 1, 1 << 20);
        continue;
      }
      if (key == "peak_ops_per_accelerator") {
        c.cluster.peak_ops_per_accelerator = parse_real(qual, value);
        if (c.cluster.peak_ops_per_accelerator <= 0) {
          throw ConfigRangeError(qual + " must be > 0");
        }
        continue;
      }
      if (key == "efficiency") {
        c.cluster.efficiency = parse_real(qual, value);
        if (c.cluster.efficiency <= 0 || c.cluster.efficiency > 1) {
          throw ConfigRangeError(qual + " must be in (0, 1]");
        }
        continue;
      }
      if (key == "epoch_overhead_seconds") {
        c.cluster.epoch_overhead_seconds = parse_real(qual, value);
        if (c.cluster.epoch_overhead_seconds < 0) {
          throw ConfigRangeError(qual + " must be >= 0");
        }
        continue;
      }
      if (key == "run_budget_seconds") {
        c.cluster.run_budget_seconds = parse_real(qual, value);
        if (c.cluster.run_budget_seconds <= 0) {
          throw ConfigRangeError(qual + " must be > 0");
        }
        continue;
      }
      if (key == "max_epoch") {
        c.cluster.max_epoch = require_range(qual, parse_int(qual, value), 1, 100000);
        continue;
      }
      if (key == "patience") {
        c.cluster.patience = require_range(qual, parse_int(qual, value), 1, 100000);
        continue;
      }
      if (key == "rng_seed") {
        c.cluster.rng_seed = parse_int(qual, value);
        continue;
      }
      if (key == "shared_history") {
        c.cluster.shared_history = parse_bool(qual, value);
        continue;
      }
    }
    if (section == "executor") {
      if (key == "type") {
        if (value == "simulated") c.executor = ExecutorKind::Simulated;
        else if (value == "command") c.executor = ExecutorKind::Command;
        else throw ConfigParseError("executor.type must be simulated or command");
        continue;
      }
      if (key == "command_template") {
        c.command_template = value;
        continue;
      }
    }
    if (section == "hpo") {
      if (key == "batch_size") {
        c.hpo_defaults.batch_size =
            require_range(qual, parse_int(qual, value), 1, 1 << 20);
        continue;
      }
      if (key == "kernel_size") {
        c.hpo_defaults.kernel_size = require_range(qual, parse_int(qual, value), 1, 7);
        continue;
      }
    }
    if (section == "dataset") {
      if (key == "train_images") {
        long long v = parse_int(qual, value);
        if (v < 1) throw ConfigRangeError(qual + " must be >= 1");
        c.dataset.train_images = static_cast<u64>(v);
        continue;
      }
      if (key == "val_images") {
        long long v = parse_int(qual, value);
        if (v < 1) throw ConfigRangeError(qual + " must be >= 1");
        c.dataset.val_images = static_cast<u64>(v);
        continue;
      }
      if (key == "image_shape") {
        try {
          c.dataset.image_shape = parse_tensor_shape(value);
        } catch (const ArchParseError& e) {
          throw ConfigParseError(e.what());
        }
        continue;
      }
    }
    if (section == "fixed") {
      // Echoing the fixed value is allowed; changing it is an error.
      if (key == "nas_method") {
        check_fixed_string(qual, value, fixed_defaults.nas_method);
        continue;
      }
      if (key == "hpo_method") {
        check_fixed_string(qual, value, fixed_defaults.hpo_method);
        continue;
      }
      if (key == "seed_architecture") {
        check_fixed_string(qual, value, fixed_defaults.seed_architecture);
        continue;
      }
      if (key == "min_precision_bits") {
        if (parse_int(qual, value) != fixed_defaults.min_precision_bits) {
          throw FixedFieldOverrideError(qual + " is fixed to 16");
        }
        continue;
      }
      if (key == "max_error") {
        if (parse_real(qual, value) != fixed_defaults.max_error) {
          throw FixedFieldOverrideError(qual + " is fixed to 0.30");
        }
        continue;
      }
    }
    if (section == "provenance") {
      if (key == "dl_framework") { c.provenance.dl_framework = value; continue; }
      if (key == "initial_weight") { c.provenance.initial_weight = value; continue; }
      if (key == "optimizer") { c.provenance.optimizer = value; continue; }
      if (key == "learning_rate") { c.provenance.learning_rate = value; continue; }
      if (key == "loss_function") { c.provenance.loss_function = value; continue; }
      if (key == "parallelism") { c.provenance.parallelism = value; continue; }
      if (key == "parallel_data_transformation") {
        c.provenance.parallel_data_transformation =
            require_range(qual, parse_int(qual, value), 1, 100000);
        continue;
      }
    }
    throw ConfigParseError("unknown key '" + qual + "'");
  }

  if (c.executor == ExecutorKind::Command && c.command_template.empty()) {
    throw ConfigRangeError("executor.type=command requires command_template");
  }
  c.nonstandard_dataset = !(c.dataset == DatasetDescriptor::imagenet());

  if (const char* env = std::getenv("AIPERF_SEED")) {
    c.cluster.rng_seed = parse_int("AIPERF_SEED", env);
  }
  return c;
}

BenchmarkConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigParseError("cannot read config file " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string save_config(const BenchmarkConfig& c) {
  std::ostringstream out;
  char num[64];
  auto real = [&](double v) {
    std::snprintf(num, sizeof num, "%.17g", v);
    return std::string(num);
  };
  out << "[cluster]\n";
  out << "replica_count = " << c.cluster.replica_count << "\n";
  out << "accelerators_per_replica = " << c.cluster.accelerators_per_replica << "\n";
  out << "peak_ops_per_accelerator = " << real(c.cluster.peak_ops_per_accelerator) << "\n";
  out << "efficiency = " << real(c.cluster.efficiency) << "\n";
  out << "epoch_overhead_seconds = " << real(c.cluster.epoch_overhead_seconds) << "\n";
  out << "run_budget_seconds = " << real(c.cluster.run_budget_seconds) << "\n";
  out << "max_epoch = " << c.cluster.max_epoch << "\n";
  out << "patience = " << c.cluster.patience << "\n";
  out << "rng_seed = " << c.cluster.rng_seed << "\n";
  out << "shared_history = " << (c.cluster.shared_history ? "true" : "false") << "\n";
  out << "\n[executor]\n";
  out << "type = " << (c.executor == ExecutorKind::Simulated ? "simulated" : "command")
      << "\n";
  if (!c.command_template.empty()) {
    out << "command_template = " << c.command_template << "\n";
  }
  out << "\n[hpo]\n";
  out << "batch_size = " << c.hpo_defaults.batch_size << "\n";
  out << "kernel_size = " << c.hpo_defaults.kernel_size << "\n";
  out << "\n[dataset]\n";
  out << "train_images = " << c.dataset.train_images << "\n";
  out << "val_images = " << c.dataset.val_images << "\n";
  out << "image_shape = " << to_string(c.dataset.image_shape) << "\n";
  out << "\n[fixed]\n";
  out << "nas_method = " << c.fixed.nas_method << "\n";
  out << "hpo_method = " << c.fixed.hpo_method << "\n";
  out << "seed_architecture = " << c.fixed.seed_architecture << "\n";
  out << "min_precision_bits = " << c.fixed.min_precision_bits << "\n";
  out << "max_error = 0.3\n";
  out << "\n[provenance]\n";
  out << "dl_framework = " << c.provenance.dl_framework << "\n";
  out << "initial_weight = " << c.provenance.initial_weight << "\n";
  out << "optimizer = " << c.provenance.optimizer << "\n";
  out << "learning_rate = " << c.provenance.learning_rate << "\n";
  out << "loss_function = " << c.provenance.loss_function << "\n";
  out << "parallelism = " << c.provenance.parallelism << "\n";
  out << "parallel_data_transformation = " << c.provenance.parallel_data_transformation
      << "\n";
  return out.str();
}

}  // namespace aiperf
