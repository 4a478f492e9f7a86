// manetir: scenario runs, the attack suite and the detector file commands.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "manetir/adversary.hpp"
#include "manetir/error.hpp"
#include "manetir/esom.hpp"
#include "manetir/sim.hpp"

namespace fs = std::filesystem;
using namespace manetir;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kSuiteFailure = 2;

/// Input or configuration problem; reported and mapped to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& config,
                           std::string_view command) {
  if (flag) return *flag;
  if (config) return *config;
  throw UsageError(std::string(command) + " needs an explicit seed (--seed N or 'seed = N' in the config)");
}

void warn_degenerate(const FeatureStats& stats) {
  for (std::size_t f : stats.degenerate) {
    std::cerr << "warning: feature '" << kFeatureNames[f] << "' is constant in the training data\n";
  }
}

std::string region_name(Region r) {
  switch (r) {
    case Region::Normal: return "normal";
    case Region::Attack: return "attack";
    case Region::Hill: return "hill";
  }
  return "?";
}

std::string umatrix_csv(const EsomModel& m) {
  const auto u = compute_umatrix(m.grid);
  std::string out = "row,col,height,region\n";
  for (std::size_t r = 0; r < m.grid.rows; ++r) {
    for (std::size_t c = 0; c < m.grid.cols; ++c) {
      const std::size_t i = r * m.grid.cols + c;
      out += std::to_string(r) + ',' + std::to_string(c) + ',' + format_double(u[i]) + ',' +
             region_name(m.labeling.labels[i]) + '\n';
    }
  }
  return out;
}

std::vector<Verdict> read_verdicts(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<Verdict> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (n == 1 && line == "verdict")) continue;
    try {
      out.push_back(parse_verdict(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::Malformed, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::string rates_csv(const Rates& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return "detection_rate,false_alarm_rate,attacks,normals,detected,false_alarms,unclassified\n" +
         opt(r.detection_rate) + ',' + opt(r.false_alarm_rate) + ',' + std::to_string(r.attacks) + ',' +
         std::to_string(r.normals) + ',' + std::to_string(r.detected) + ',' + std::to_string(r.false_alarms) + ',' +
         std::to_string(r.unclassified) + '\n';
}

std::string suite_csv(const AttackSuiteReport& report) {
  std::string out = "goal,verdict,trials,failures,detail\n";
  for (const auto& g : report.goals) {
    out += g.goal + ',' + (g.pass ? "PASS" : "FAIL") + ',' + std::to_string(g.trials) + ',' +
           std::to_string(g.failures) + ",\"" + g.detail + "\"\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manetir: secure group key agreement and eSOM intrusion response for MANETs"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";

  auto* simulate = app.add_subcommand("simulate", "Run a scenario; writes metrics.csv, trace.csv and trees.txt");
  simulate->add_option("--config", config_path, "Scenario config file")->required();
  simulate->add_option("--seed", seed, "Run seed (overrides the config's seed)");
  simulate->add_option("--out", out_dir, "Output directory");

  bool disable_nonce_check = false;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> trials;
  auto* suite = app.add_subcommand("attack-suite", "Eavesdropper, replayer, leaver and joiner oracles");
  suite->add_option("--config", config_path, "Scenario config file (cipher suite, key width, leave policy)")
      ->required();
  suite->add_option("--seed", seed, "Suite seed (default: the config's seed, else 1)");
  suite->add_option("--out", out_dir, "Output directory for suite.csv");
  suite->add_option("--epochs", epochs, "Transcript-scan epochs (default 1000)");
  suite->add_option("--trials", trials, "Leaver and joiner trials (default 1000)");
  suite->add_flag("--insecure-disable-nonce-check", disable_nonce_check,
                  "Negative control: skip nonce verification (the replay goal must fail)");

  std::string data_path, model_path, verdict_path, out_path, umatrix_path;
  auto* train = app.add_subcommand("train", "Train an eSOM model on a labelled dataset");
  train->add_option("--data", data_path, "Dataset CSV")->required();
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--config", config_path, "Optional config supplying som_* and hill_quantile");
  train->add_option("--out", out_path, "Model file")->required();
  train->add_option("--umatrix", umatrix_path, "Also write the U-matrix heights as CSV");

  auto* classify = app.add_subcommand("classify", "Write one verdict per dataset row");
  classify->add_option("--model", model_path, "Model file")->required();
  classify->add_option("--data", data_path, "Dataset CSV (the label column is ignored)")->required();
  classify->add_option("--seed", seed, "Accepted for uniformity; classification draws no randomness");
  classify->add_option("--out", out_path, "Verdict file")->required();

  auto* eval = app.add_subcommand("evaluate", "Detection and false alarm rates of a verdict file");
  eval->add_option("--verdicts", verdict_path, "Verdict file")->required();
  eval->add_option("--data", data_path, "Dataset CSV holding the true labels")->required();
  eval->add_option("--seed", seed, "Accepted for uniformity; evaluation draws no randomness");
  eval->add_option("--out", out_path, "Rates CSV (stdout when absent)");

  std::size_t per_class = 1000;
  double effect = 4.0;
  auto* synth = app.add_subcommand("synth", "Synthetic two-class dataset");
  synth->add_option("--seed", seed, "Generator seed")->required();
  synth->add_option("--per-class", per_class, "Samples per class");
  synth->add_option("--effect", effect, "Per-feature attack shift in standard deviations");
  synth->add_option("--out", out_path, "Dataset CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*simulate) {
      const ScenarioConfig cfg = load_scenario(config_path);
      const std::uint64_t s = require_seed(seed, cfg.seed, "simulate");
      const EsomModel detector = train_calibration_detector(cfg, s);
      warn_degenerate(detector.stats);
      const MetricsReport report = run_scenario(cfg, s, detector);
      const fs::path dir(out_dir);
      write_file(dir / "metrics.csv", report.metrics_csv());
      write_file(dir / "trace.csv", report.trace);
      write_file(dir / "trees.txt", report.trees);
      std::cout << report.rows.size() << " rows written to " << (dir / "metrics.csv").string() << '\n';
      return kOk;
    }
    if (*suite) {
      const ScenarioConfig cfg = load_scenario(config_path);
      AttackSuiteConfig sc;
      sc.group = cfg.group;
      sc.group.options.verify_nonces = !disable_nonce_check;
      sc.seed = seed.value_or(cfg.seed.value_or(1));
      if (epochs) sc.transcript_epochs = *epochs;
      if (trials) sc.leaver_trials = sc.joiner_trials = *trials;
      const AttackSuiteReport report = run_attack_suite(sc);
      for (const auto& g : report.goals) {
        std::printf("%-22s %s  %zu/%zu  %s\n", g.goal.c_str(), g.pass ? "PASS" : "FAIL", g.trials - g.failures,
                    g.trials, g.detail.c_str());
      }
      std::fprintf(stderr, "suite time %.2f s\n", report.seconds);
      write_file(fs::path(out_dir) / "suite.csv", suite_csv(report));
      return report.all_pass() ? kOk : kSuiteFailure;
    }
    if (*train) {
      SomConfig som;
      std::optional<std::uint64_t> config_seed;
      if (!config_path.empty()) {
        const ScenarioConfig cfg = load_scenario(config_path);
        som = cfg.som;
        config_seed = cfg.seed;
      }
      const std::uint64_t s = require_seed(seed, config_seed, "train");
      const Dataset data = read_dataset(data_path);
      if (data.size() < 2) throw UsageError(data_path + ": training needs at least two rows");
      const EsomModel m = train_model(data, som, s);
      warn_degenerate(m.stats);
      if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
      save_model(m, out_path);
      if (!umatrix_path.empty()) write_file(umatrix_path, umatrix_csv(m));
      return kOk;
    }
    if (*classify) {
      const EsomModel m = load_model(model_path);
      const Dataset data = read_dataset(data_path);
      std::string out = "verdict\n";
      for (Verdict v : m.classify_all(data.x)) out += std::string(name_of(v)) + '\n';
      write_file(out_path, out);
      return kOk;
    }
    if (*eval) {
      const auto verdicts = read_verdicts(verdict_path);
      const Dataset data = read_dataset(data_path);
      if (verdicts.size() != data.size()) {
        throw UsageError(std::to_string(verdicts.size()) + " verdicts for " + std::to_string(data.size()) +
                         " dataset rows");
      }
      const std::string csv = rates_csv(evaluate(verdicts, data.y));
      if (out_path.empty()) std::cout << csv;
      else write_file(out_path, csv);
      return kOk;
    }
    if (*synth) {
      Rng rng(*seed);
      write_file(out_path, format_dataset(make_two_class(per_class, effect, rng)));
      return kOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
