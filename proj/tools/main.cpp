// cpl: conformal prediction sets from exported classifier logits.
//
// Subcommands:
//   calibrate        compute a calibration record from a labeled dataset
//   predict          apply a record to a dataset, one JSON line per example
//   evaluate         calibrate + predict + metrics in one run
//   synth            generate a synthetic dataset with known rank statistics
//   fit-temperature  temperature-scale a dataset and report ECE
//
// Exit codes: 0 success, 2 usage/validation, 3 runtime/I-O.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cpl/conformal.hpp"
#include "cpl/dataset.hpp"
#include "cpl/errors.hpp"
#include "cpl/metrics.hpp"
#include "cpl/parallel.hpp"
#include "cpl/pipeline.hpp"
#include "cpl/synthetic.hpp"
#include "cpl/temperature.hpp"

namespace {

using Json = nlohmann::ordered_json;

double parse_number(const std::string& text, const std::string& what) {
  const char* last = text.data() + text.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), last, value);
  if (ec != std::errc() || ptr != last) {
    throw std::invalid_argument("cannot parse " + what + " '" + text + "'");
  }
  return value;
}

std::vector<double> parse_number_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string field =
        text.substr(start, comma == std::string::npos ? std::string::npos
                                                      : comma - start);
    values.push_back(parse_number(field, what + " entry"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return values;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CP_SEED")) {
    const std::string text(env);
    std::uint64_t value = 0;
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), last, value);
    if (ec != std::errc() || ptr != last) {
      throw std::invalid_argument("CP_SEED is set but is not an unsigned "
                                  "integer: '" + text + "'");
    }
    return value;
  }
  return 0;
}

void write_text(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw cpl::IoError("cannot open '" + path + "' for writing");
  }
  out << content;
  out.flush();
  if (!out) {
    throw cpl::IoError("failed writing '" + path + "'");
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw cpl::IoError("cannot open '" + path + "' for reading");
  }
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw cpl::IoError("failed reading '" + path + "'");
  }
  return content;
}

// --- shared flag bundles ---------------------------------------------------

struct ScoringFlags {
  std::string scores = "aps";
  double alpha = 0.1;
  double lambda = 0.1;
  double phi = 0.1;
  int k_reg = 1;
  double gamma = 1.0;
  std::string grid;      // "" = variant default when --grid is present
  std::string temperature = "off";
  double calib_fraction = 0.8;
  std::optional<std::uint64_t> seed;

  CLI::Option* grid_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* phi_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--scores", scores,
                    "score variant: aps, cons, raps, or saps")
        ->capture_default_str();
    cmd->add_option("--alpha", alpha, "miscoverage level in (0, 1)")
        ->capture_default_str();
    lambda_opt = cmd->add_option(
        "--lambda", lambda, "saps rank weight (ignored by other variants)");
    phi_opt = cmd->add_option("--phi", phi, "raps rank penalty");
    cmd->add_option("--k-reg", k_reg, "raps penalty-free prefix length")
        ->capture_default_str();
    cmd->add_option("--gamma", gamma, "cons scale; sets are invariant to it")
        ->capture_default_str();
    grid_opt = cmd->add_option(
                      "--grid", grid,
                      "tune the variant's hyperparameter: bare flag or "
                      "'default' for the standard grid, or a comma list")
                   ->expected(0, 1);
    cmd->add_option("--temperature", temperature,
                    "logit scaling policy: fit, off, or fixed:<T>")
        ->capture_default_str();
    cmd->add_option("--calib-fraction", calib_fraction,
                    "fraction kept for the threshold when tuning; the rest "
                    "is validation")
        ->capture_default_str();
    cmd->add_option("--seed", seed,
                    "RNG seed (falls back to CP_SEED, then 0)");
  }

  cpl::PipelineConfig build() const {
    cpl::PipelineConfig config;
    config.params.variant = cpl::variant_from_name(scores);
    config.params.lambda = lambda;
    config.params.phi = phi;
    config.params.k_reg = k_reg;
    config.params.gamma = gamma;
    config.alpha = alpha;
    config.seed = resolve_seed(seed);

    if (!(calib_fraction > 0.0) || !(calib_fraction < 1.0)) {
      throw std::invalid_argument("--calib-fraction must lie in (0, 1)");
    }
    config.validation_fraction = 1.0 - calib_fraction;

    if (grid_opt != nullptr && grid_opt->count() > 0) {
      if (config.params.variant == cpl::ScoreVariant::kSaps &&
          lambda_opt->count() > 0) {
        throw std::invalid_argument(
            "--grid and --lambda are mutually exclusive for saps");
      }
      if (config.params.variant == cpl::ScoreVariant::kRaps &&
          phi_opt->count() > 0) {
        throw std::invalid_argument(
            "--grid and --phi are mutually exclusive for raps");
      }
      if (grid.empty() || grid == "default") {
        const auto standard = cpl::default_tuning_grid(config.params.variant);
        config.grid.emplace(standard.begin(), standard.end());
      } else {
        config.grid = parse_number_list(grid, "--grid");
      }
    }

    if (temperature == "fit") {
      config.temperature_mode = cpl::TemperatureMode::kFit;
    } else if (temperature == "off") {
      config.temperature_mode = cpl::TemperatureMode::kOff;
    } else {
      std::string number = temperature;
      if (number.rfind("fixed:", 0) == 0) number = number.substr(6);
      config.temperature_mode = cpl::TemperatureMode::kFixed;
      config.fixed_temperature =
          parse_number(number, "--temperature");
    }
    return config;
  }
};

std::string render_prediction_lines(const std::vector<cpl::PredictionSet>& sets,
                                    std::span<const std::uint32_t> labels) {
  std::string out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    Json line;
    line["index"] = i;
    line["size"] = sets[i].size();
    line["members"] = sets[i].members;
    line["covered"] = sets[i].contains(labels[i]);
    out += line.dump();
    out += '\n';
  }
  return out;
}

// --- subcommands -----------------------------------------------------------

struct CalibrateArgs {
  std::string in;
  std::string out;
  ScoringFlags scoring;
};

int run_calibrate(const CalibrateArgs& args) {
  const cpl::LabeledDataset dataset = cpl::load_dataset(args.in);
  const cpl::CalibrationRecord record =
      cpl::calibrate(dataset, args.scoring.build());
  write_text(args.out, record.to_json_string() + "\n");
  return 0;
}

struct PredictArgs {
  std::string record_path;
  std::string in;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run_predict(const PredictArgs& args) {
  const cpl::CalibrationRecord record =
      cpl::CalibrationRecord::from_json_string(read_text(args.record_path));
  const cpl::LabeledDataset test = cpl::load_dataset(args.in);
  const std::uint64_t seed = args.seed ? *args.seed : record.seed;
  const cpl::PredictionDetail detail =
      cpl::predict_dataset_detailed(record, test, seed);
  write_text(args.out, render_prediction_lines(detail.sets, test.labels));
  return 0;
}

struct EvaluateArgs {
  std::string calib;
  std::string test;
  std::string out;
  std::string record_out;
  std::string pred_out;
  ScoringFlags scoring;
};

int run_evaluate(const EvaluateArgs& args) {
  const cpl::LabeledDataset calibration = cpl::load_dataset(args.calib);
  const cpl::LabeledDataset test = cpl::load_dataset(args.test);
  const cpl::PipelineResult result =
      cpl::run_pipeline(calibration, test, args.scoring.build());

  write_text(args.out, result.metrics.to_json_string() + "\n");
  if (!args.record_out.empty()) {
    write_text(args.record_out, result.record.to_json_string() + "\n");
  }
  if (!args.pred_out.empty()) {
    write_text(args.pred_out,
               render_prediction_lines(result.sets, test.labels));
  }
  return 0;
}

struct SynthArgs {
  std::string profile;
  std::string geometric;  // "k:top1:decay"
  double tail_decay = 0.9;
  double noise = 0.5;
  std::uint64_t n = 0;
  double alpha = 0.1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_synth(const SynthArgs& args) {
  cpl::SyntheticSpec spec;
  if (!args.profile.empty() == !args.geometric.empty()) {
    throw std::invalid_argument(
        "synth needs exactly one of --profile or --geometric");
  }
  if (!args.profile.empty()) {
    spec.profile.cumulative = parse_number_list(args.profile, "--profile");
  } else {
    const std::size_t first = args.geometric.find(':');
    const std::size_t second =
        first == std::string::npos ? std::string::npos
                                   : args.geometric.find(':', first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw std::invalid_argument(
          "--geometric expects k:top1:decay, e.g. 1000:0.75:0.85");
    }
    const double k = parse_number(args.geometric.substr(0, first), "classes");
    const double top1 = parse_number(
        args.geometric.substr(first + 1, second - first - 1), "top1");
    const double decay =
        parse_number(args.geometric.substr(second + 1), "decay");
    if (k < 2 || k != std::floor(k)) {
      throw std::invalid_argument("--geometric class count must be an "
                                  "integer >= 2");
    }
    spec.profile =
        cpl::geometric_profile(static_cast<std::size_t>(k), top1, decay);
  }
  spec.tail_decay = args.tail_decay;
  spec.noise = args.noise;
  spec.seed = resolve_seed(args.seed);

  if (args.n == 0) {
    throw std::invalid_argument("--n must be at least 1");
  }
  const cpl::LabeledDataset dataset = cpl::generate_dataset(spec, args.n);
  cpl::save_binary(dataset, args.out);

  const double expected = cpl::expected_cons_size(spec.profile, args.alpha);
  char line[128];
  std::snprintf(line, sizeof(line),
                "expected cons set size at alpha=%g: %.6f\n", args.alpha,
                expected);
  std::cout << line;
  return 0;
}

struct FitTemperatureArgs {
  std::string in;
  std::string out;
};

int run_fit_temperature(const FitTemperatureArgs& args) {
  const cpl::LabeledDataset dataset = cpl::load_dataset(args.in);
  const cpl::TemperatureFit fit = cpl::fit_temperature(dataset);

  const cpl::ProbabilityMatrix before = cpl::softmax(dataset.logits, 1.0);
  const cpl::ProbabilityMatrix after =
      cpl::softmax(dataset.logits, fit.temperature);

  Json out;
  out["temperature"] = fit.temperature;
  out["nll"] = fit.nll;
  out["iterations"] = fit.iterations;
  out["ece_before"] = cpl::expected_calibration_error(before, dataset.labels);
  out["ece_after"] = cpl::expected_calibration_error(after, dataset.labels);
  write_text(args.out, out.dump() + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal prediction sets from classifier logits"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "worker thread cap, 0 = hardware default; results never "
                 "depend on it")
      ->capture_default_str();

  CalibrateArgs calibrate_args;
  CLI::App* cmd_calibrate =
      app.add_subcommand("calibrate", "compute a calibration record");
  cmd_calibrate
      ->add_option("--in", calibrate_args.in, "labeled dataset (binary or CSV)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_calibrate->add_option("--out", calibrate_args.out,
                            "record path (default: stdout)");
  calibrate_args.scoring.attach(cmd_calibrate);

  PredictArgs predict_args;
  CLI::App* cmd_predict =
      app.add_subcommand("predict", "apply a record to a dataset");
  cmd_predict->add_option("--record", predict_args.record_path,
                          "calibration record JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_predict->add_option("--in", predict_args.in, "labeled dataset")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_predict->add_option("--out", predict_args.out,
                          "JSON-lines path (default: stdout)");
  cmd_predict->add_option("--seed", predict_args.seed,
                          "override the record's seed for test draws");

  EvaluateArgs evaluate_args;
  CLI::App* cmd_evaluate = app.add_subcommand(
      "evaluate", "calibrate, predict, and report metrics");
  cmd_evaluate->add_option("--calib", evaluate_args.calib,
                           "calibration dataset")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_evaluate->add_option("--test", evaluate_args.test, "test dataset")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_evaluate->add_option("--out", evaluate_args.out,
                           "metrics path (default: stdout)");
  cmd_evaluate->add_option("--record-out", evaluate_args.record_out,
                           "also write the calibration record here");
  cmd_evaluate->add_option("--pred-out", evaluate_args.pred_out,
                           "also write per-example JSON lines here");
  evaluate_args.scoring.attach(cmd_evaluate);

  SynthArgs synth_args;
  CLI::App* cmd_synth = app.add_subcommand(
      "synth", "generate a synthetic dataset with known rank statistics");
  cmd_synth->add_option("--profile", synth_args.profile,
                        "cumulative top-r accuracies, e.g. 0.7,0.92,0.97,1.0");
  cmd_synth->add_option("--geometric", synth_args.geometric,
                        "k:top1:decay profile shorthand, e.g. 1000:0.75:0.85");
  cmd_synth->add_option("--tail-decay", synth_args.tail_decay,
                        "geometric decay of sorted probabilities, in (0, 1)")
      ->capture_default_str();
  cmd_synth->add_option("--noise", synth_args.noise,
                        "lognormal jitter strength, >= 0")
      ->capture_default_str();
  cmd_synth->add_option("--n", synth_args.n, "number of examples")->required();
  cmd_synth->add_option("--alpha", synth_args.alpha,
                        "miscoverage level for the printed oracle size")
      ->capture_default_str();
  cmd_synth->add_option("--seed", synth_args.seed,
                        "RNG seed (falls back to CP_SEED, then 0)");
  cmd_synth->add_option("--out", synth_args.out, "output dataset path")
      ->required();

  FitTemperatureArgs fit_args;
  CLI::App* cmd_fit = app.add_subcommand(
      "fit-temperature", "temperature-scale a dataset and report ECE");
  cmd_fit->add_option("--in", fit_args.in, "labeled dataset")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_fit->add_option("--out", fit_args.out, "JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    cpl::par::set_max_threads(threads);
    if (cmd_calibrate->parsed()) return run_calibrate(calibrate_args);
    if (cmd_predict->parsed()) return run_predict(predict_args);
    if (cmd_evaluate->parsed()) return run_evaluate(evaluate_args);
    if (cmd_synth->parsed()) return run_synth(synth_args);
    if (cmd_fit->parsed()) return run_fit_temperature(fit_args);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const cpl::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cpl::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
