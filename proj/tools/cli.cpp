#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "bcpd/changepoint.hpp"
#include "bcpd/cleaning.hpp"
#include "bcpd/density_csv.hpp"
#include "bcpd/errors.hpp"
#include "bcpd/ingestion.hpp"
#include "bcpd/random.hpp"
#include "bcpd/simlab.hpp"

namespace bcpd::cli {
namespace {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DetectFlags {
  double alpha = 0.05;
  std::size_t mc_samples = 2000;
  double theta = 0.95;
  std::size_t bridge_nodes = 1001;
  std::uint64_t seed = 1;
  std::string centering = "global";
  unsigned threads = 0;

  DetectOptions options() const {
    DetectOptions o;
    o.alpha = alpha;
    o.mc_samples = mc_samples;
    o.theta = theta;
    o.bridge_nodes = bridge_nodes;
    o.seed = seed;
    o.centering = parse_centering(centering);
    o.threads = threads;
    return o;
  }
};

void add_detect_flags(CLI::App& sub, DetectFlags& f) {
  sub.add_option("--alpha", f.alpha, "Significance level")->capture_default_str();
  sub.add_option("--mc-samples", f.mc_samples, "Monte Carlo samples of the limiting law")->capture_default_str();
  sub.add_option("--theta", f.theta, "Cumulative-variance threshold for the truncation level")
      ->capture_default_str();
  sub.add_option("--bridge-nodes", f.bridge_nodes, "Grid points per simulated Brownian bridge")
      ->capture_default_str();
  sub.add_option("--centering", f.centering, "Residual centering: global or segmented")
      ->capture_default_str()
      ->check(CLI::IsMember({"global", "segmented"}));
}

void add_seed_threads(CLI::App& sub, std::uint64_t& seed, unsigned& threads) {
  sub.add_option("--seed", seed, "RNG seed")->capture_default_str();
  sub.add_option("--threads", threads, "Worker threads (0 = one per hardware thread)")
      ->capture_default_str()
      ->envname("BAYES_CPD_THREADS");
}

// Flat `key = value` file; '#' and ';' start comments, [section] lines are ignored.
std::vector<std::pair<std::string, std::string>> read_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

// Values from the file fill options not given on the command line.
void apply_config(CLI::App& sub, const std::string& path) {
  for (const auto& [key, value] : read_flat_config(path)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") throw UsageError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void write_json(const nlohmann::json& j, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path);
  f << j.dump(2) << '\n';
}

template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path);
  fn(f);
}

DistributionalSequence load_sequence(const std::string& path, bool zero_avoid_rows) {
  DensityTable table;
  try {
    table = read_density_table_file(path);
  } catch (const CsvFormatError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const StructuralError& e) {
    throw UsageError(e.what());
  }
  std::vector<DensityFunction> densities;
  try {
    densities = densities_from_table(table, zero_avoid_rows);
  } catch (const std::exception& e) {
    throw DomainError(path + ": " + e.what());
  }
  return DistributionalSequence(std::move(densities));
}

struct CleaningFlags {
  std::string detector = "clr-median-distance";
  double detector_whisker = kDefaultDetectorWhisker;
  std::string secondary = "none";
};

void add_cleaning_flags(CLI::App& sub, CleaningFlags& f) {
  sub.add_option("--detector", f.detector, "Primary outlier detector: clr-median-distance or none")
      ->capture_default_str()
      ->check(CLI::IsMember({"clr-median-distance", "none"}));
  sub.add_option("--detector-whisker", f.detector_whisker, "Upper-fence whisker of the detector")
      ->capture_default_str();
  sub.add_option("--secondary-detector", f.secondary,
                 "Optional second detector whose flags are united with the primary's")
      ->capture_default_str()
      ->check(CLI::IsMember({"clr-median-distance", "none"}));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Change-point detection for sequences of probability densities", "bayes_cpd"};
  app.require_subcommand(1);
  std::map<CLI::App*, std::function<int()>> actions;
  std::map<CLI::App*, std::string> config_paths;
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_paths[sub], "Flat key = value file; command-line flags take precedence; default: none");
  };

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Test a density CSV for a single mean break");
  std::string detect_input, detect_out = "-", profile_csv, increment_csv, cleaning_report;
  std::string method_name = "bayes-clr";
  bool detect_zero_avoid = false, detect_clean = false;
  DetectFlags detect_flags;
  CleaningFlags detect_cleaning;
  detect_cmd->add_option("input", detect_input, "Density CSV")->required();
  detect_cmd->add_option("--method", method_name, "bayes-clr or l2-raw")
      ->capture_default_str()
      ->check(CLI::IsMember({"bayes-clr", "l2-raw"}));
  detect_cmd->add_option("--out", detect_out, "DetectionResult JSON path ('-' for stdout)")->capture_default_str();
  detect_cmd->add_option("--profile-csv", profile_csv, "Write the CUSUM profile (k, norm_sq); default: not written");
  detect_cmd->add_option("--increment-csv", increment_csv, "Write the estimated increment density when rejected; default: not written");
  detect_cmd->add_flag("--zero-avoid", detect_zero_avoid, "Apply 0.9 f + 0.1 to every row before analysis");
  detect_cmd->add_flag("--clean", detect_clean, "Remove distributional outliers before detection");
  detect_cmd->add_option("--cleaning-report", cleaning_report, "CleaningReport JSON path (with --clean); default: not written");
  add_detect_flags(*detect_cmd, detect_flags);
  add_cleaning_flags(*detect_cmd, detect_cleaning);
  add_seed_threads(*detect_cmd, detect_flags.seed, detect_flags.threads);
  add_config(detect_cmd);
  actions[detect_cmd] = [&]() -> int {
    const DistributionalSequence seq = load_sequence(detect_input, detect_zero_avoid);
    const DetectOptions options = detect_flags.options();
    const Method method = parse_method(method_name);
    DetectionResult result;
    if (detect_clean) {
      const auto primary = make_detector(detect_cleaning.detector, {.whisker = detect_cleaning.detector_whisker});
      const auto secondary = make_detector(detect_cleaning.secondary, {.whisker = detect_cleaning.detector_whisker});
      CleanDetectResult cleaned = clean_and_detect(seq, options, *primary,
                                                   detect_cleaning.secondary == "none" ? nullptr : secondary.get(),
                                                   method);
      if (!cleaning_report.empty()) write_json(to_json(cleaned.report), cleaning_report, out);
      result = std::move(cleaned.detection);
    } else {
      result = detect_with(method, seq, options);
    }
    std::optional<std::string> inc_path;
    if (!increment_csv.empty() && result.increment) {
      write_density_csv_file(increment_csv, result.increment->grid(), {*result.increment});
      inc_path = increment_csv;
    }
    if (!profile_csv.empty()) write_file(profile_csv, [&](std::ostream& f) { write_profile_csv(f, result.profile); });
    write_json(to_json(result, inc_path), detect_out, out);
    return result.reject_null ? kRejected : kNotRejected;
  };

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic density CSV or raw series");
  std::string generator = "sim1", sim_out, truth_out;
  std::size_t sim_n = 100, sim_kstar = 50, contaminate_count = 0, grid_nodes = Grid::kDefaultNodes;
  bool no_change = false;
  std::uint64_t sim_seed = 1;
  unsigned sim_threads = 0;
  RawSeriesConfig raw_cfg;
  sim_cmd->add_option("--generator", generator, "sim1, model1, model2, model3 or raw")->capture_default_str();
  sim_cmd->add_option("--n", sim_n, "Sequence length")->capture_default_str();
  sim_cmd->add_option("--kstar", sim_kstar, "True change-point (last pre-change index)")->capture_default_str();
  sim_cmd->add_flag("--no-change", no_change, "Generate pre-change data only");
  sim_cmd->add_option("--contaminate", contaminate_count, "Number of outlying densities to inject")
      ->capture_default_str();
  sim_cmd->add_option("--grid-nodes", grid_nodes, "Grid nodes on [0,1]")->capture_default_str();
  sim_cmd->add_option("--out", sim_out, "Output CSV (required)")->required();
  sim_cmd->add_option("--truth", truth_out, "Ground-truth sidecar JSON; default: <out>.truth.json");
  sim_cmd->add_option("--days", raw_cfg.days, "raw: number of days")->capture_default_str();
  sim_cmd->add_option("--samples-per-day", raw_cfg.samples_per_day, "raw: samples per day")->capture_default_str();
  sim_cmd->add_option("--switch-day", raw_cfg.switch_day, "raw: last day of the pre-change law")
      ->capture_default_str();
  sim_cmd->add_option("--spike-probability,--spike-prob", raw_cfg.spike_probability, "raw: per-sample spike probability")
      ->capture_default_str();
  add_seed_threads(*sim_cmd, sim_seed, sim_threads);
  add_config(sim_cmd);
  actions[sim_cmd] = [&]() -> int {
    const std::string truth_path = truth_out.empty() ? sim_out + ".truth.json" : truth_out;
    if (generator == "raw") {
      const RawSeries raw = gen_raw_series(raw_cfg, sim_seed);
      write_file(sim_out, [&](std::ostream& f) {
        f << "timestamp,value\n";
        for (std::size_t i = 0; i < raw.size(); ++i) {
          f << format_double(raw.timestamps[i]) << ',' << format_double(raw.values[i]) << '\n';
        }
      });
      write_json({{"switch_day", raw_cfg.switch_day}, {"days", raw_cfg.days}, {"seed", sim_seed}}, truth_path, out);
      return kRejected;
    }
    Generator g;
    try {
      g = parse_generator(generator);
    } catch (const StructuralError& e) {
      throw UsageError(e.what());
    }
    const Grid grid(grid_nodes);
    const std::uint64_t k_star = no_change ? sim_n : sim_kstar;
    DistributionalSequence seq = generate(g, sim_n, k_star, derive_seed(sim_seed, 0), grid);
    std::vector<std::size_t> indices;
    if (contaminate_count > 0) {
      const auto outliers = gen_outliers(contaminate_count, derive_seed(sim_seed, 1), grid);
      Contamination c = contaminate(seq, outliers, derive_seed(sim_seed, 2));
      seq = std::move(c.sequence);
      indices = std::move(c.indices);
    }
    write_density_csv_file(sim_out, grid, seq.densities());
    write_json({{"generator", generator},
                {"k_star", no_change ? nlohmann::json(nullptr) : nlohmann::json(sim_kstar)},
                {"contaminated_indices", indices},
                {"seed", sim_seed}},
               truth_path, out);
    return kRejected;
  };

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Turn a raw timestamp,value series into a density CSV");
  std::string ingest_input, ingest_out, ingest_report, time_format = "epoch", bandwidth = "auto";
  IngestionConfig icfg;
  std::optional<double> support_lower, support_upper;
  std::uint64_t ingest_seed_unused = 0;
  ingest_cmd->add_option("input", ingest_input, "Raw series CSV (header timestamp,value)")->required();
  ingest_cmd->add_option("--time-format", time_format, "epoch or iso8601")
      ->capture_default_str()
      ->check(CLI::IsMember({"epoch", "iso8601"}));
  ingest_cmd->add_option("--window", icfg.window, "Segment length in seconds")->capture_default_str();
  ingest_cmd->add_option("--min-count", icfg.min_count, "Minimum samples per segment")->capture_default_str();
  ingest_cmd->add_option("--whisker", icfg.whisker, "Scalar boxplot whisker")->capture_default_str();
  ingest_cmd->add_option("--margin", icfg.margin, "Support margin as a fraction of the range")->capture_default_str();
  ingest_cmd->add_option("--support-lower", support_lower, "Externally estimated support, lower end; default: min - margin*range");
  ingest_cmd->add_option("--support-upper", support_upper, "Externally estimated support, upper end; default: max + margin*range");
  ingest_cmd->add_option("--bandwidth", bandwidth, "KDE bandwidth on [0,1] or 'auto' (Silverman)")
      ->capture_default_str();
  ingest_cmd->add_option("--grid-nodes", icfg.grid_nodes, "Grid nodes on [0,1]")->capture_default_str();
  ingest_cmd->add_option("--out", ingest_out, "Density CSV output (required)")->required();
  ingest_cmd->add_option("--report", ingest_report, "Ingestion report JSON ('-' for stdout); default: not written")->capture_default_str();
  add_seed_threads(*ingest_cmd, ingest_seed_unused, icfg.threads);
  ingest_cmd->get_option("--seed")->description("Accepted for uniformity; ingestion draws no random numbers");
  add_config(ingest_cmd);
  actions[ingest_cmd] = [&]() -> int {
    if (support_lower.has_value() != support_upper.has_value()) {
      throw UsageError("--support-lower and --support-upper must be given together");
    }
    if (support_lower) icfg.support = SupportEstimate(*support_lower, *support_upper);
    if (bandwidth != "auto") {
      try {
        icfg.bandwidth = std::stod(bandwidth);
      } catch (const std::exception&) {
        throw UsageError("--bandwidth must be 'auto' or a number");
      }
    }
    RawSeries series;
    try {
      series = read_raw_series_file(ingest_input, time_format == "epoch" ? TimeFormat::epoch : TimeFormat::iso8601);
    } catch (const StructuralError& e) {
      throw UsageError(ingest_input + ": " + e.what());
    }
    const IngestionOutput result = build_sequence(series, icfg);
    write_density_csv_file(ingest_out, Grid(icfg.grid_nodes), result.densities);
    if (!ingest_report.empty()) write_json(to_json(result.report), ingest_report, out);
    return kRejected;
  };

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Repeated seeded detection experiments");
  ExperimentConfig ecfg;
  std::string exp_generator = "sim1", exp_out = "-", records_csv, boxplot_csv;
  DetectFlags exp_flags;
  exp_cmd->add_option("--generator", exp_generator, "sim1, model1, model2 or model3")
      ->capture_default_str()
      ->check(CLI::IsMember({"sim1", "model1", "model2", "model3"}));
  exp_cmd->add_option("--n", ecfg.n, "Sequence length")->capture_default_str();
  exp_cmd->add_option("--kstar", ecfg.k_star, "True change-point")->capture_default_str();
  exp_cmd->add_option("--replicates", ecfg.replicates, "Number of replicates")->capture_default_str();
  exp_cmd->add_option("--contaminate", ecfg.contamination_count, "Outlying densities per replicate")
      ->capture_default_str();
  exp_cmd->add_flag("--clean", ecfg.clean, "Clean outliers before detection");
  exp_cmd->add_flag("--compare-l2", ecfg.compare_l2, "Also run the l2-raw detector");
  exp_cmd->add_flag("--no-change", ecfg.no_change, "Generate pre-change data only");
  exp_cmd->add_option("--detector", ecfg.detector, "Outlier detector for --clean")
      ->capture_default_str()
      ->check(CLI::IsMember({"clr-median-distance", "none"}));
  exp_cmd->add_option("--detector-whisker", ecfg.detector_whisker, "Upper-fence whisker of the detector")
      ->capture_default_str();
  exp_cmd->add_option("--grid-nodes", ecfg.grid_nodes, "Grid nodes on [0,1]")->capture_default_str();
  exp_cmd->add_option("--out", exp_out, "ExperimentReport JSON ('-' for stdout)")->capture_default_str();
  exp_cmd->add_option("--records-csv", records_csv, "Per-replicate CSV; default: not written");
  exp_cmd->add_option("--boxplot-csv", boxplot_csv, "Boxplot data CSV; default: not written");
  add_detect_flags(*exp_cmd, exp_flags);
  add_seed_threads(*exp_cmd, exp_flags.seed, exp_flags.threads);
  add_config(exp_cmd);
  actions[exp_cmd] = [&]() -> int {
    ecfg.generator = parse_generator(exp_generator);
    ecfg.detect = exp_flags.options();
    ecfg.seed = exp_flags.seed;
    ecfg.threads = exp_flags.threads;
    const ExperimentReport report = run_experiment(ecfg);
    write_json(to_json(report), exp_out, out);
    if (!records_csv.empty()) write_file(records_csv, [&](std::ostream& f) { write_records_csv(f, report); });
    if (!boxplot_csv.empty()) write_file(boxplot_csv, [&](std::ostream& f) { write_boxplot_csv(f, report); });
    return kRejected;
  };

  // clean
  auto* clean_cmd = app.add_subcommand("clean", "Remove outlying densities from a density CSV");
  std::string clean_input, clean_out, clean_report = "-";
  bool clean_zero_avoid = false;
  CleaningFlags clean_flags;
  clean_cmd->add_option("input", clean_input, "Density CSV")->required();
  clean_cmd->add_option("--out", clean_out, "Cleaned density CSV (required)")->required();
  clean_cmd->add_option("--report", clean_report, "CleaningReport JSON ('-' for stdout)")->capture_default_str();
  clean_cmd->add_flag("--zero-avoid", clean_zero_avoid, "Apply 0.9 f + 0.1 to every row first");
  add_cleaning_flags(*clean_cmd, clean_flags);
  // Cleaning is single-threaded; the flag is accepted so every subcommand takes it.
  unsigned clean_threads = 0;
  clean_cmd->add_option("--threads", clean_threads, "Worker threads (no effect here)")
      ->capture_default_str()
      ->envname("BAYES_CPD_THREADS");
  add_config(clean_cmd);
  actions[clean_cmd] = [&]() -> int {
    const DistributionalSequence seq = load_sequence(clean_input, clean_zero_avoid);
    const auto primary = make_detector(clean_flags.detector, {.whisker = clean_flags.detector_whisker});
    const auto secondary = make_detector(clean_flags.secondary, {.whisker = clean_flags.detector_whisker});
    const CleanedSequence cleaned =
        clean_sequence(seq, *primary, clean_flags.secondary == "none" ? nullptr : secondary.get());
    write_density_csv_file(clean_out, seq.grid(), cleaned.densities);
    write_json(to_json(cleaned.report), clean_report, out);
    return kRejected;
  };

  for (auto& entry : actions) {
    for (CLI::Option* opt : entry.first->get_options()) {
      if (opt->get_expected_max() == 0 && opt->get_name() != "--help") {
        opt->description(opt->get_description() + "; default: off");
      }
    }
  }

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kRejected;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kRejected;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  for (auto& [sub, action] : actions) {
    if (!sub->parsed()) continue;
    try {
      if (!config_paths[sub].empty()) apply_config(*sub, config_paths[sub]);
      return action();
    } catch (const UsageError& e) {
      err << "error: " << e.what() << '\n';
      return kUsage;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << '\n';
      return kUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kDegenerate;
    }
  }
  return kUsage;
}

}  // namespace bcpd::cli
