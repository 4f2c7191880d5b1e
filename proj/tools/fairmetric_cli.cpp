// Batch entry point: ingest, experiment, report-survey, triplets.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fairmetric/fairmetric.hpp"

namespace {

using namespace fairmetric;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir;
  std::string label_mode;
  std::string triplet_variant;
};

KeyValueConfig load_with_overrides(const CommonFlags& f) {
  auto c = KeyValueConfig::load(f.config);
  if (f.seed) c.set("experiment.seed", std::to_string(*f.seed));
  if (f.threads) c.set("experiment.threads", std::to_string(*f.threads));
  if (!f.label_mode.empty()) c.set("data.label_mode", f.label_mode);
  if (!f.triplet_variant.empty()) c.set("experiment.triplet_variant", f.triplet_variant);
  return c;
}

int run(int argc, char** argv) {
  CLI::App app{"Mahalanobis metric learning from absolute ratings"};
  app.require_subcommand(1);

  // ingest
  std::string defendants, survey, schema, ingest_out = "ingested";
  bool include_race = false;
  auto* ingest = app.add_subcommand("ingest", "validate inputs and write canonical CSV copies");
  ingest->add_option("--defendants", defendants, "defendant CSV (id, schema columns, compas_decile)")->required();
  ingest->add_option("--survey", survey, "survey CSV");
  ingest->add_option("--schema", schema, "schema manifest (default: built-in seven-attribute schema)");
  ingest->add_option("--out-dir", ingest_out, "output directory");
  ingest->add_flag("--include-sensitive", include_race, "also encode sensitive columns (race)");

  // experiment
  CommonFlags flags;
  auto* exp = app.add_subcommand("experiment", "run the learner comparison or the sigma sweep");
  exp->add_option("--config", flags.config, "key-value experiment config")->required();
  exp->add_option("--seed", flags.seed, "root RNG seed");
  exp->add_option("--threads", flags.threads, "worker threads for repeats");
  exp->add_option("--out-dir", flags.out_dir, "output directory (overrides output.dir)");
  exp->add_option("--label-mode", flags.label_mode, "per_respondent:<id>|pooled_median|pooled_rounded_mean");
  exp->add_option("--triplet-variant", flags.triplet_variant, "literal|symmetric")
      ->check(CLI::IsMember({"literal", "symmetric"}));

  // report-survey
  std::string report_survey_path, report_out = "survey_report";
  int threshold = 4;
  auto* report = app.add_subcommand("report-survey", "bail-rate and confidence-accuracy tables");
  report->add_option("--survey", report_survey_path, "survey CSV")->required();
  report->add_option("--confidence-threshold", threshold, "high confidence means Q3 >= threshold")
      ->check(CLI::Range(1, 5));
  report->add_option("--out-dir", report_out, "output directory");

  // triplets
  CommonFlags tflags;
  double sigma = 0.0;
  std::string triplet_out = "triplets.csv";
  auto* trip = app.add_subcommand("triplets", "dump the triplet set of an experiment dataset as CSV (a,b,c)");
  trip->add_option("--config", tflags.config, "key-value experiment config")->required();
  trip->add_option("--sigma", sigma, "rating-gap threshold")->check(CLI::NonNegativeNumber);
  trip->add_option("--label-mode", tflags.label_mode, "per_respondent:<id>|pooled_median|pooled_rounded_mean");
  trip->add_option("--triplet-variant", tflags.triplet_variant, "literal|symmetric")
      ->check(CLI::IsMember({"literal", "symmetric"}));
  trip->add_option("--out", triplet_out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      const auto s = commands::ingest(defendants, survey, schema, ingest_out, include_race);
      std::cout << "defendants: " << s.defendants << " (encoded d = " << s.encoded_dim << ")\n";
      if (!survey.empty()) {
        std::cout << "survey records: " << s.survey_records << " from " << s.respondents << " respondents over "
                  << s.surveyed_defendants << " defendants\n";
      }
      std::cout << "wrote " << ingest_out << '\n';
      return 0;
    }
    if (*exp) {
      auto cfg = load_with_overrides(flags);
      auto spec = run_spec_from(cfg);
      if (!flags.out_dir.empty()) spec.out_dir = flags.out_dir;
      const auto outcome = commands::experiment(spec);
      for (const auto& m : outcome.messages) std::cerr << m << '\n';
      std::cout << outcome.cells_ok << "/" << outcome.cells_total << " report cells computed; wrote " << spec.out_dir
                << '\n';
      return outcome.cells_ok > 0 ? 0 : static_cast<int>(ErrorKind::numerical);
    }
    if (*report) {
      commands::report_survey(report_survey_path, threshold, report_out, &std::cout);
      return 0;
    }
    if (*trip) {
      auto cfg = load_with_overrides(tflags);
      const auto spec = run_spec_from(cfg);
      const auto data = commands::load_experiment_dataset(spec);
      const auto n = commands::dump_triplets(data, sigma, spec.experiment.triplet_variant, triplet_out);
      std::cout << n << " triplets written to " << triplet_out << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::config);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
