#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <coordscan/coordscan.hpp>

namespace cs = coordscan;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kStage = 4 };

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;

  std::vector<std::string> inputs;
  std::string keywords;
  bool canonical = false;
  std::string id_field, channel_field, time_field, text_field, platform_field, platform;
  std::string bucket, analytics_bucket, idf_scope, sweep, cluster_space, from, to;
  std::optional<double> tau, burst_z;
  std::optional<std::size_t> replicates, ngram_min, ngram_max, min_df, k, baseline;
  std::optional<int> max_lag;

  std::string report, truth;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cs::ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw cs::ConfigError(path + ": " + e.what());
  }
}

cs::RunConfig build_config(const Flags& f) {
  cs::RunConfig cfg;
  if (!f.config.empty()) cfg = cs::run_config_from_json(read_json(f.config));
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.inputs.empty()) cfg.inputs = f.inputs;
  if (!f.keywords.empty()) cfg.keywords_file = f.keywords;
  if (f.canonical) cfg.mapping = cs::canonical_mapping();
  if (!f.id_field.empty()) cfg.mapping.id = f.id_field;
  if (!f.channel_field.empty()) cfg.mapping.channel = f.channel_field;
  if (!f.time_field.empty()) cfg.mapping.timestamp = f.time_field;
  if (!f.text_field.empty()) cfg.mapping.text = f.text_field;
  if (!f.platform_field.empty()) cfg.mapping.platform = f.platform_field;
  if (!f.platform.empty()) cfg.mapping.default_platform = cs::parse_platform(f.platform);
  if (!f.bucket.empty()) cfg.resolution = cs::parse_resolution(f.bucket);
  if (!f.analytics_bucket.empty()) cfg.analytics_resolution = cs::parse_resolution(f.analytics_bucket);
  if (!f.idf_scope.empty()) cfg.idf_scope = cs::parse_idf_scope(f.idf_scope);
  if (!f.sweep.empty()) cfg.sweep = f.sweep;
  if (!f.cluster_space.empty()) cfg.cluster_space = cs::parse_cluster_space(f.cluster_space);
  if (!f.from.empty()) cfg.window_from = cs::parse_window_bound(f.from, false);
  if (!f.to.empty()) cfg.window_to = cs::parse_window_bound(f.to, true);
  if (f.tau) cfg.tau = *f.tau;
  if (f.burst_z) cfg.burst.z = *f.burst_z;
  if (f.replicates) cfg.replicates = *f.replicates;
  if (f.ngram_min) cfg.ngram.n_min = *f.ngram_min;
  if (f.ngram_max) cfg.ngram.n_max = *f.ngram_max;
  if (f.min_df) cfg.ngram.min_df = *f.min_df;
  if (f.k) cfg.k = *f.k;
  if (f.baseline) cfg.burst.baseline = *f.baseline;
  if (f.max_lag) cfg.max_lag = *f.max_lag;
  return cfg;
}

// A single-stage subcommand ingests first when inputs are given, otherwise
// it reuses corpus.jsonl already in the output directory.
int run_stages(cs::RunConfig cfg, std::vector<std::string> stages) {
  if (!cfg.inputs.empty() && stages.front() != "ingest") stages.insert(stages.begin(), "ingest");
  cfg.stages = std::move(stages);
  const auto manifest = cs::run_pipeline(cfg);
  std::cout << cs::io::read_file(fs::path(cfg.out_dir) / "summary.txt");
  return kOk;
}

int synth_generate(const Flags& f) {
  cs::synth::GeneratorConfig g;
  if (!f.config.empty()) {
    g = cs::synth::config_from_json(read_json(f.config));
  } else {
    g.span = {cs::epoch_from_civil(2026, 1, 1), cs::epoch_from_civil(2026, 1, 1) + 60 * cs::kSecondsPerDay};
  }
  if (f.seed) g.seed = *f.seed;
  if (!f.bucket.empty()) g.resolution = cs::parse_resolution(f.bucket);
  g.validate();
  if (f.out.empty()) throw cs::ConfigError("--out is required");
  const fs::path dir(f.out);
  cs::prepare_output_dir(dir);
  const auto gen = cs::synth::generate(g);
  cs::io::write_file(dir / "corpus.jsonl", cs::to_jsonl(gen.corpus));
  cs::io::write_file(dir / "truth.json", cs::synth::truth_json(gen.truth).dump(2) + "\n");
  std::cout << "generated " << gen.corpus.size() << " messages, " << gen.truth.planted_pairs.size()
            << " planted pairs\n";
  return kOk;
}

int synth_evaluate(const Flags& f) {
  if (f.report.empty() || f.truth.empty()) throw cs::ConfigError("--report and --truth are required");
  cs::DetectionReport report;
  cs::synth::GroundTruth truth;
  try {
    report = cs::report_from_json(read_json(f.report));
  } catch (const cs::ConfigError& e) {
    throw cs::DataError(e.what());
  }
  truth = cs::synth::truth_from_json(read_json(f.truth));
  const auto e = cs::synth::evaluate(report, truth);
  const auto j = cs::synth::evaluation_json(e);
  if (!f.out.empty()) {
    cs::prepare_output_dir(f.out);
    cs::io::write_file(fs::path(f.out) / "evaluation.json", j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

void add_run_options(CLI::App& app, Flags& f) {
  app.add_option("-i,--input", f.inputs, "JSONL input file (repeatable)");
  app.add_option("--keywords", f.keywords, "keyword file, one per line");
  app.add_flag("--canonical", f.canonical, "inputs use the toolkit's own corpus.jsonl field names");
  app.add_option("--id-field", f.id_field);
  app.add_option("--channel-field", f.channel_field);
  app.add_option("--time-field", f.time_field);
  app.add_option("--text-field", f.text_field);
  app.add_option("--platform-field", f.platform_field);
  app.add_option("--platform", f.platform, "default platform: channel-broadcast|forum-submission");
  app.add_option("--bucket", f.bucket, "detection bucket: h|D");
  app.add_option("--analytics-bucket", f.analytics_bucket, "volume/burst/lead-lag bucket: h|D");
  app.add_option("--tau", f.tau, "similarity threshold in [0,1]");
  app.add_option("--sweep", f.sweep, "threshold range lo:hi:step");
  app.add_option("--replicates", f.replicates, "negative-control shuffles");
  app.add_option("--ngram-min", f.ngram_min);
  app.add_option("--ngram-max", f.ngram_max);
  app.add_option("--min-df", f.min_df);
  app.add_option("--idf-scope", f.idf_scope, "bucket|global");
  app.add_option("--from", f.from, "narrative window start (ISO-8601 or epoch)");
  app.add_option("--to", f.to, "narrative window end, inclusive");
  app.add_option("--k", f.k, "narrative clusters");
  app.add_option("--cluster-space", f.cluster_space, "tfidf|svd:<d>");
  app.add_option("--burst-z", f.burst_z);
  app.add_option("--baseline", f.baseline, "burst baseline length in buckets");
  app.add_option("--max-lag", f.max_lag, "lead-lag search range in buckets");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coordscan: cross-channel coordination and attention analytics"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--seed", f.seed, "master seed");
  add_run_options(app, f);
  app.set_version_flag("--version", std::string(cs::kVersion));

  std::function<int()> action;
  auto stage_cmd = [&](const char* name, const char* help, std::vector<std::string> stages) {
    app.add_subcommand(name, help)->callback([&f, &action, stages] {
      action = [&f, stages] { return run_stages(build_config(f), stages); };
    });
  };
  stage_cmd("ingest", "parse and normalize JSONL input into corpus.jsonl", {"ingest"});
  stage_cmd("stats", "corpus summary statistics", {"stats"});
  stage_cmd("detect", "near-duplicate cross-channel pairs at one threshold", {"detect"});
  stage_cmd("sweep", "pair counts over a threshold range", {"sweep"});
  stage_cmd("control", "timestamp-shuffle negative control", {"control"});
  stage_cmd("feasibility", "comparable-bucket census", {"feasibility"});
  stage_cmd("graph", "channel co-occurrence graph of detected pairs", {"graph"});
  stage_cmd("narrative", "clustering, 2-D projection and entropy for a window", {"narrative"});

  app.add_subcommand("filter", "keep messages matching a keyword list")->callback([&] {
    action = [&] {
      auto cfg = build_config(f);
      if (cfg.keywords_file.empty()) throw cs::ConfigError("filter needs --keywords");
      return run_stages(cfg, {"ingest"});
    };
  });

  auto* analytics = app.add_subcommand("analytics", "volume, CDF, inter-arrival, bursts, lead-lag, ACR");
  std::vector<std::string> parts;
  analytics->callback([&] {
    action = [&] {
      auto cfg = build_config(f);
      cfg.analytics_parts = parts;
      return run_stages(cfg, {"analytics"});
    };
  });
  for (const auto& part : cs::analytics_parts()) {
    analytics->add_subcommand(part, part + " only")->callback([&parts, part] { parts.push_back(part); });
  }

  app.add_subcommand("run", "full pipeline")->callback([&] {
    action = [&] {
      auto cfg = build_config(f);
      const auto manifest = cs::run_pipeline(cfg);
      std::cout << cs::io::read_file(fs::path(cfg.out_dir) / "summary.txt");
      return static_cast<int>(kOk);
    };
  });

  auto* synth = app.add_subcommand("synth", "synthetic corpora with planted campaigns");
  synth->require_subcommand(1);
  synth->add_subcommand("generate", "write corpus.jsonl and truth.json")->callback([&] {
    action = [&] { return synth_generate(f); };
  });
  auto* eval = synth->add_subcommand("evaluate", "precision and recall of a detection report");
  eval->add_option("--report", f.report, "report.json from detect")->required();
  eval->add_option("--truth", f.truth, "truth.json from synth generate")->required();
  eval->callback([&] { action = [&] { return synth_evaluate(f); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  try {
    return action ? action() : kOk;
  } catch (const cs::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStage;
  } catch (const cs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const cs::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStage;
  }
}
