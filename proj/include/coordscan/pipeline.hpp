#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "analytics.hpp"
#include "coordination.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "io.hpp"
#include "narrative.hpp"
#include "simindex.hpp"

namespace coordscan {

inline constexpr std::string_view kVersion = "0.1.0";

// Stages in dependency order.
inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> kStages{"ingest",      "stats", "detect",    "sweep",    "control",
                                                "feasibility", "graph", "analytics", "narrative"};
  return kStages;
}

inline const std::vector<std::string>& analytics_parts() {
  static const std::vector<std::string> kParts{"volume", "cdf", "interarrival", "bursts", "leadlag", "acr"};
  return kParts;
}

// Raised when a pipeline stage fails after validation (CLI exit code 4).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunConfig {
  std::vector<std::string> inputs;
  FieldMapping mapping;
  std::string keywords_file;
  Resolution resolution = Resolution::kHourly;
  Resolution analytics_resolution = Resolution::kDaily;
  double tau = 0.85;
  std::string sweep = "0.5:0.99:0.01";
  NGramConfig ngram;
  IdfScope idf_scope = IdfScope::kBucket;
  std::uint64_t seed = 0;
  std::size_t replicates = 20;
  std::size_t k = 5;
  std::optional<EpochSeconds> window_from;
  std::optional<EpochSeconds> window_to;
  ClusterSpace cluster_space;
  BurstConfig burst;
  int max_lag = 7;
  std::string out_dir;
  std::vector<std::string> stages;           // empty: every stage that is configured
  std::vector<std::string> analytics_parts;  // empty: all parts

  bool has_window() const { return window_from.has_value() && window_to.has_value(); }

  // Explicit stages in dependency order, or the default set.
  std::vector<std::string> resolved_stages() const {
    std::vector<std::string> out;
    for (const auto& s : stage_order()) {
      const bool wanted = stages.empty() ? (s != "narrative" || has_window())
                                         : std::find(stages.begin(), stages.end(), s) != stages.end();
      if (wanted) out.push_back(s);
    }
    return out;
  }

  bool wants_part(std::string_view part) const {
    return analytics_parts.empty() ||
           std::find(analytics_parts.begin(), analytics_parts.end(), part) != analytics_parts.end();
  }

  void validate() const {
    if (out_dir.empty()) throw ConfigError("an output directory is required");
    for (const auto& s : stages) {
      if (std::find(stage_order().begin(), stage_order().end(), s) == stage_order().end()) {
        throw ConfigError("unknown stage '" + s + "'");
      }
    }
    for (const auto& p : analytics_parts) {
      if (std::find(coordscan::analytics_parts().begin(), coordscan::analytics_parts().end(), p) ==
          coordscan::analytics_parts().end()) {
        throw ConfigError("unknown analytics part '" + p + "'");
      }
    }
    const auto st = resolved_stages();
    const bool ingest = std::find(st.begin(), st.end(), "ingest") != st.end();
    if (ingest && inputs.empty()) throw ConfigError("ingest needs at least one input file");
    for (const auto& in : inputs) {
      if (!std::filesystem::exists(in)) throw ConfigError("input does not exist: " + in);
    }
    if (!keywords_file.empty() && !std::filesystem::exists(keywords_file)) {
      throw ConfigError("keyword file does not exist: " + keywords_file);
    }
    if (!ingest && !std::filesystem::exists(std::filesystem::path(out_dir) / "corpus.jsonl")) {
      throw ConfigError("no ingest stage requested and no cached corpus.jsonl in " + out_dir);
    }
    check_tau(tau);
    parse_sweep(sweep);
    ngram.validate();
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (k < 2) throw ConfigError("k must be >= 2");
    if (max_lag < 0) throw ConfigError("max lag must be >= 0");
    if (std::find(st.begin(), st.end(), "narrative") != st.end() && !has_window()) {
      throw ConfigError("narrative stage needs a window (--from/--to)");
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["inputs"] = inputs;
    j["field_mapping"] = {{"id", mapping.id},
                          {"channel", mapping.channel},
                          {"timestamp", mapping.timestamp},
                          {"text", mapping.text},
                          {"platform", mapping.platform},
                          {"default_platform", to_string(mapping.default_platform)}};
    j["keywords_file"] = keywords_file;
    j["resolution"] = to_string(resolution);
    j["analytics_resolution"] = to_string(analytics_resolution);
    j["tau"] = tau;
    j["sweep"] = sweep;
    j["ngram"] = {{"min", ngram.n_min}, {"max", ngram.n_max}, {"min_df", ngram.min_df}};
    j["idf_scope"] = to_string(idf_scope);
    j["seed"] = seed;
    j["replicates"] = replicates;
    j["k"] = k;
    j["window"] = has_window() ? nlohmann::ordered_json{{"from", format_datetime(*window_from)},
                                                        {"to", format_datetime(*window_to)}}
                               : nlohmann::ordered_json(nullptr);
    j["cluster_space"] = to_string(cluster_space);
    j["burst"] = {{"z", burst.z}, {"baseline", burst.baseline}};
    j["max_lag"] = max_lag;
    j["out"] = out_dir;
    j["stages"] = stages;
    j["analytics_parts"] = analytics_parts;
    return j;
  }
};

// Window bounds: epoch seconds or ISO-8601; a date-only upper bound covers
// that whole day.
inline EpochSeconds parse_window_bound(std::string_view s, bool upper) {
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::stoll(std::string(s));
  }
  const auto t = parse_iso8601(s);
  if (!t) throw ConfigError("cannot parse time '" + std::string(s) + "'");
  return (upper && s.size() == 10) ? *t + kSecondsPerDay - 1 : *t;
}

// Reads a RunConfig JSON document. Missing keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig cfg = {}) {
  try {
    if (j.contains("inputs")) cfg.inputs = j.at("inputs").get<std::vector<std::string>>();
    if (j.contains("field_mapping")) {
      const auto& f = j.at("field_mapping");
      cfg.mapping.id = f.value("id", cfg.mapping.id);
      cfg.mapping.channel = f.value("channel", cfg.mapping.channel);
      cfg.mapping.timestamp = f.value("timestamp", cfg.mapping.timestamp);
      cfg.mapping.text = f.value("text", cfg.mapping.text);
      cfg.mapping.platform = f.value("platform", cfg.mapping.platform);
      if (f.contains("default_platform")) {
        cfg.mapping.default_platform = parse_platform(f.at("default_platform").get<std::string>());
      }
    }
    cfg.keywords_file = j.value("keywords_file", cfg.keywords_file);
    if (j.contains("resolution")) cfg.resolution = parse_resolution(j.at("resolution").get<std::string>());
    if (j.contains("analytics_resolution")) {
      cfg.analytics_resolution = parse_resolution(j.at("analytics_resolution").get<std::string>());
    }
    cfg.tau = j.value("tau", cfg.tau);
    cfg.sweep = j.value("sweep", cfg.sweep);
    if (j.contains("ngram")) {
      const auto& n = j.at("ngram");
      cfg.ngram.n_min = n.value("min", cfg.ngram.n_min);
      cfg.ngram.n_max = n.value("max", cfg.ngram.n_max);
      cfg.ngram.min_df = n.value("min_df", cfg.ngram.min_df);
    }
    if (j.contains("idf_scope")) cfg.idf_scope = parse_idf_scope(j.at("idf_scope").get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    cfg.replicates = j.value("replicates", cfg.replicates);
    cfg.k = j.value("k", cfg.k);
    if (j.contains("window") && !j.at("window").is_null()) {
      const auto& w = j.at("window");
      auto bound = [](const nlohmann::json& v, bool upper) {
        return v.is_number_integer() ? v.get<EpochSeconds>() : parse_window_bound(v.get<std::string>(), upper);
      };
      cfg.window_from = bound(w.at("from"), false);
      cfg.window_to = bound(w.at("to"), true);
    }
    if (j.contains("cluster_space")) cfg.cluster_space = parse_cluster_space(j.at("cluster_space").get<std::string>());
    if (j.contains("burst")) {
      cfg.burst.z = j.at("burst").value("z", cfg.burst.z);
      cfg.burst.baseline = j.at("burst").value("baseline", cfg.burst.baseline);
    }
    cfg.max_lag = j.value("max_lag", cfg.max_lag);
    cfg.out_dir = j.value("out", cfg.out_dir);
    if (j.contains("stages")) cfg.stages = j.at("stages").get<std::vector<std::string>>();
    if (j.contains("analytics_parts")) cfg.analytics_parts = j.at("analytics_parts").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return cfg;
}

struct ArtifactRecord {
  std::string file;
  std::string sha256;
  bool incomplete = false;
};

struct StageRecord {
  std::string name;
  std::string status = "ok";  // ok | failed
  std::string error;
  std::string input_digest;
  double wall_ms = 0;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::vector<ArtifactRecord> outputs;
};

struct RunManifest {
  nlohmann::ordered_json config;
  std::string version{kVersion};
  std::vector<StageRecord> stages;
  std::vector<ArtifactRecord> artifacts;  // every file in the output directory
  std::vector<std::string> notes;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["toolkit"] = "coordscan";
    j["version"] = version;
    j["config"] = config;
    auto st = nlohmann::ordered_json::array();
    for (const auto& s : stages) {
      auto outs = nlohmann::ordered_json::array();
      for (const auto& a : s.outputs) {
        nlohmann::ordered_json o{{"file", a.file}, {"sha256", a.sha256}};
        if (a.incomplete) o["incomplete"] = true;
        outs.push_back(o);
      }
      nlohmann::ordered_json rec{{"name", s.name}, {"status", s.status}, {"input_digest", s.input_digest},
                                 {"wall_ms", s.wall_ms}, {"metrics", s.metrics},
                                 {"outputs", outs}};
      if (!s.error.empty()) rec["error"] = s.error;
      st.push_back(rec);
    }
    j["stages"] = st;
    auto arts = nlohmann::ordered_json::array();
    for (const auto& a : artifacts) {
      nlohmann::ordered_json o{{"file", a.file}, {"sha256", a.sha256}};
      if (a.incomplete) o["incomplete"] = true;
      arts.push_back(o);
    }
    j["artifacts"] = arts;
    j["notes"] = notes;
    return j;
  }
};

inline constexpr std::string_view kManifestFile = "manifest.json";

// Creates the output directory and proves it is writable before anything
// else is written.
inline void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("cannot create output directory " + dir.string());
  }
  const auto probe = dir / ".coordscan-write-probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "probe")) throw ConfigError("output directory is not writable: " + dir.string());
  }
  std::filesystem::remove(probe, ec);
}

// Writes artifacts and records their digests.
class ReportWriter {
 public:
  explicit ReportWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content, StageRecord* stage) {
    io::write_file(dir_ / name, content);
    if (stage) stage->outputs.push_back({name, io::sha256_hex(content), false});
  }

  void write_json(const std::string& name, const nlohmann::ordered_json& j, StageRecord* stage) {
    write(name, j.dump(2) + "\n", stage);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

namespace detail {

// State shared by the stages of one run.
struct RunState {
  const RunConfig& cfg;
  ReportWriter& out;
  Corpus corpus;
  std::string corpus_digest;
  std::optional<GramIndex> index;
  std::optional<PairScores> scores;        // cfg.resolution
  std::optional<PairScores> daily_scores;  // ACR
  std::vector<std::string> summary;
  std::vector<std::string> notes;

  const GramIndex& gram_index() {
    if (!index) index = build_gram_index(corpus, cfg.ngram);
    return *index;
  }

  const PairScores& detection_scores() {
    if (!scores) scores = score_pairs(corpus, {cfg.resolution, cfg.ngram, cfg.idf_scope}, gram_index());
    return *scores;
  }

  const PairScores& daily() {
    if (cfg.resolution == Resolution::kDaily) return detection_scores();
    if (!daily_scores) {
      daily_scores = score_pairs(corpus, {Resolution::kDaily, cfg.ngram, cfg.idf_scope}, gram_index());
    }
    return *daily_scores;
  }
};

inline std::string fmt(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(4);
  ss << v;
  return ss.str();
}

inline void stage_ingest(RunState& st, StageRecord& rec) {
  std::vector<Message> records;
  std::vector<ParseIssue> errors;
  std::vector<std::string> warnings;
  std::size_t lines = 0;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& path : st.cfg.inputs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<ParseIssue> file_errors;
    std::size_t file_lines = 0;
    auto part = parse_jsonl_records(in, st.cfg.mapping, file_errors, file_lines);
    nlohmann::ordered_json errs = nlohmann::ordered_json::array();
    for (const auto& e : file_errors) {
      errs.push_back({{"line", e.line},
                      {"kind", e.kind == ParseIssue::Kind::kJson ? "json" : "schema"},
                      {"message", e.message}});
    }
    files.push_back({{"path", path}, {"nonempty_lines", file_lines}, {"records", part.size()}, {"errors", errs}});
    lines += file_lines;
    errors.insert(errors.end(), file_errors.begin(), file_errors.end());
    records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::size_t replaced = 0;
  Corpus corpus = merge_records(std::move(records), warnings, replaced);
  const std::size_t parsed = corpus.size();
  std::size_t kept = parsed;
  if (!st.cfg.keywords_file.empty()) {
    std::ifstream kw(st.cfg.keywords_file);
    const auto keywords = load_keywords(kw);
    corpus = keyword_filter(corpus, keywords);
    kept = corpus.size();
  }
  st.corpus = std::move(corpus);
  nlohmann::ordered_json j;
  j["files"] = files;
  j["nonempty_lines"] = lines;
  j["parse_errors"] = errors.size();
  j["duplicates_replaced"] = replaced;
  j["messages_parsed"] = parsed;
  j["keyword_filter"] = !st.cfg.keywords_file.empty();
  j["messages_kept"] = kept;
  j["warnings"] = warnings;
  rec.metrics = {{"messages", kept}, {"parse_errors", errors.size()}};
  st.out.write("corpus.jsonl", to_jsonl(st.corpus), &rec);
  st.out.write_json("ingest.json", j, &rec);
  st.summary.push_back("Ingest: " + std::to_string(lines) + " lines, " + std::to_string(errors.size()) +
                       " rejected, " + std::to_string(kept) + " messages kept");
}

inline void stage_stats(RunState& st, StageRecord& rec) {
  const auto s = corpus_stats(st.corpus);
  rec.metrics = {{"messages", s.total}, {"channels", s.per_channel_counts.size()}};
  st.out.write("stats.csv", stats_csv(s), &rec);
  st.out.write_json("stats.json", stats_json(s), &rec);
  st.out.write("cdf.csv", cdf_csv(channel_cdf(s)), &rec);
  st.summary.push_back("Corpus: " + std::to_string(s.total) + " messages, " +
                       std::to_string(s.per_channel_counts.size()) + " channels, " + format_date(s.date_min) +
                       " to " + format_date(s.date_max) + ", median " + fmt(s.median_per_channel) +
                       " / mean " + fmt(s.mean_per_channel) + " messages per channel");
}

inline void stage_detect(RunState& st, StageRecord& rec) {
  const auto r = report_at(st.detection_scores(), st.cfg.tau);
  rec.metrics = {{"tau", r.tau},
                 {"comparable_buckets", r.comparable_buckets},
                 {"evaluated_pairs", r.evaluated_pairs},
                 {"pairs", r.pairs.size()}};
  st.out.write_json("report.json", report_json(r), &rec);
  st.out.write("pairs.csv", pairs_csv(r.pairs), &rec);
  st.out.write("histogram.csv", histogram_csv(r.histogram), &rec);
  st.summary.push_back("Detection (" + std::string(to_string(r.resolution)) + ", tau=" + fmt(r.tau) +
                       "): " + std::to_string(r.total_buckets) + " buckets, " +
                       std::to_string(r.comparable_buckets) + " comparable, " + std::to_string(r.pair_buckets) +
                       " with pairs, " + std::to_string(r.pairs.size()) + " pairs of " +
                       std::to_string(r.evaluated_pairs) + " evaluated");
}

inline void stage_sweep(RunState& st, StageRecord& rec) {
  const auto taus = parse_sweep(st.cfg.sweep);
  const auto curve = threshold_sweep(st.detection_scores(), taus);
  rec.metrics = {{"thresholds", curve.taus.size()}, {"max_pairs", curve.pair_counts.front()}};
  st.out.write("pairs_vs_threshold.csv", sweep_csv(curve), &rec);
  st.out.write_json("sweep.json", sweep_json(curve), &rec);
  st.summary.push_back("Sweep: " + std::to_string(curve.taus.size()) + " thresholds, pairs from " +
                       std::to_string(curve.pair_counts.front()) + " (tau=" + fmt(curve.taus.front()) + ") to " +
                       std::to_string(curve.pair_counts.back()) + " (tau=" + fmt(curve.taus.back()) + ")");
}

inline void stage_control(RunState& st, StageRecord& rec) {
  const auto taus = parse_sweep(st.cfg.sweep);
  const auto c = negative_control(st.corpus, taus, st.cfg.tau, st.cfg.seed, st.cfg.replicates,
                                  {st.cfg.resolution, st.cfg.ngram, st.cfg.idf_scope}, st.gram_index());
  st.out.write_json("control.json", control_json(c), &rec);
  st.out.write("control.csv", control_csv(c), &rec);
  double mean_pairs = 0;
  for (const auto& r : c.replicate_rows) mean_pairs += static_cast<double>(r.pairs);
  mean_pairs /= static_cast<double>(c.replicate_rows.size());
  rec.metrics = {{"tau", c.reference_tau},
                 {"replicates", c.replicate_rows.size()},
                 {"original_pairs", c.original_row.pairs},
                 {"mean_shuffled_pairs", mean_pairs}};
  st.summary.push_back("Negative control (tau=" + fmt(c.reference_tau) + ", " +
                       std::to_string(c.replicate_rows.size()) + " timestamp shuffles, seed " +
                       std::to_string(c.seed) + "): original " + std::to_string(c.original_row.pairs) +
                       " pairs, shuffled mean " + fmt(mean_pairs) + " pairs");
}

inline void stage_feasibility(RunState& st, StageRecord& rec) {
  const auto f = feasibility(st.corpus, st.cfg.resolution);
  rec.metrics = {{"total_buckets", f.total_buckets},
                 {"comparable_buckets", f.comparable_buckets},
                 {"estimable", f.estimable()}};
  st.out.write_json("feasibility.json", feasibility_json(f), &rec);
  st.out.write("feasibility.csv", feasibility_csv(f), &rec);
  std::string verdict = f.estimable()
                            ? "cross-source coordination is estimable"
                            : "cross-source coordination is not estimable due to structural sparsity "
                              "(no bucket contains content from more than one source)";
  st.summary.push_back("Feasibility (" + std::string(to_string(f.resolution)) + "): " +
                       std::to_string(f.comparable_buckets) + " comparable of " + std::to_string(f.total_buckets) +
                       " buckets; " + verdict);
}

inline void stage_graph(RunState& st, StageRecord& rec) {
  const auto pairs = st.detection_scores().pairs_at(st.cfg.tau);
  const auto g = project_graph(pairs);
  rec.metrics = {{"nodes", g.nodes.size()}, {"edges", g.edges.size()}};
  st.out.write_json("graph.json", graph_json(g), &rec);
  st.out.write("edges.csv", edges_csv(g), &rec);
  st.summary.push_back("Coordination graph (tau=" + fmt(st.cfg.tau) + "): " + std::to_string(g.nodes.size()) +
                       " nodes, " + std::to_string(g.edges.size()) + " edges");
}

inline void stage_analytics(RunState& st, StageRecord& rec) {
  const auto& cfg = st.cfg;
  const auto series = volume_series(st.corpus, cfg.analytics_resolution);
  if (cfg.wants_part("volume")) st.out.write("volume.csv", volume_csv(series), &rec);
  if (cfg.wants_part("cdf")) st.out.write("cdf.csv", cdf_csv(channel_cdf(corpus_stats(st.corpus))), &rec);
  if (cfg.wants_part("interarrival")) {
    const auto ia = interarrival(st.corpus, true);
    st.out.write("interarrival.csv", interarrival_csv(ia), &rec);
    st.notes.insert(st.notes.end(), ia.notices.begin(), ia.notices.end());
  }
  std::vector<BurstWindow> bursts;
  if (cfg.wants_part("bursts") || cfg.wants_part("leadlag")) {
    if (series.points.size() >= cfg.burst.baseline + 1) {
      bursts = detect_bursts(series, cfg.burst);
    } else {
      st.notes.push_back("volume series too short for burst detection");
    }
  }
  if (cfg.wants_part("bursts")) {
    st.out.write("bursts.csv", bursts_csv(bursts), &rec);
    std::string line = "Bursts (z=" + fmt(cfg.burst.z) + ", baseline " + std::to_string(cfg.burst.baseline) +
                       "): " + std::to_string(bursts.size()) + " windows";
    for (const auto& b : bursts) line += "; " + format_bucket(b.start) + ".." + format_bucket(b.end);
    st.summary.push_back(line);
  }
  if (cfg.wants_part("leadlag")) {
    LeadLagReport ll;
    try {
      ll = lead_lag(series, cfg.max_lag, bursts, st.corpus);
    } catch (const DataError& e) {
      st.notes.push_back(std::string("lead-lag skipped: ") + e.what());
    }
    st.notes.insert(st.notes.end(), ll.notes.begin(), ll.notes.end());
    st.out.write("leadlag.csv", leadlag_csv(ll), &rec);
    st.out.write("first_reporters.csv", first_reporter_csv(ll), &rec);
  }
  if (cfg.wants_part("acr")) {
    const auto daily_series =
        cfg.analytics_resolution == Resolution::kDaily ? series : volume_series(st.corpus, Resolution::kDaily);
    const auto acr = acr_series(daily_series, report_at(st.daily(), cfg.tau));
    st.out.write("acr.csv", acr_csv(acr), &rec);
    if (!acr.empty()) {
      const auto hi = std::max_element(acr.begin(), acr.end(),
                                       [](const AcrPoint& a, const AcrPoint& b) { return a.acr < b.acr; });
      std::size_t total_pairs = 0;
      for (const auto& p : acr) total_pairs += p.coord_pairs;
      st.summary.push_back("ACR (tau=" + fmt(cfg.tau) + "): max " + fmt(hi->acr) + " on " + format_date(hi->day) +
                           " (volume " + std::to_string(hi->volume) + ", pairs " +
                           std::to_string(hi->coord_pairs) + "); " + std::to_string(total_pairs) +
                           " coordination pairs over " + std::to_string(acr.size()) + " days");
    }
  }
}

inline void stage_narrative(RunState& st, StageRecord& rec) {
  const auto& cfg = st.cfg;
  NarrativeConfig nc{*cfg.window_from, *cfg.window_to, cfg.k, cfg.seed, cfg.ngram, cfg.cluster_space};
  const auto model = cluster_window(st.corpus, nc);
  const auto proj = svd_project(model.vectors, model.dimension, cfg.seed);
  const auto ent = narrative_entropy(model);
  rec.metrics = {{"messages", model.ids.size()}, {"overall_entropy_bits", ent.overall}};
  st.out.write("scatter.csv", scatter_csv(model, proj), &rec);
  st.out.write_json("entropy.json", entropy_json(ent), &rec);
  std::string line = "Narrative entropy (k=" + std::to_string(cfg.k) + ", " + std::to_string(model.ids.size()) +
                     " messages " + format_datetime(nc.from) + " to " + format_datetime(nc.to) +
                     "): overall " + fmt(ent.overall) + " bits";
  st.summary.push_back(line);
  for (const auto& [ch, h] : ent.per_channel) st.summary.push_back("  " + ch + ": " + fmt(h) + " bits");
}

}  // namespace detail

// Runs the configured stages in dependency order, writing each stage's
// artifacts, then summary.txt and finally manifest.json. On a stage failure
// the manifest is still written with that stage's outputs flagged incomplete,
// and StageError is thrown.
inline RunManifest run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir(cfg.out_dir);
  prepare_output_dir(dir);
  ReportWriter out(dir);
  RunManifest manifest;
  manifest.config = cfg.to_json();
  detail::RunState st{cfg, out, {}, {}, {}, {}, {}, {}, {}};

  const auto stages = cfg.resolved_stages();
  if (std::find(stages.begin(), stages.end(), "ingest") == stages.end()) {
    std::ifstream in(dir / "corpus.jsonl", std::ios::binary);
    auto parsed = parse_jsonl(in, canonical_mapping());
    if (!parsed.errors.empty()) throw DataError("cached corpus.jsonl is corrupt");
    st.corpus = std::move(parsed.corpus);
    st.notes.push_back("corpus loaded from cached corpus.jsonl");
  }

  auto finish = [&] {
    std::string summary = "coordscan " + std::string(kVersion) + " run summary\n";
    for (const auto& l : st.summary) summary += l + "\n";
    if (!st.notes.empty()) {
      summary += "Notes:\n";
      for (const auto& n : st.notes) summary += "  - " + n + "\n";
    }
    out.write("summary.txt", summary, nullptr);
    manifest.notes = st.notes;
    std::map<std::string, bool> incomplete;
    for (const auto& s : manifest.stages) {
      for (const auto& a : s.outputs) incomplete[a.file] = incomplete[a.file] || a.incomplete;
    }
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() != kManifestFile) files.push_back(e.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      manifest.artifacts.push_back({f, io::sha256_hex(io::read_file(dir / f)), incomplete[f]});
    }
    out.write(std::string(kManifestFile), manifest.to_json().dump(2) + "\n", nullptr);
  };

  using StageFn = void (*)(detail::RunState&, StageRecord&);
  static const std::map<std::string, StageFn> kFns{
      {"ingest", detail::stage_ingest},       {"stats", detail::stage_stats},
      {"detect", detail::stage_detect},       {"sweep", detail::stage_sweep},
      {"control", detail::stage_control},     {"feasibility", detail::stage_feasibility},
      {"graph", detail::stage_graph},         {"analytics", detail::stage_analytics},
      {"narrative", detail::stage_narrative}};

  for (const auto& name : stages) {
    StageRecord rec;
    rec.name = name;
    rec.input_digest = name == "ingest" ? "" : (st.corpus_digest.empty() ? st.corpus_digest = corpus_digest(st.corpus)
                                                                         : st.corpus_digest);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      kFns.at(name)(st, rec);
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      for (auto& a : rec.outputs) a.incomplete = true;
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      manifest.stages.push_back(rec);
      st.summary.push_back("Stage " + name + " FAILED: " + e.what());
      finish();
      throw StageError(name, e.what());
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (name == "ingest") st.corpus_digest = corpus_digest(st.corpus);
    manifest.stages.push_back(std::move(rec));
  }
  finish();
  return manifest;
}

}  // namespace coordscan
