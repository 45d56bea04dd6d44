#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "io.hpp"
#include "timeutil.hpp"
#include "utf8.hpp"

namespace coordscan {

enum class Platform { kChannelBroadcast, kForumSubmission };

inline std::string_view to_string(Platform p) {
  return p == Platform::kChannelBroadcast ? "channel-broadcast" : "forum-submission";
}

inline Platform parse_platform(std::string_view s) {
  if (s == "channel-broadcast") return Platform::kChannelBroadcast;
  if (s == "forum-submission") return Platform::kForumSubmission;
  throw ConfigError("unknown platform '" + std::string(s) + "'");
}

struct Message {
  std::string id;
  std::string channel;
  Platform platform = Platform::kChannelBroadcast;
  EpochSeconds timestamp = 0;
  std::string raw_text;
  std::string norm_text;
};

// Lowercases, removes URLs (`http://`, `https://`, `www.` up to the next
// whitespace), strips control characters, collapses whitespace runs to one
// space and trims. Punctuation and emoji are kept.
inline std::string normalize_text(std::string_view raw) {
  static constexpr std::u32string_view kUrlPrefixes[] = {U"http://", U"https://", U"www."};

  const std::u32string cps = utf8::decode(raw);
  std::u32string out;
  out.reserve(cps.size());
  std::u32string token;

  auto flush = [&] {
    std::size_t cut = token.size();
    for (auto prefix : kUrlPrefixes) {
      const auto pos = token.find(prefix);
      if (pos != std::u32string::npos) cut = std::min(cut, pos);
    }
    token.resize(cut);
    if (!token.empty()) {
      if (!out.empty()) out.push_back(U' ');
      out += token;
    }
    token.clear();
  };

  for (char32_t c : cps) {
    if (utf8::is_space(c)) {
      flush();
    } else if (!utf8::is_control(c)) {
      token.push_back(utf8::to_lower(c));
    }
  }
  flush();
  return utf8::encode(out);
}

// A time-ordered, id-unique collection of messages. Iteration order is
// timestamp ascending with ties broken by lexicographic id.
class Corpus {
 public:
  Corpus() = default;

  // Throws DataError on duplicate ids or negative timestamps.
  explicit Corpus(std::vector<Message> messages) : messages_(std::move(messages)) {
    std::sort(messages_.begin(), messages_.end(), [](const Message& a, const Message& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
    });
    std::set<std::string_view> ids;
    std::set<std::string> channels;
    for (const auto& m : messages_) {
      if (m.timestamp < 0) throw DataError("message " + m.id + " has a negative timestamp");
      if (!ids.insert(m.id).second) throw DataError("duplicate message id " + m.id);
      channels.insert(m.channel);
    }
    channels_.assign(channels.begin(), channels.end());
  }

  const std::vector<Message>& messages() const { return messages_; }
  // Sorted distinct channel identifiers.
  const std::vector<std::string>& channels() const { return channels_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  auto begin() const { return messages_.begin(); }
  auto end() const { return messages_.end(); }
  const Message& operator[](std::size_t i) const { return messages_[i]; }

 private:
  std::vector<Message> messages_;
  std::vector<std::string> channels_;
};

// Keys of the JSON fields holding each message attribute. Dotted keys
// (`meta.channel`) address nested objects.
struct FieldMapping {
  std::string id = "id";
  std::string channel = "channel";
  std::string timestamp = "date";
  std::string text = "text";
  std::string platform;  // optional; empty means use default_platform
  Platform default_platform = Platform::kChannelBroadcast;
};

struct ParseIssue {
  enum class Kind { kJson, kSchema };
  std::size_t line = 0;  // 1-based
  Kind kind = Kind::kJson;
  std::string message;
};

struct ParseResult {
  Corpus corpus;
  std::vector<ParseIssue> errors;
  std::vector<std::string> warnings;
  std::size_t nonempty_lines = 0;
  std::size_t replaced_duplicates = 0;
};

namespace detail {

inline const nlohmann::json* lookup(const nlohmann::json& obj, std::string_view key) {
  const nlohmann::json* cur = &obj;
  std::size_t start = 0;
  while (true) {
    if (!cur->is_object()) return nullptr;
    const auto dot = key.find('.', start);
    const std::string part(key.substr(start, dot == std::string_view::npos ? key.npos : dot - start));
    auto it = cur->find(part);
    if (it == cur->end()) return nullptr;
    cur = &*it;
    if (dot == std::string_view::npos) return cur;
    start = dot + 1;
  }
}

inline std::string scalar_string(const nlohmann::json& v, std::string_view what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  throw DataError(std::string(what) + " must be a string or integer");
}

inline EpochSeconds parse_timestamp(const nlohmann::json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_unsigned()) return static_cast<EpochSeconds>(v.get<std::uint64_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw DataError("timestamp is not finite");
    return static_cast<EpochSeconds>(std::floor(d));
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::stoll(s);
    }
    if (auto t = parse_iso8601(s)) return *t;
    throw DataError("unparseable timestamp '" + s + "'");
  }
  throw DataError("timestamp must be an epoch number or ISO-8601 string");
}

inline Message message_from_json(const nlohmann::json& obj, const FieldMapping& fm) {
  if (!obj.is_object()) throw DataError("record is not a JSON object");
  auto require = [&](const std::string& key) -> const nlohmann::json& {
    const auto* v = lookup(obj, key);
    if (v == nullptr || v->is_null()) throw DataError("missing field '" + key + "'");
    return *v;
  };
  Message m;
  m.id = scalar_string(require(fm.id), "id");
  m.channel = scalar_string(require(fm.channel), "channel");
  m.timestamp = parse_timestamp(require(fm.timestamp));
  if (m.timestamp < 0) throw DataError("negative timestamp");
  const auto& text = require(fm.text);
  if (!text.is_string()) throw DataError("field '" + fm.text + "' is not a string");
  m.raw_text = text.get<std::string>();
  m.norm_text = normalize_text(m.raw_text);
  m.platform = fm.default_platform;
  if (!fm.platform.empty()) {
    if (const auto* p = lookup(obj, fm.platform); p != nullptr && p->is_string()) {
      m.platform = parse_platform(p->get<std::string>());
    }
  }
  return m;
}

}  // namespace detail

// Parses one JSONL shard into records in input order. Bad lines are reported,
// never dropped silently.
inline std::vector<Message> parse_jsonl_records(std::istream& in, const FieldMapping& fm,
                                                std::vector<ParseIssue>& errors,
                                                std::size_t& nonempty_lines) {
  std::vector<Message> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++nonempty_lines;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      errors.push_back({lineno, ParseIssue::Kind::kJson, e.what()});
      continue;
    }
    try {
      out.push_back(detail::message_from_json(obj, fm));
    } catch (const Error& e) {
      errors.push_back({lineno, ParseIssue::Kind::kSchema, e.what()});
    }
  }
  return out;
}

// Merges records from one or more shards. A repeated id keeps the last record
// seen and logs a warning.
inline Corpus merge_records(std::vector<Message> records, std::vector<std::string>& warnings,
                            std::size_t& replaced) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Message> unique;
  unique.reserve(records.size());
  for (auto& m : records) {
    auto [it, inserted] = index.try_emplace(m.id, unique.size());
    if (inserted) {
      unique.push_back(std::move(m));
    } else {
      warnings.push_back("duplicate id " + m.id + ": keeping the later record");
      ++replaced;
      unique[it->second] = std::move(m);
    }
  }
  return Corpus(std::move(unique));
}

inline ParseResult parse_jsonl(std::istream& in, const FieldMapping& fm = {}) {
  ParseResult r;
  auto records = parse_jsonl_records(in, fm, r.errors, r.nonempty_lines);
  r.corpus = merge_records(std::move(records), r.warnings, r.replaced_duplicates);
  return r;
}

// Canonical JSONL form of a corpus; re-parses with canonical_mapping().
inline std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& m : corpus) {
    nlohmann::ordered_json j;
    j["id"] = m.id;
    j["channel"] = m.channel;
    j["platform"] = to_string(m.platform);
    j["timestamp"] = m.timestamp;
    j["text"] = m.raw_text;
    j["norm_text"] = m.norm_text;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline FieldMapping canonical_mapping() {
  FieldMapping fm;
  fm.timestamp = "timestamp";
  fm.platform = "platform";
  return fm;
}

// One lowercase keyword per line; blank lines and `#` comments are skipped.
inline std::vector<std::string> load_keywords(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto kw = normalize_text(line);
    if (!kw.empty()) out.push_back(std::move(kw));
  }
  return out;
}

// Keeps messages whose normalized text contains any keyword as a substring.
inline Corpus keyword_filter(const Corpus& corpus, std::span<const std::string> keywords) {
  if (keywords.empty()) throw ConfigError("keyword list is empty");
  std::vector<Message> kept;
  for (const auto& m : corpus) {
    const bool hit = std::any_of(keywords.begin(), keywords.end(), [&](const std::string& k) {
      return m.norm_text.find(k) != std::string::npos;
    });
    if (hit) kept.push_back(m);
  }
  return Corpus(std::move(kept));
}

struct CorpusStats {
  std::map<std::string, std::size_t> per_channel_counts;
  std::map<std::string, double> per_channel_pct;
  std::size_t total = 0;
  EpochSeconds date_min = 0;  // midnight UTC of the first day
  EpochSeconds date_max = 0;  // midnight UTC of the last day
  double median_per_channel = 0;
  double mean_per_channel = 0;
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("corpus_stats: corpus is empty");
  CorpusStats s;
  for (const auto& m : corpus) ++s.per_channel_counts[m.channel];
  s.total = corpus.size();
  std::vector<double> counts;
  for (const auto& [ch, n] : s.per_channel_counts) {
    s.per_channel_pct[ch] = 100.0 * static_cast<double>(n) / static_cast<double>(s.total);
    counts.push_back(static_cast<double>(n));
  }
  std::sort(counts.begin(), counts.end());
  const std::size_t k = counts.size();
  s.median_per_channel = k % 2 ? counts[k / 2] : 0.5 * (counts[k / 2 - 1] + counts[k / 2]);
  s.mean_per_channel = static_cast<double>(s.total) / static_cast<double>(k);
  s.date_min = floor_div(corpus.messages().front().timestamp, kSecondsPerDay) * kSecondsPerDay;
  s.date_max = floor_div(corpus.messages().back().timestamp, kSecondsPerDay) * kSecondsPerDay;
  return s;
}

// `channel,count,percentage`, largest channel first.
inline std::string stats_csv(const CorpusStats& s) {
  std::vector<std::pair<std::string, std::size_t>> rows(s.per_channel_counts.begin(),
                                                        s.per_channel_counts.end());
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  io::CsvWriter csv{"channel", "count", "percentage"};
  for (const auto& [ch, n] : rows) {
    csv.row({ch, std::to_string(n), io::format_double(s.per_channel_pct.at(ch))});
  }
  return csv.str();
}

inline nlohmann::ordered_json stats_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["total"] = s.total;
  j["channels"] = s.per_channel_counts.size();
  j["date_min"] = format_date(s.date_min);
  j["date_max"] = format_date(s.date_max);
  j["median_per_channel"] = s.median_per_channel;
  j["mean_per_channel"] = s.mean_per_channel;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [ch, n] : s.per_channel_counts) {
    per[ch] = {{"count", n}, {"percentage", s.per_channel_pct.at(ch)}};
  }
  j["per_channel"] = per;
  return j;
}

}  // namespace coordscan
