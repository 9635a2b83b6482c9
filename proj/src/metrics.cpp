#include "sathi/metrics.hpp"

#include <cstdio>
#include <set>
#include <stdexcept>

#include "sathi/journal.hpp"

namespace sathi::metrics {

using nlohmann::json;

std::vector<AnnotationRecord> parse_annotations(std::string_view text) {
  std::vector<AnnotationRecord> out;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw AnnotationFormatError("not a JSON object", line_no);
    }
    AnnotationRecord rec;
    try {
      rec.session_id = j.at("session_id").get<std::string>();
      rec.turn_index = j.at("turn_index").get<std::size_t>();
      for (const auto& [key, value] : j.items()) {
        if (key == "session_id" || key == "turn_index") continue;
        if (!value.is_boolean()) continue;
        const bool b = value.get<bool>();
        if (key == "qra_correct") {
          rec.qra_correct = b;
        } else if (key == "pcr_relevant") {
          rec.pcr_relevant = b;
        } else if (key == "fqr_appropriate") {
          rec.fqr_appropriate = b;
        } else {
          rec.extra[key] = b;
        }
      }
    } catch (const json::exception& e) {
      throw AnnotationFormatError(e.what(), line_no);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_file(path));
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string label_name(const std::string& column) {
  const auto us = column.find('_');
  return us == std::string::npos ? column : column.substr(0, us);
}

std::optional<double> uptime(std::span<const json> journal) {
  // Up from each service start to the last record before the next start;
  // the window runs from the first start to the last record.
  std::optional<std::int64_t> first_start;
  std::optional<std::int64_t> seg_start;
  std::int64_t seg_last = 0;
  std::int64_t up = 0;
  std::int64_t last = 0;
  for (const auto& rec : journal) {
    const auto ts = rec.value("ts", std::int64_t{0});
    if (rec.value("type", "") == journal::kServiceStarted) {
      if (seg_start) up += seg_last - *seg_start;
      if (!first_start) first_start = ts;
      seg_start = ts;
    }
    seg_last = ts;
    last = ts;
  }
  if (!first_start) return std::nullopt;
  up += seg_last - *seg_start;
  const auto window = last - *first_start;
  if (window <= 0) return std::nullopt;
  return static_cast<double>(up) / static_cast<double>(window);
}

}  // namespace

MetricsReport compute_metrics(std::span<const json> journal,
                              std::span<const AnnotationRecord> annotations) {
  MetricsReport r;
  std::set<std::string> sessions;
  std::set<std::string> with_turn;
  std::set<std::string> answered;
  std::set<std::pair<std::string, std::size_t>> system_turns;
  double latency_sum = 0.0;
  std::size_t promoters = 0;
  std::size_t detractors = 0;
  double rating_sum = 0.0;

  for (const auto& rec : journal) {
    const auto type = rec.value("type", "");
    const auto sid = rec.value("session_id", "");
    if (!sid.empty()) sessions.insert(sid);
    if (type == journal::kTurn) {
      with_turn.insert(sid);
      ++r.system_turns;
      system_turns.emplace(sid, rec.value("turn_index", std::size_t{0}));
      const auto latency = rec.value("latency_ms", std::int64_t{0});
      latency_sum += static_cast<double>(latency);
      if (latency > kSlowThresholdMs) ++r.slow_turns;
      if (rec.value("phase", "") == "Answered") answered.insert(sid);
      if (const auto ev = rec.find("events"); ev != rec.end() && ev->is_array()) {
        for (const auto& e : *ev) {
          if (e.value("kind", "") == "EscalatedToGeneral") ++r.general_routed;
        }
      }
    }
    if (type == journal::kTurn || type == journal::kRejected) {
      ++r.message_attempts;
      const auto status = rec.value("status", 0);
      if (status >= 200 && status < 300) ++r.message_ok;
      if (status >= 500) ++r.message_5xx;
    }
    if (type == journal::kFeedback) {
      const auto rating = rec.value("rating", 0);
      ++r.ratings;
      rating_sum += rating;
      if (rating == 5) ++promoters;
      if (rating <= 2) ++detractors;
    }
  }

  r.sessions = sessions.size();
  r.sessions_with_user_turn = with_turn.size();
  r.sessions_answered = answered.size();
  r.qcr = ratio(r.sessions_answered, r.sessions_with_user_turn);
  if (r.system_turns > 0) r.rt_avg_ms = latency_sum / static_cast<double>(r.system_turns);
  r.slow_fraction = ratio(r.slow_turns, r.system_turns);
  r.text_delivery_rate = ratio(r.message_ok, r.message_attempts);
  r.error_rate = ratio(r.message_5xx, r.message_attempts);
  r.uptime_fraction = uptime(journal);
  if (r.ratings > 0) {
    r.feedback_mean_rating = rating_sum / static_cast<double>(r.ratings);
    r.nps = 100.0 * (static_cast<double>(promoters) - static_cast<double>(detractors)) /
            static_cast<double>(r.ratings);
  }

  std::size_t qra_n = 0, qra_t = 0, pcr_n = 0, pcr_t = 0, fqr_n = 0, fqr_t = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> extra;  // true, total
  for (const auto& a : annotations) {
    if (!system_turns.contains({a.session_id, a.turn_index})) {
      r.annotation_mismatches.push_back(a.session_id + "#" + std::to_string(a.turn_index));
      continue;
    }
    ++r.annotations_used;
    if (a.qra_correct) {
      ++qra_n;
      qra_t += *a.qra_correct;
    }
    if (a.pcr_relevant) {
      ++pcr_n;
      pcr_t += *a.pcr_relevant;
    }
    if (a.fqr_appropriate) {
      ++fqr_n;
      fqr_t += *a.fqr_appropriate;
    }
    for (const auto& [k, v] : a.extra) {
      auto& [t, n] = extra[label_name(k)];
      t += v;
      ++n;
    }
  }
  r.qra = ratio(qra_t, qra_n);
  r.pcr = ratio(pcr_t, pcr_n);
  r.fqr = ratio(fqr_t, fqr_n);
  for (const auto& [k, tn] : extra) r.extra_labels[k] = *ratio(tn.first, tn.second);
  return r;
}

MetricsReport compute_metrics(const std::filesystem::path& journal_path,
                              const std::optional<std::filesystem::path>& annotations_path) {
  if (!std::filesystem::exists(journal_path)) {
    throw IoError("journal not found: " + journal_path.string());
  }
  const auto records = journal::read_journal(journal_path);
  std::vector<AnnotationRecord> annotations;
  if (annotations_path) annotations = read_annotations(*annotations_path);
  return compute_metrics(records, annotations);
}

ReportFormat parse_format(std::string_view name) {
  if (name == "text_table") return ReportFormat::TextTable;
  if (name == "line_delimited") return ReportFormat::LineDelimited;
  throw std::invalid_argument("unknown report format '" + std::string(name) + "'");
}

namespace {

enum class Kind { Fraction, Millis, Score, Count };

struct Row {
  std::string name;
  std::optional<double> value;
  Kind kind;
};

// Labels that need annotation columns; listed even when absent.
constexpr std::string_view kLabelledMetrics[] = {"lia", "loa", "lss", "sira", "voice"};

std::vector<Row> rows(const MetricsReport& r) {
  auto count = [](std::size_t n) { return std::optional<double>(static_cast<double>(n)); };
  std::vector<Row> out = {
      {"qcr", r.qcr, Kind::Fraction},
      {"rt_avg_ms", r.rt_avg_ms, Kind::Millis},
      {"slow_fraction_over_3s", r.slow_fraction, Kind::Fraction},
      {"text_delivery_rate", r.text_delivery_rate, Kind::Fraction},
      {"error_rate", r.error_rate, Kind::Fraction},
      {"uptime_fraction", r.uptime_fraction, Kind::Fraction},
      {"feedback_mean_rating", r.feedback_mean_rating, Kind::Score},
      {"nps", r.nps, Kind::Score},
      {"qra", r.qra, Kind::Fraction},
      {"pcr", r.pcr, Kind::Fraction},
      {"fqr", r.fqr, Kind::Fraction},
  };
  for (auto name : kLabelledMetrics) {
    const auto it = r.extra_labels.find(std::string(name));
    out.push_back({std::string(name),
                   it == r.extra_labels.end() ? std::nullopt : std::optional<double>(it->second),
                   Kind::Fraction});
  }
  for (const auto& [name, v] : r.extra_labels) {
    bool listed = false;
    for (auto n : kLabelledMetrics) listed = listed || n == name;
    if (!listed) out.push_back({name, v, Kind::Fraction});
  }
  out.push_back({"sessions", count(r.sessions), Kind::Count});
  out.push_back({"sessions_answered", count(r.sessions_answered), Kind::Count});
  out.push_back({"system_turns", count(r.system_turns), Kind::Count});
  out.push_back({"message_attempts", count(r.message_attempts), Kind::Count});
  out.push_back({"ratings", count(r.ratings), Kind::Count});
  out.push_back({"general_routed", count(r.general_routed), Kind::Count});
  out.push_back({"expert_escalations", count(r.expert_escalations), Kind::Count});
  out.push_back({"annotations_used", count(r.annotations_used), Kind::Count});
  out.push_back({"annotation_mismatches", count(r.annotation_mismatches.size()), Kind::Count});
  return out;
}

std::string format_value(const Row& row) {
  if (!row.value) return "unavailable";
  char buf[64];
  switch (row.kind) {
    case Kind::Fraction:
      std::snprintf(buf, sizeof buf, "%.4f", *row.value);
      break;
    case Kind::Millis:
      std::snprintf(buf, sizeof buf, "%.1f", *row.value);
      break;
    case Kind::Score:
      std::snprintf(buf, sizeof buf, "%.2f", *row.value);
      break;
    case Kind::Count:
      std::snprintf(buf, sizeof buf, "%.0f", *row.value);
      break;
  }
  return buf;
}

}  // namespace

std::string render_report(const MetricsReport& report, ReportFormat format) {
  if (format == ReportFormat::LineDelimited) {
    std::string out;
    if (report.empty()) return out;
    for (const auto& row : rows(report)) {
      json j = {{"metric", row.name}};
      if (row.value) {
        j["value"] = *row.value;
      } else {
        j["value"] = nullptr;
        j["status"] = "unavailable";
      }
      out += j.dump() + "\n";
    }
    for (const auto& m : report.annotation_mismatches) {
      out += json{{"annotation_mismatch", m}}.dump() + "\n";
    }
    return out;
  }
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-24s %s\n", "metric", "value");
  out += buf;
  out += std::string(24, '-') + " " + std::string(12, '-') + "\n";
  if (report.empty()) return out;
  for (const auto& row : rows(report)) {
    std::snprintf(buf, sizeof buf, "%-24s %s\n", row.name.c_str(), format_value(row).c_str());
    out += buf;
  }
  for (const auto& m : report.annotation_mismatches) out += "mismatched annotation: " + m + "\n";
  return out;
}

json to_json(const MetricsReport& report) {
  json j = json::object();
  for (const auto& row : rows(report)) {
    j[row.name] = row.value ? json(*row.value) : json(nullptr);
  }
  j["annotation_mismatches"] = report.annotation_mismatches;
  return j;
}

}  // namespace sathi::metrics
