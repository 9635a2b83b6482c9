#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sathi/common.hpp"

namespace sathi::metrics {

/// Human labels for one system turn. Besides the three named labels, any
/// other boolean column is kept under its own name ("lia_correct", ...).
struct AnnotationRecord {
  std::string session_id;
  std::size_t turn_index = 0;
  std::optional<bool> qra_correct;
  std::optional<bool> pcr_relevant;
  std::optional<bool> fqr_appropriate;
  std::map<std::string, bool> extra;
};

inline constexpr std::int64_t kSlowThresholdMs = 3000;

struct MetricsReport {
  // Counters.
  std::size_t sessions = 0;
  std::size_t sessions_with_user_turn = 0;
  std::size_t sessions_answered = 0;
  std::size_t system_turns = 0;
  std::size_t slow_turns = 0;
  std::size_t message_attempts = 0;
  std::size_t message_ok = 0;
  std::size_t message_5xx = 0;
  std::size_t ratings = 0;
  std::size_t general_routed = 0;
  std::size_t expert_escalations = 0;
  std::size_t annotations_used = 0;
  /// "session_id#turn_index" of annotations that point at no system turn.
  std::vector<std::string> annotation_mismatches;

  // Fractions and means; nullopt when the denominator is zero.
  std::optional<double> qcr;
  std::optional<double> rt_avg_ms;
  std::optional<double> slow_fraction;
  std::optional<double> text_delivery_rate;
  std::optional<double> error_rate;
  std::optional<double> uptime_fraction;
  std::optional<double> feedback_mean_rating;
  std::optional<double> nps;
  std::optional<double> qra;
  std::optional<double> pcr;
  std::optional<double> fqr;
  /// Label name without its suffix ("lia") -> fraction true.
  std::map<std::string, double> extra_labels;

  bool empty() const noexcept { return sessions == 0 && message_attempts == 0 && ratings == 0; }
};

class AnnotationFormatError : public Error {
 public:
  AnnotationFormatError(const std::string& what, std::size_t line)
      : Error("annotation line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

std::vector<AnnotationRecord> parse_annotations(std::string_view text);
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);

/// Pure function of the journal records (see journal.hpp) and annotations.
MetricsReport compute_metrics(std::span<const nlohmann::json> journal,
                              std::span<const AnnotationRecord> annotations = {});

/// Reads both files; throws journal::JournalCorrupt with the line number.
MetricsReport compute_metrics(const std::filesystem::path& journal_path,
                              const std::optional<std::filesystem::path>& annotations_path);

enum class ReportFormat { TextTable, LineDelimited };

/// "text_table" / "line_delimited"; throws std::invalid_argument otherwise.
ReportFormat parse_format(std::string_view name);

std::string render_report(const MetricsReport& report, ReportFormat format);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace sathi::metrics
