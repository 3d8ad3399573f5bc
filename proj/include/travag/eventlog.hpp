#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace travag {

/// Activity labels are opaque strings compared by exact equality. Input is
/// trimmed of surrounding whitespace but never otherwise normalized, so two
/// labels that differ in case or inner spacing stay distinct.
using Activity = std::string;

/// Ordered activity sequence of one case. Immutable after construction.
/// Ordering is lexicographic over the labels (a strict prefix sorts first),
/// which is the ordering used for vocabulary columns.
class TraceVariant {
 public:
  TraceVariant() = default;
  explicit TraceVariant(std::vector<Activity> activities)
      : activities_(std::move(activities)) {}

  /// Parses a comma-joined form like "register,visit,release".
  static TraceVariant parse(std::string_view comma_joined);

  const std::vector<Activity>& activities() const { return activities_; }
  std::size_t length() const { return activities_.size(); }
  bool empty() const { return activities_.empty(); }

  /// Comma-joined textual form (inverse of parse).
  std::string joined() const;

  friend bool operator==(const TraceVariant&, const TraceVariant&) = default;
  friend auto operator<=>(const TraceVariant&, const TraceVariant&) = default;

 private:
  std::vector<Activity> activities_;
};

/// Multiset of trace variants: variant -> frequency (>= 1).
class SimpleEventLog {
 public:
  SimpleEventLog() = default;

  /// Adds `frequency` cases of `variant` (multiset sum). frequency must be >= 1.
  void add(TraceVariant variant, std::uint64_t frequency = 1);

  const std::map<TraceVariant, std::uint64_t>& variants() const { return variants_; }
  bool empty() const { return variants_.empty(); }

  /// m: total number of cases (sum of frequencies).
  std::uint64_t case_count() const { return case_count_; }
  /// n: number of distinct variants.
  std::size_t variant_count() const { return variants_.size(); }
  /// Total number of events (sum of length * frequency).
  std::uint64_t event_count() const;
  /// Number of distinct activity labels across all variants.
  std::size_t activity_count() const;

  /// Frequency of `variant`, 0 if absent.
  std::uint64_t frequency(const TraceVariant& variant) const;

  friend bool operator==(const SimpleEventLog&, const SimpleEventLog&) = default;

 private:
  std::map<TraceVariant, std::uint64_t> variants_;
  std::uint64_t case_count_ = 0;
};

/// Bijection between the distinct variants of a log and column indices
/// 0..n-1, in lexicographic label order so encoding is deterministic across
/// runs and platforms.
class VariantVocabulary {
 public:
  /// Fits the vocabulary on a log. Throws EmptyLogError on an empty log.
  static VariantVocabulary fit(const SimpleEventLog& log);

  std::size_t size() const { return variants_.size(); }
  const std::vector<TraceVariant>& variants() const { return variants_; }
  const TraceVariant& variant_at(std::size_t index) const;
  bool contains(const TraceVariant& variant) const;
  /// Throws std::invalid_argument naming the variant when it is unknown.
  std::size_t index_of(const TraceVariant& variant) const;

  /// One comma-joined variant per line, in index order.
  void save(std::ostream& out) const;
  static VariantVocabulary load(std::istream& in);

  friend bool operator==(const VariantVocabulary&, const VariantVocabulary&) = default;

 private:
  std::vector<TraceVariant> variants_;
  std::map<TraceVariant, std::size_t> index_;
};

/// One-hot case matrix: m rows, n columns, each row has a single 1. Stored
/// sparsely as the set column index per row; n can exceed 1500 while rows
/// are 1-hot, so a dense bitmap would be waste.
class BinaryMatrix {
 public:
  BinaryMatrix(std::size_t cols, std::vector<std::uint32_t> row_columns);

  std::size_t rows() const { return row_columns_.size(); }
  std::size_t cols() const { return cols_; }
  std::uint32_t column_of_row(std::size_t row) const { return row_columns_.at(row); }
  std::span<const std::uint32_t> row_columns() const { return row_columns_; }

  /// Writes row `row` as a dense 0/1 vector into `out` (size n).
  void dense_row(std::size_t row, std::span<double> out) const;

  std::vector<std::uint64_t> column_sums() const;

 private:
  std::size_t cols_;
  std::vector<std::uint32_t> row_columns_;
};

/// Column names of an event CSV. Defaults follow the usual XES-style export.
struct EventCsvConfig {
  std::string case_column = "case:concept:name";
  std::string activity_column = "concept:name";
  std::string timestamp_column = "time:timestamp";
};

/// Parses an event CSV (header + one row per event) into a simple event log.
/// Events are grouped by case and ordered by (timestamp, original row order);
/// each case contributes exactly one trace variant.
///
/// Timestamps may be ISO-8601 (date, optional time, fraction, zone) or a
/// plain integer epoch. Throws FormatError with the offending line number on
/// a bad row, FormatError when a configured column is missing, and
/// EmptyLogError when there are no data rows.
SimpleEventLog parse_event_csv(std::istream& in, const EventCsvConfig& config = {});

/// Parses a variant table: one "act1,act2,...<TAB>frequency" row per line.
/// An optional "variant<TAB>frequency" header line is skipped. Throws
/// FormatError on non-positive frequencies or duplicate variant rows and
/// EmptyLogError when no data rows remain.
SimpleEventLog parse_variant_table(std::istream& in);

/// Writes the variant-table form (header line + one row per variant, LF
/// endings), the inverse of parse_variant_table.
void write_variant_table(std::ostream& out, const SimpleEventLog& log);

/// Fits the deterministic variant vocabulary of a log.
VariantVocabulary fit_vocabulary(const SimpleEventLog& log);

/// One-hot encodes a log: rows in vocabulary order, each variant repeated by
/// its frequency. Throws std::invalid_argument when the log contains a
/// variant unknown to the vocabulary.
BinaryMatrix one_hot_encode(const SimpleEventLog& log, const VariantVocabulary& vocab);

/// Decodes a row-index sequence back to a log (inverse of one_hot_encode up
/// to multiset equality). Throws std::invalid_argument on an out-of-range
/// index.
SimpleEventLog one_hot_decode(std::span<const std::uint32_t> rows,
                              const VariantVocabulary& vocab);

}  // namespace travag
