#include "travag/eventlog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include "travag/errors.hpp"

namespace travag {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Reads one line, tolerating CRLF endings. Returns false on EOF.
bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

void strip_bom(std::string& line) {
  if (line.size() >= 3 && line[0] == '\xef' && line[1] == '\xbb' && line[2] == '\xbf') {
    line.erase(0, 3);
  }
}

// RFC-4180-style field split: quoted fields may contain separators and
// doubled quotes. Embedded newlines are not supported (event logs are
// line-oriented); an unterminated quote is a format error.
std::vector<std::string> split_csv_row(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
    ++i;
  }
  if (quoted) {
    throw FormatError("line " + std::to_string(line_no) + ": unterminated quote");
  }
  fields.push_back(std::move(field));
  return fields;
}

struct Timestamp {
  std::int64_t seconds = 0;
  std::int32_t nanos = 0;
  auto operator<=>(const Timestamp&) const = default;
};

bool parse_int(std::string_view s, std::int64_t& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Days since 1970-01-01 for a civil date (Gregorian, proleptic).
std::int64_t days_from_civil(std::int64_t y, std::int64_t m, std::int64_t d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const std::int64_t yoe = y - era * 400;
  const std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

// Accepts "YYYY-MM-DD[ T]HH:MM[:SS[.frac]][Z|±HH[:]MM]" or a bare integer
// epoch. Only the ordering of values matters downstream, so the epoch unit
// is taken as seconds.
Timestamp parse_timestamp(std::string_view raw, std::size_t line_no) {
  const std::string_view s = trim(raw);
  const auto fail = [&]() -> Timestamp {
    throw FormatError("line " + std::to_string(line_no) + ": unparseable timestamp '" +
                      std::string(raw) + "'");
  };
  if (s.empty()) return fail();

  std::int64_t epoch = 0;
  if (parse_int(s, epoch)) return {epoch, 0};

  // ISO-8601 date part
  auto digits = [&](std::size_t pos, std::size_t count, std::int64_t& out) {
    if (pos + count > s.size()) return false;
    out = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      out = out * 10 + (s[i] - '0');
    }
    return true;
  };

  std::int64_t year, month, day;
  if (!digits(0, 4, year) || s.size() < 10 || s[4] != '-' || !digits(5, 2, month) ||
      s[7] != '-' || !digits(8, 2, day) || month < 1 || month > 12 || day < 1 || day > 31) {
    return fail();
  }

  std::int64_t hour = 0, minute = 0, second = 0;
  std::int32_t nanos = 0;
  std::int64_t zone_offset = 0;
  std::size_t pos = 10;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != ' ') return fail();
    ++pos;
    if (!digits(pos, 2, hour) || pos + 5 > s.size() || s[pos + 2] != ':' ||
        !digits(pos + 3, 2, minute) || hour > 23 || minute > 59) {
      return fail();
    }
    pos += 5;
    if (pos < s.size() && s[pos] == ':') {
      if (!digits(pos + 1, 2, second) || second > 60) return fail();
      pos += 3;
      if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::int64_t scale = 100'000'000;
        std::size_t ndigits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
          if (scale > 0) nanos += static_cast<std::int32_t>((s[pos] - '0') * scale);
          scale /= 10;
          ++pos;
          ++ndigits;
        }
        if (ndigits == 0) return fail();
      }
    }
    if (pos < s.size()) {
      if (s[pos] == 'Z' && pos + 1 == s.size()) {
        pos += 1;
      } else if (s[pos] == '+' || s[pos] == '-') {
        const int sign = s[pos] == '+' ? 1 : -1;
        ++pos;
        std::int64_t zh = 0, zm = 0;
        if (!digits(pos, 2, zh)) return fail();
        pos += 2;
        if (pos < s.size() && s[pos] == ':') ++pos;
        if (pos < s.size()) {
          if (!digits(pos, 2, zm) || pos + 2 != s.size()) return fail();
          pos += 2;
        }
        zone_offset = sign * (zh * 3600 + zm * 60);
      } else {
        return fail();
      }
    }
  }

  const std::int64_t days = days_from_civil(year, month, day);
  return {days * 86400 + hour * 3600 + minute * 60 + second - zone_offset, nanos};
}

}  // namespace

TraceVariant TraceVariant::parse(std::string_view comma_joined) {
  std::vector<Activity> activities;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = comma_joined.find(',', start);
    const std::string_view label =
        trim(comma_joined.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (label.empty()) {
      throw FormatError("empty activity label in variant '" + std::string(comma_joined) + "'");
    }
    activities.emplace_back(label);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return TraceVariant(std::move(activities));
}

std::string TraceVariant::joined() const {
  std::string out;
  for (std::size_t i = 0; i < activities_.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += activities_[i];
  }
  return out;
}

void SimpleEventLog::add(TraceVariant variant, std::uint64_t frequency) {
  if (frequency == 0) {
    throw std::invalid_argument("variant frequency must be >= 1");
  }
  if (variant.empty()) {
    throw std::invalid_argument("cannot add an empty trace variant to a log");
  }
  variants_[std::move(variant)] += frequency;
  case_count_ += frequency;
}

std::uint64_t SimpleEventLog::event_count() const {
  std::uint64_t events = 0;
  for (const auto& [variant, freq] : variants_) events += variant.length() * freq;
  return events;
}

std::size_t SimpleEventLog::activity_count() const {
  std::set<std::string_view> labels;
  for (const auto& [variant, freq] : variants_) {
    for (const auto& a : variant.activities()) labels.insert(a);
  }
  return labels.size();
}

std::uint64_t SimpleEventLog::frequency(const TraceVariant& variant) const {
  const auto it = variants_.find(variant);
  return it == variants_.end() ? 0 : it->second;
}

VariantVocabulary VariantVocabulary::fit(const SimpleEventLog& log) {
  if (log.empty()) {
    throw EmptyLogError("cannot fit a vocabulary on an empty log");
  }
  VariantVocabulary vocab;
  vocab.variants_.reserve(log.variant_count());
  // std::map iteration is already the lexicographic vocabulary order.
  for (const auto& [variant, freq] : log.variants()) {
    vocab.index_.emplace(variant, vocab.variants_.size());
    vocab.variants_.push_back(variant);
  }
  return vocab;
}

const TraceVariant& VariantVocabulary::variant_at(std::size_t index) const {
  if (index >= variants_.size()) {
    throw std::invalid_argument("variant index " + std::to_string(index) +
                                " out of range (n=" + std::to_string(variants_.size()) + ")");
  }
  return variants_[index];
}

bool VariantVocabulary::contains(const TraceVariant& variant) const {
  return index_.contains(variant);
}

std::size_t VariantVocabulary::index_of(const TraceVariant& variant) const {
  const auto it = index_.find(variant);
  if (it == index_.end()) {
    throw std::invalid_argument("variant not in vocabulary: '" + variant.joined() + "'");
  }
  return it->second;
}

void VariantVocabulary::save(std::ostream& out) const {
  for (const auto& variant : variants_) {
    out << variant.joined() << '\n';
  }
}

VariantVocabulary VariantVocabulary::load(std::istream& in) {
  SimpleEventLog log;
  std::string line;
  std::size_t line_no = 0;
  while (read_line(in, line)) {
    ++line_no;
    if (line_no == 1) strip_bom(line);
    if (trim(line).empty()) continue;
    log.add(TraceVariant::parse(line));
  }
  if (log.empty()) throw EmptyLogError("vocabulary file has no variants");
  return fit(log);
}

BinaryMatrix::BinaryMatrix(std::size_t cols, std::vector<std::uint32_t> row_columns)
    : cols_(cols), row_columns_(std::move(row_columns)) {
  for (const std::uint32_t c : row_columns_) {
    if (c >= cols_) {
      throw std::invalid_argument("one-hot column " + std::to_string(c) +
                                  " out of range (n=" + std::to_string(cols_) + ")");
    }
  }
}

void BinaryMatrix::dense_row(std::size_t row, std::span<double> out) const {
  if (out.size() != cols_) {
    throw std::invalid_argument("dense_row buffer size mismatch");
  }
  std::fill(out.begin(), out.end(), 0.0);
  out[column_of_row(row)] = 1.0;
}

std::vector<std::uint64_t> BinaryMatrix::column_sums() const {
  std::vector<std::uint64_t> sums(cols_, 0);
  for (const std::uint32_t c : row_columns_) ++sums[c];
  return sums;
}

SimpleEventLog parse_event_csv(std::istream& in, const EventCsvConfig& config) {
  std::string line;
  if (!read_line(in, line)) {
    throw EmptyLogError("event CSV is empty");
  }
  strip_bom(line);
  const std::vector<std::string> header = split_csv_row(line, 1);

  const auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw FormatError("missing column '" + name + "' in event CSV header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t case_col = column_index(config.case_column);
  const std::size_t activity_col = column_index(config.activity_column);
  const std::size_t time_col = column_index(config.timestamp_column);

  struct Event {
    Timestamp time;
    Activity activity;
  };
  std::unordered_map<std::string, std::vector<Event>> cases;

  std::size_t line_no = 1;
  while (read_line(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_row(line, line_no);
    const std::size_t needed = std::max({case_col, activity_col, time_col});
    if (fields.size() <= needed) {
      throw FormatError("line " + std::to_string(line_no) + ": expected at least " +
                        std::to_string(needed + 1) + " fields, got " +
                        std::to_string(fields.size()));
    }
    const std::string case_id(trim(fields[case_col]));
    if (case_id.empty()) {
      throw FormatError("line " + std::to_string(line_no) + ": empty case id");
    }
    const std::string_view activity = trim(fields[activity_col]);
    if (activity.empty()) {
      throw FormatError("line " + std::to_string(line_no) + ": empty activity label");
    }
    const Timestamp time = parse_timestamp(fields[time_col], line_no);
    cases[case_id].push_back(Event{time, Activity(activity)});
  }
  if (cases.empty()) {
    throw EmptyLogError("event CSV has no data rows");
  }

  SimpleEventLog log;
  for (auto& [case_id, events] : cases) {
    // Ties on the timestamp keep the original file order.
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });
    std::vector<Activity> activities;
    activities.reserve(events.size());
    for (auto& e : events) activities.push_back(std::move(e.activity));
    log.add(TraceVariant(std::move(activities)));
  }
  return log;
}

SimpleEventLog parse_variant_table(std::istream& in) {
  SimpleEventLog log;
  std::string line;
  std::size_t line_no = 0;
  while (read_line(in, line)) {
    ++line_no;
    if (line_no == 1) strip_bom(line);
    if (trim(line).empty()) continue;
    if (line_no == 1 && trim(line) == "variant\tfrequency") continue;  // optional header
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected '<variant>\\t<frequency>'");
    }
    TraceVariant variant = TraceVariant::parse(std::string_view(line).substr(0, tab));
    const std::string_view freq_text = trim(std::string_view(line).substr(tab + 1));
    std::int64_t freq = 0;
    if (!parse_int(freq_text, freq)) {
      throw FormatError("line " + std::to_string(line_no) + ": unparseable frequency '" +
                        std::string(freq_text) + "'");
    }
    if (freq <= 0) {
      throw FormatError("line " + std::to_string(line_no) + ": frequency must be positive, got " +
                        std::to_string(freq));
    }
    if (log.frequency(variant) != 0) {
      throw FormatError("line " + std::to_string(line_no) + ": duplicate variant row '" +
                        variant.joined() + "'");
    }
    log.add(std::move(variant), static_cast<std::uint64_t>(freq));
  }
  if (log.empty()) {
    throw EmptyLogError("variant table has no data rows");
  }
  return log;
}

void write_variant_table(std::ostream& out, const SimpleEventLog& log) {
  out << "variant\tfrequency\n";
  for (const auto& [variant, freq] : log.variants()) {
    out << variant.joined() << '\t' << freq << '\n';
  }
}

VariantVocabulary fit_vocabulary(const SimpleEventLog& log) {
  return VariantVocabulary::fit(log);
}

BinaryMatrix one_hot_encode(const SimpleEventLog& log, const VariantVocabulary& vocab) {
  std::vector<std::uint32_t> row_columns;
  row_columns.reserve(log.case_count());
  // Vocabulary order, each variant repeated by its frequency: map iteration
  // order equals vocabulary order, so one pass suffices.
  for (const auto& [variant, freq] : log.variants()) {
    const std::uint32_t column = static_cast<std::uint32_t>(vocab.index_of(variant));
    for (std::uint64_t i = 0; i < freq; ++i) row_columns.push_back(column);
  }
  return BinaryMatrix(vocab.size(), std::move(row_columns));
}

SimpleEventLog one_hot_decode(std::span<const std::uint32_t> rows,
                              const VariantVocabulary& vocab) {
  SimpleEventLog log;
  for (const std::uint32_t index : rows) {
    log.add(vocab.variant_at(index));
  }
  return log;
}

}  // namespace travag
