#include "uqfire/data.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "uqfire/io_util.hpp"

namespace uqfire {

namespace {

constexpr std::string_view kFormatName = "uqfire-dataset";
constexpr int kFormatVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// Date

Date Date::parse(std::string_view text) {
  Date d;
  int month = 0, day = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw DataError("invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
  }
  auto num = [&](std::string_view part, int& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || p != part.data() + part.size()) {
      throw DataError("invalid date '" + std::string(text) + "'");
    }
  };
  num(text.substr(0, 4), d.year);
  num(text.substr(5, 2), month);
  num(text.substr(8, 2), day);
  d.month = static_cast<unsigned>(month);
  d.day = static_cast<unsigned>(day);
  const std::chrono::year_month_day ymd{std::chrono::year{d.year},
                                        std::chrono::month{d.month},
                                        std::chrono::day{d.day}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return d;
}

Date Date::from_day_of_year(int year, int day_of_year) {
  using namespace std::chrono;
  const sys_days first{std::chrono::year{year} / January / 1};
  const year_month_day ymd{first + days{day_of_year - 1}};
  return Date{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
              static_cast<unsigned>(ymd.day())};
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
  return buf;
}

int Date::day_of_year() const {
  using namespace std::chrono;
  const sys_days first{std::chrono::year{year} / January / 1};
  const sys_days here{std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day}};
  return static_cast<int>((here - first).count()) + 1;
}

// ---------------------------------------------------------------------------
// Number formatting

std::string format_double(double value) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw DataError("invalid number '" + std::string(text) + "'");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Validation and I/O

void validate_record(const SampleRecord& r, const DatasetSchema& schema) {
  const std::size_t want = kObservedDays * schema.dynamic_dim();
  if (r.dynamic.size() != want) {
    const std::size_t days = schema.dynamic_dim() ? r.dynamic.size() / schema.dynamic_dim() : 0;
    throw DataError("record '" + r.record_id + "': dynamic block has " +
                    std::to_string(r.dynamic.size()) + " values (" + std::to_string(days) +
                    " days), expected " + std::to_string(kObservedDays) + " days x " +
                    std::to_string(schema.dynamic_dim()) + " features");
  }
  if (r.statics.size() != schema.static_dim()) {
    throw DataError("record '" + r.record_id + "': expected " +
                    std::to_string(schema.static_dim()) + " static features, got " +
                    std::to_string(r.statics.size()));
  }
  for (const double v : r.dynamic) {
    if (!std::isfinite(v)) throw DataError("record '" + r.record_id + "': non-finite dynamic value");
  }
  for (const double v : r.statics) {
    if (!std::isfinite(v)) throw DataError("record '" + r.record_id + "': non-finite static value");
  }
  if (r.label != 0 && r.label != 1) {
    throw DataError("record '" + r.record_id + "': label must be 0 or 1");
  }
  if (!(r.burned_area_ha >= 0.0)) {
    throw DataError("record '" + r.record_id + "': burned area must be >= 0");
  }
  if (r.burned_area_ha > 0.0 && r.label != 1) {
    throw DataError("record '" + r.record_id + "': burned area > 0 requires label 1");
  }
  if (r.record_id.empty() || r.record_id.find_first_of(",\n") != std::string::npos ||
      r.location.find_first_of(",\n") != std::string::npos) {
    throw DataError("record '" + r.record_id + "': ids must be non-empty and comma-free");
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("dataset: missing JSON header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset line 1: invalid JSON header: ") + e.what());
  }
  if (header.value("format", "") != kFormatName) {
    throw DataError("dataset line 1: not a uqfire dataset header");
  }
  if (header.value("version", 0) != kFormatVersion) {
    throw DataError("dataset line 1: unsupported version");
  }
  if (header.value("days", 0) != static_cast<int>(kObservedDays)) {
    throw DataError("dataset line 1: days must be " + std::to_string(kObservedDays));
  }
  ds.schema.dynamic_features = header.at("dynamic_features").get<std::vector<std::string>>();
  ds.schema.static_features = header.at("static_features").get<std::vector<std::string>>();
  if (ds.schema.dynamic_features.empty()) {
    throw DataError("dataset line 1: at least one dynamic feature required");
  }

  const std::size_t n_static = ds.schema.static_dim();
  const std::size_t fixed = 7;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line, ',');
    auto fail = [&](const std::string& why) -> DataError {
      return DataError("dataset line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() < fixed + n_static) throw fail("too few fields");
    SampleRecord r;
    try {
      r.record_id = std::string(fields[0]);
      r.date = Date::parse(fields[1]);
      r.location = std::string(fields[2]);
      if (fields[3] != "0" && fields[3] != "1") throw fail("label must be 0 or 1");
      r.label = fields[3] == "1" ? 1 : 0;
      r.burned_area_ha = parse_double(fields[4]);
      if (fields[5].empty() != fields[6].empty()) throw fail("x and y must both be set or empty");
      if (!fields[5].empty()) r.coords = GridCoord{parse_double(fields[5]), parse_double(fields[6])};
      for (std::size_t k = 0; k < n_static; ++k) r.statics.push_back(parse_double(fields[fixed + k]));
      for (std::size_t k = fixed + n_static; k < fields.size(); ++k) {
        r.dynamic.push_back(parse_double(fields[k]));
      }
      validate_record(r, ds.schema);
    } catch (const DataError& e) {
      const std::string msg = e.what();
      if (msg.rfind("dataset line", 0) == 0) throw;
      throw fail(msg);
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  nlohmann::ordered_json header;
  header["format"] = kFormatName;
  header["version"] = kFormatVersion;
  header["days"] = kObservedDays;
  header["dynamic_features"] = ds.schema.dynamic_features;
  header["static_features"] = ds.schema.static_features;
  out << header.dump() << '\n';
  std::string row;
  for (const auto& r : ds.records) {
    validate_record(r, ds.schema);
    row.clear();
    row += r.record_id;
    row += ',';
    row += r.date.to_string();
    row += ',';
    row += r.location;
    row += ',';
    row += r.label ? '1' : '0';
    row += ',';
    row += format_double(r.burned_area_ha);
    row += ',';
    if (r.coords) {
      row += format_double(r.coords->x);
      row += ',';
      row += format_double(r.coords->y);
    } else {
      row += ',';
    }
    for (double v : r.statics) {
      row += ',';
      row += format_double(v);
    }
    for (double v : r.dynamic) {
      row += ',';
      row += format_double(v);
    }
    out << row << '\n';
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  write_dataset(ds, out);
  if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Windowing

WindowedInstance make_window(const SampleRecord& r, const DatasetSchema& schema,
                             int lead, const WeightFn& weight) {
  if (lead < kMinLead || lead > kMaxLead) {
    throw std::invalid_argument("lead time must be in [1,10], got " + std::to_string(lead));
  }
  const std::size_t d_dyn = schema.dynamic_dim();
  const std::size_t d_sta = schema.static_dim();
  const std::size_t width = d_dyn + d_sta;
  const std::size_t first = window_first_row(lead);
  WindowedInstance w;
  w.record_id = r.record_id;
  w.label = r.label;
  w.lead_time = lead;
  w.weight = weight ? weight(r) : 1.0;
  w.features.resize(kWindowDays * width);
  for (std::size_t t = 0; t < kWindowDays; ++t) {
    const double* src = r.dynamic.data() + (first + t) * d_dyn;
    double* dst = w.features.data() + t * width;
    std::copy_n(src, d_dyn, dst);
    std::copy_n(r.statics.data(), d_sta, dst + d_dyn);
  }
  return w;
}

std::vector<WindowedInstance> make_windows(const Dataset& ds, int lead,
                                           const WeightFn& weight) {
  if (lead < kMinLead || lead > kMaxLead) {
    throw std::invalid_argument("lead time must be in [1,10], got " + std::to_string(lead));
  }
  std::vector<WindowedInstance> out;
  out.reserve(ds.records.size());
  for (const auto& r : ds.records) out.push_back(make_window(r, ds.schema, lead, weight));
  return out;
}

// ---------------------------------------------------------------------------
// Splits

void SplitSpec::validate() const {
  const YearRange ranges[3] = {train, validation, test};
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const auto& a = ranges[i];
      const auto& b = ranges[j];
      if (a.empty() || b.empty()) continue;
      if (a.first <= b.last && b.first <= a.last) {
        throw std::invalid_argument("split year ranges overlap");
      }
    }
  }
}

DataSplits split_by_year(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  DataSplits s;
  s.train.schema = s.validation.schema = s.test.schema = ds.schema;
  for (const auto& r : ds.records) {
    const int y = r.date.year;
    if (spec.train.contains(y)) {
      s.train.records.push_back(r);
    } else if (spec.validation.contains(y)) {
      s.validation.records.push_back(r);
    } else if (spec.test.contains(y)) {
      s.test.records.push_back(r);
    } else {
      ++s.excluded;
    }
  }
  return s;
}

}  // namespace uqfire
