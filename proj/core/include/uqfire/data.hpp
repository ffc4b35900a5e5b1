#pragma once

// Dataset schema, the on-disk dataset format, lead-time windowing and
// year-based splitting.
//
// Dataset file: the first line is a JSON object
//   {"format":"uqfire-dataset","version":1,"days":55,
//    "dynamic_features":[...],"static_features":[...]}
// followed by one CSV line per record:
//   record_id,date,location,label,burned_area_ha,x,y,<static...>,<dynamic...>
// where x/y are empty when the record has no grid coordinates and the
// dynamic block is day-major (day t-55 first, all features per day).

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uqfire {

inline constexpr std::size_t kObservedDays = 55;
inline constexpr std::size_t kWindowDays = 45;
inline constexpr int kMinLead = 1;
inline constexpr int kMaxLead = 10;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Date {
  int year = 2000;
  unsigned month = 1;
  unsigned day = 1;

  static Date parse(std::string_view text);  // YYYY-MM-DD
  static Date from_day_of_year(int year, int day_of_year);
  std::string to_string() const;
  int day_of_year() const;  // 1-based
  bool operator==(const Date&) const = default;
};

struct GridCoord {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const GridCoord&) const = default;
};

struct SampleRecord {
  std::string record_id;
  /// kObservedDays x D_dyn, day-major; row 0 is day t-55, row 54 is day t-1.
  std::vector<double> dynamic;
  std::vector<double> statics;
  int label = 0;
  double burned_area_ha = 0.0;
  Date date;
  std::string location;
  std::optional<GridCoord> coords;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetSchema {
  std::vector<std::string> dynamic_features;
  std::vector<std::string> static_features;

  std::size_t dynamic_dim() const { return dynamic_features.size(); }
  std::size_t static_dim() const { return static_features.size(); }
  std::size_t window_features() const { return dynamic_dim() + static_dim(); }
  bool operator==(const DatasetSchema&) const = default;
};

struct Dataset {
  DatasetSchema schema;
  std::vector<SampleRecord> records;
};

/// Checks the record invariants against the schema; throws DataError naming
/// the record.
void validate_record(const SampleRecord& record, const DatasetSchema& schema);

Dataset read_dataset(std::istream& in);
void write_dataset(const Dataset& dataset, std::ostream& out);
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path);

/// One model input: kWindowDays rows of (dynamic features, static features).
struct WindowedInstance {
  std::string record_id;
  std::vector<double> features;  // kWindowDays x (D_dyn + D_sta)
  int label = 0;
  double weight = 1.0;
  int lead_time = 1;
};

/// First dynamic row used for lead n (row 0 = day t-55). The window covers
/// days t-n-44 ... t-n, i.e. rows window_first_row(n) ... window_first_row(n)+44.
constexpr std::size_t window_first_row(int lead) {
  return kObservedDays - static_cast<std::size_t>(lead) - (kWindowDays - 1);
}

using WeightFn = std::function<double(const SampleRecord&)>;

WindowedInstance make_window(const SampleRecord& record,
                             const DatasetSchema& schema, int lead,
                             const WeightFn& weight = {});
std::vector<WindowedInstance> make_windows(const Dataset& dataset, int lead,
                                           const WeightFn& weight = {});

struct YearRange {
  int first = 0;
  int last = -1;  // inclusive
  bool contains(int year) const { return year >= first && year <= last; }
  bool empty() const { return last < first; }
};

struct SplitSpec {
  YearRange train{2006, 2019};
  YearRange validation{2020, 2020};
  YearRange test{2021, 2022};

  /// Throws std::invalid_argument when ranges overlap.
  void validate() const;
};

struct DataSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::size_t excluded = 0;  // records whose year falls in no split
};

DataSplits split_by_year(const Dataset& dataset, const SplitSpec& spec);

/// Format a double so that parsing it back yields the identical value.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace uqfire
