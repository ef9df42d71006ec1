#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "stmaml/tasks.hpp"

namespace stmaml {

/// One cleaned day of weather data. Station identity is deliberately
/// absent; a record alone cannot be traced back to its station.
///
/// Feature order (15 entries):
///   0 elevation [km]      5 max sustained wind   10 rain
///   1 sea-level pressure  6 wind gust            11 snow
///     [bar]               7 precipitation        12 hail
///   2 station pressure    8 snow depth           13 thunder
///     [bar]               9 fog                  14 tornado
///   3 visibility
///   4 mean wind speed
struct GsodRecord {
  double day_frac = 0.0;  // (day_of_year - 1) / (days_in_year - 1)
  std::array<double, 15> features{};
  double temp_f = 0.0;
};

struct StationYearFile {
  std::string id;
  std::vector<GsodRecord> records;

  /// Files with fewer than 40 valid days are ignored for task construction.
  bool eligible() const { return records.size() >= 40; }
};

/// Parses one NOAA GSOD station-year CSV. Header-name driven; only rows
/// with a valid TEMP entry are retained.
StationYearFile parse_gsod_csv(std::istream& in, const std::string& id = "");

using CsvRow = std::vector<std::pair<std::string, std::string>>;

/// Appendix pipeline for one parsed row: drop identifying/attribute
/// columns, date -> day fraction, FRSHTT -> six binaries, all-9s sentinels
/// and NaN -> 0.0, millibars -> bars, meters -> kilometers, TEMP split off
/// as the target.
GsodRecord transform_record(const CsvRow& row, std::size_t row_index);

/// Re-applies the sentinel zeroing to an already-transformed record.
/// Identity on clean data (sentinel patterns cannot survive the unit
/// conversions).
GsodRecord clean_record(GsodRecord rec);

/// d_in = 16: day_frac followed by the 15 features. Train and test rows
/// are disjoint; q is truncated when the file is short.
Task sample_weather_task(const StationYearFile& file, std::size_t shots, std::size_t queries,
                         std::mt19937_64& rng);

/// IDX image container (magic 0x00000803), big-endian dims.
/// Returns row-major images scaled to [0,1].
std::vector<Tensor> parse_idx_images(std::istream& in);
std::vector<std::uint8_t> parse_idx_labels(std::istream& in);
void write_idx_images(const std::vector<Tensor>& images, std::ostream& out);

}  // namespace stmaml
