#include "stmaml/gsod.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace stmaml {

namespace {

// Missing-value pattern per retained numeric column, in raw file units.
// GSOD encodes missing data as all 9s sized to the field width; the exact
// widths are documented per column in README.md.
struct ColumnSpec {
  const char* name;
  double sentinel;
  double unit_scale;  // applied after sentinel handling
  int feature_index;
};

constexpr ColumnSpec kNumericColumns[] = {
    {"ELEVATION", 9999.9, 1.0 / 1000.0, 0},  // m -> km
    {"SLP", 9999.9, 1.0 / 1000.0, 1},        // mb -> bar
    {"STP", 9999.9, 1.0 / 1000.0, 2},        // mb -> bar
    {"VISIB", 999.9, 1.0, 3},
    {"WDSP", 999.9, 1.0, 4},
    {"MXSPD", 999.9, 1.0, 5},
    {"GUST", 999.9, 1.0, 6},
    {"PRCP", 99.99, 1.0, 7},
    {"SNDP", 999.9, 1.0, 8},
};

constexpr double kTempSentinel = 9999.9;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

const std::string* find_field(const CsvRow& row, const char* name) {
  for (const auto& [k, v] : row)
    if (k == name) return &v;
  return nullptr;
}

double parse_or_zero(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return 0.0;
  try {
    double v = std::stod(t);
    return std::isnan(v) ? 0.0 : v;
  } catch (const std::exception&) {
    return 0.0;
  }
}

bool is_leap(int year) { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; }

int day_of_year(int year, int month, int day) {
  static const int cum[] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
  int doy = cum[month - 1] + day;
  if (month > 2 && is_leap(year)) ++doy;
  return doy;
}

double date_to_fraction(const std::string& raw, std::size_t row_index) {
  int y = 0, m = 0, d = 0;
  const std::string s = trim(raw);
  if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3 &&
      std::sscanf(s.c_str(), "%d/%d/%d", &m, &d, &y) != 3)
    throw std::runtime_error("transform_record: malformed date '" + s + "' at row " +
                             std::to_string(row_index));
  if (m < 1 || m > 12 || d < 1 || d > 31)
    throw std::runtime_error("transform_record: malformed date '" + s + "' at row " +
                             std::to_string(row_index));
  const int days = is_leap(y) ? 366 : 365;
  // Jan 1 -> 0.0, Dec 31 -> 1.0.
  return static_cast<double>(day_of_year(y, m, d) - 1) / static_cast<double>(days - 1);
}

}  // namespace

GsodRecord transform_record(const CsvRow& row, std::size_t row_index) {
  GsodRecord rec;
  const std::string* date = find_field(row, "DATE");
  if (!date) throw std::runtime_error("transform_record: missing mandatory column DATE");
  rec.day_frac = date_to_fraction(*date, row_index);

  for (const auto& col : kNumericColumns) {
    const std::string* f = find_field(row, col.name);
    if (!f)
      throw std::runtime_error(std::string("transform_record: missing mandatory column ") +
                               col.name);
    double v = parse_or_zero(*f);
    if (v == col.sentinel) v = 0.0;
    rec.features[col.feature_index] = v * col.unit_scale;
  }

  const std::string* frshtt = find_field(row, "FRSHTT");
  if (!frshtt) throw std::runtime_error("transform_record: missing mandatory column FRSHTT");
  std::string bits = trim(*frshtt);
  while (bits.size() < 6) bits.insert(bits.begin(), '0');
  for (int i = 0; i < 6; ++i) rec.features[9 + i] = bits[i] == '1' ? 1.0 : 0.0;

  const std::string* temp = find_field(row, "TEMP");
  if (!temp) throw std::runtime_error("transform_record: missing mandatory column TEMP");
  rec.temp_f = parse_or_zero(*temp);
  return rec;
}

GsodRecord clean_record(GsodRecord rec) {
  for (auto& v : rec.features)
    if (v == 99.99 || v == 999.9 || v == 9999.9) v = 0.0;
  return rec;
}

StationYearFile parse_gsod_csv(std::istream& in, const std::string& id) {
  StationYearFile file;
  file.id = id;
  std::string line;
  if (!std::getline(in, line)) return file;  // empty file: zero rows, ineligible
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  for (const char* required : {"DATE", "TEMP", "FRSHTT"})
    if (std::find(header.begin(), header.end(), required) == header.end())
      throw std::runtime_error(std::string("parse_gsod_csv: missing mandatory column ") + required);

  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    CsvRow row;
    for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i)
      row.emplace_back(header[i], fields[i]);

    const std::string* temp = find_field(row, "TEMP");
    const std::string t = temp ? trim(*temp) : "";
    if (t.empty()) continue;
    double tv;
    try {
      tv = std::stod(t);
    } catch (const std::exception&) {
      continue;
    }
    if (!std::isfinite(tv) || tv == kTempSentinel) continue;

    file.records.push_back(transform_record(row, row_index));
  }
  return file;
}

Task sample_weather_task(const StationYearFile& file, std::size_t shots, std::size_t queries,
                         std::mt19937_64& rng) {
  const std::size_t n = file.records.size();
  if (n < shots + 1)
    throw std::runtime_error("sample_weather_task: file has " + std::to_string(n) +
                             " rows, cannot form " + std::to_string(shots) +
                             " training rows plus a non-empty test split");
  const std::size_t q = std::min(queries, n - shots);

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);

  auto fill = [&](std::size_t begin, std::size_t count, std::vector<double>& xs,
                  std::vector<double>& ys) {
    for (std::size_t p = begin; p < begin + count; ++p) {
      const GsodRecord& r = file.records[idx[p]];
      xs.push_back(r.day_frac);
      xs.insert(xs.end(), r.features.begin(), r.features.end());
      ys.push_back(r.temp_f);
    }
  };
  std::vector<double> xtr, ytr, xte, yte;
  fill(0, shots, xtr, ytr);
  fill(shots, q, xte, yte);

  Task t;
  t.x_tr = Tensor::from({shots, 16}, std::move(xtr));
  t.y_tr = Tensor::from({shots, 1}, std::move(ytr));
  t.x_te = Tensor::from({q, 16}, std::move(xte));
  t.y_te = Tensor::from({q, 1}, std::move(yte));
  t.loss_kind = LossKind::SquaredError;
  return t;
}

// ---- IDX image container ----

namespace {
std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("idx: truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::uint32_t v, std::ostream& out) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}
}  // namespace

std::vector<Tensor> parse_idx_images(std::istream& in) {
  const std::uint32_t magic = read_be32(in);
  if (magic != 0x00000803)
    throw std::runtime_error("idx: bad image magic " + std::to_string(magic));
  const std::uint32_t count = read_be32(in);
  const std::uint32_t rows = read_be32(in);
  const std::uint32_t cols = read_be32(in);
  std::vector<Tensor> images;
  images.reserve(count);
  std::vector<unsigned char> buf(rows * cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("idx: truncated image data at image " + std::to_string(i));
    std::vector<double> v(buf.size());
    for (std::size_t j = 0; j < buf.size(); ++j) v[j] = buf[j] / 255.0;
    images.push_back(Tensor::from({rows, cols}, std::move(v)));
  }
  return images;
}

std::vector<std::uint8_t> parse_idx_labels(std::istream& in) {
  const std::uint32_t magic = read_be32(in);
  if (magic != 0x00000801)
    throw std::runtime_error("idx: bad label magic " + std::to_string(magic));
  const std::uint32_t count = read_be32(in);
  std::vector<std::uint8_t> labels(count);
  in.read(reinterpret_cast<char*>(labels.data()), count);
  if (!in) throw std::runtime_error("idx: truncated label data");
  return labels;
}

void write_idx_images(const std::vector<Tensor>& images, std::ostream& out) {
  if (images.empty()) throw std::runtime_error("write_idx_images: no images");
  const std::size_t rows = images[0].shape()[0], cols = images[0].shape()[1];
  write_be32(0x00000803, out);
  write_be32(static_cast<std::uint32_t>(images.size()), out);
  write_be32(static_cast<std::uint32_t>(rows), out);
  write_be32(static_cast<std::uint32_t>(cols), out);
  for (const auto& img : images) {
    for (double v : img.values()) {
      const double clamped = std::clamp(v, 0.0, 1.0);
      out.put(static_cast<char>(std::lround(clamped * 255.0)));
    }
  }
}

}  // namespace stmaml
