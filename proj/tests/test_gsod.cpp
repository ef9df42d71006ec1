#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "stmaml/gsod.hpp"

using namespace stmaml;

namespace {

const char* kHeader =
    "STATION,DATE,LATITUDE,LONGITUDE,ELEVATION,NAME,TEMP,TEMP_ATTRIBUTES,DEWP,DEWP_ATTRIBUTES,"
    "SLP,SLP_ATTRIBUTES,STP,STP_ATTRIBUTES,VISIB,VISIB_ATTRIBUTES,WDSP,WDSP_ATTRIBUTES,MXSPD,"
    "GUST,MAX,MAX_ATTRIBUTES,MIN,MIN_ATTRIBUTES,PRCP,PRCP_ATTRIBUTES,SNDP,FRSHTT";

std::string row(const std::string& date, const std::string& temp, const std::string& elev = "100.0",
                const std::string& slp = "1013.2", const std::string& stp = "990.0",
                const std::string& visib = "6.2", const std::string& wdsp = "4.1",
                const std::string& mxspd = "9.9", const std::string& gust = "999.9",
                const std::string& prcp = "0.12", const std::string& sndp = "999.9",
                const std::string& frshtt = "010000") {
  return "72511399999," + date + ",40.0,-75.0," + elev + ",\"SOME STATION, US\"," + temp + ",24," +
         "50.0,24," + slp + ",24," + stp + ",24," + visib + ",24," + wdsp + ",24," + mxspd + "," +
         gust + ",70.0,,50.0,," + prcp + ",G," + sndp + "," + frshtt;
}

StationYearFile parse(const std::string& body, const std::string& id = "test") {
  std::istringstream in(body);
  return parse_gsod_csv(in, id);
}

CsvRow row_fields(const std::string& date = "2020-03-01") {
  return {
      {"DATE", date},    {"ELEVATION", "100.0"}, {"SLP", "1013.2"}, {"STP", "990.0"},
      {"VISIB", "6.2"},  {"WDSP", "4.1"},        {"MXSPD", "9.9"},  {"GUST", "999.9"},
      {"PRCP", "0.12"},  {"SNDP", "999.9"},      {"FRSHTT", "010000"}, {"TEMP", "55.4"},
  };
}

}  // namespace

TEST_CASE("single row transforms field by field") {
  GsodRecord r = transform_record(row_fields(), 0);
  // 2020 is a leap year: March 1 is day 61, fraction 60/365.
  CHECK(r.day_frac == doctest::Approx(60.0 / 365.0).epsilon(1e-15));
  CHECK(r.features[0] == doctest::Approx(0.1).epsilon(1e-15));     // 100 m -> km
  CHECK(r.features[1] == doctest::Approx(1.0132).epsilon(1e-15));  // 1013.2 mb -> bar
  CHECK(r.features[2] == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(r.features[3] == doctest::Approx(6.2));
  CHECK(r.features[4] == doctest::Approx(4.1));
  CHECK(r.features[5] == doctest::Approx(9.9));
  CHECK(r.features[6] == 0.0);  // GUST sentinel 999.9
  CHECK(r.features[7] == doctest::Approx(0.12));
  CHECK(r.features[8] == 0.0);  // SNDP sentinel 999.9
  // FRSHTT "010000": rain only.
  CHECK(r.features[9] == 0.0);
  CHECK(r.features[10] == 1.0);
  for (int i = 11; i < 15; ++i) CHECK(r.features[i] == 0.0);
  CHECK(r.temp_f == doctest::Approx(55.4));
}

TEST_CASE("per-column sentinels become zero") {
  CsvRow f = row_fields();
  for (auto& [k, v] : f) {
    if (k == "ELEVATION" || k == "SLP" || k == "STP") v = "9999.9";
    if (k == "VISIB" || k == "WDSP" || k == "MXSPD" || k == "GUST" || k == "SNDP") v = "999.9";
    if (k == "PRCP") v = "99.99";
  }
  GsodRecord r = transform_record(f, 0);
  for (int i = 0; i < 9; ++i) CHECK(r.features[i] == 0.0);
}

TEST_CASE("sentinel patterns are column specific") {
  CsvRow f = row_fields();
  for (auto& [k, v] : f) {
    // 999.9 is a legal elevation (meters) and a legal pressure reading; only
    // the nine-nines width assigned to that column counts as missing.
    if (k == "ELEVATION") v = "999.9";
    if (k == "VISIB") v = "99.99";
  }
  GsodRecord r = transform_record(f, 0);
  CHECK(r.features[0] == doctest::Approx(0.9999).epsilon(1e-12));
  CHECK(r.features[3] == doctest::Approx(99.99));
}

TEST_CASE("dates parse in both layouts and respect leap years") {
  auto with_date = [&](const std::string& d) {
    CsvRow f = row_fields(d);
    return transform_record(f, 0).day_frac;
  };
  CHECK(with_date("2019-01-01") == 0.0);
  CHECK(with_date("2019-12-31") == 1.0);
  CHECK(with_date("2020-12-31") == 1.0);
  CHECK(with_date("2019-03-01") == doctest::Approx(59.0 / 364.0).epsilon(1e-15));
  CHECK(with_date("2020-03-01") == doctest::Approx(60.0 / 365.0).epsilon(1e-15));
  CHECK(with_date("03/01/2020") == doctest::Approx(60.0 / 365.0).epsilon(1e-15));
  CHECK(with_date("1900-03-01") == doctest::Approx(59.0 / 364.0).epsilon(1e-15));  // not leap
  CHECK(with_date("2000-03-01") == doctest::Approx(60.0 / 365.0).epsilon(1e-15));  // leap

  CHECK_THROWS_WITH_AS(with_date("not-a-date"), doctest::Contains("malformed date"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(with_date("2020-13-01"), doctest::Contains("malformed date"),
                       std::runtime_error);
}

TEST_CASE("short FRSHTT strings are left padded") {
  CsvRow f = row_fields();
  for (auto& [k, v] : f)
    if (k == "FRSHTT") v = "11";  // thunder + tornado after padding to 000011
  GsodRecord r = transform_record(f, 0);
  for (int i = 9; i < 13; ++i) CHECK(r.features[i] == 0.0);
  CHECK(r.features[13] == 1.0);
  CHECK(r.features[14] == 1.0);
}

TEST_CASE("cleaning is idempotent on transformed records") {
  GsodRecord r = transform_record(row_fields(), 0);
  GsodRecord once = clean_record(r);
  GsodRecord twice = clean_record(once);
  for (int i = 0; i < 15; ++i) {
    CHECK(once.features[i] == r.features[i]);
    CHECK(twice.features[i] == once.features[i]);
  }
}

TEST_CASE("csv parsing") {
  SUBCASE("three-row fixture, quoted comma in station name") {
    std::string body = std::string(kHeader) + "\n" + row("2021-01-01", "30.1") + "\n" +
                       row("2021-01-02", "31.5") + "\n" + row("2021-01-03", "29.0") + "\n";
    StationYearFile f = parse(body);
    REQUIRE(f.records.size() == 3);
    CHECK(f.id == "test");
    CHECK(f.records[0].day_frac == 0.0);
    CHECK(f.records[1].temp_f == doctest::Approx(31.5));
    CHECK_FALSE(f.eligible());
  }

  SUBCASE("rows with missing temperature are dropped") {
    std::string body = std::string(kHeader) + "\n" + row("2021-01-01", "9999.9") + "\n" +
                       row("2021-01-02", "") + "\n" + row("2021-01-03", "29.0") + "\n";
    StationYearFile f = parse(body);
    REQUIRE(f.records.size() == 1);
    CHECK(f.records[0].temp_f == doctest::Approx(29.0));
  }

  SUBCASE("empty file yields an ineligible station") {
    StationYearFile f = parse("");
    CHECK(f.records.empty());
    CHECK_FALSE(f.eligible());
  }

  SUBCASE("missing mandatory column is an error") {
    CHECK_THROWS_WITH_AS(parse("STATION,DATE,FRSHTT\nx,2021-01-01,000000\n"),
                         doctest::Contains("TEMP"), std::runtime_error);
  }

  SUBCASE("eligibility threshold sits at forty days") {
    auto make = [&](int days) {
      std::string body = std::string(kHeader) + "\n";
      for (int d = 1; d <= days; ++d) {
        char date[16];
        std::snprintf(date, sizeof date, "2021-03-%02d", (d - 1) % 28 + 1);
        body += row(date, "30.0") + "\n";
      }
      return parse(body);
    };
    CHECK_FALSE(make(39).eligible());
    CHECK(make(40).eligible());
  }
}

TEST_CASE("weather episodes") {
  std::string body = std::string(kHeader) + "\n";
  for (int d = 1; d <= 28; ++d) {
    char date[16];
    std::snprintf(date, sizeof date, "2021-02-%02d", d);
    body += row(date, std::to_string(20.0 + d)) + "\n";
  }
  StationYearFile f = parse(body);
  REQUIRE(f.records.size() == 28);

  SUBCASE("split sizes and disjointness") {
    std::mt19937_64 rng(1);
    Task t = sample_weather_task(f, 10, 100, rng);
    CHECK(t.d_in() == 16);
    CHECK(t.shots() == 10);
    CHECK(t.queries() == 18);  // truncated to the remaining rows
    // Temperatures are distinct by construction, so they identify rows.
    std::set<double> seen;
    for (double v : t.y_tr.values()) seen.insert(v);
    for (double v : t.y_te.values()) seen.insert(v);
    CHECK(seen.size() == 28);
  }

  SUBCASE("day fraction leads the feature vector") {
    std::mt19937_64 rng(2);
    Task t = sample_weather_task(f, 5, 5, rng);
    for (std::size_t i = 0; i < t.shots(); ++i) {
      double df = t.x_tr.values()[16 * i];
      CHECK(df >= 31.0 / 364.0);  // February of a non-leap year
      CHECK(df <= 58.0 / 364.0);
      CHECK(t.x_tr.values()[16 * i + 2] == doctest::Approx(1.0132));  // SLP in bars
    }
  }

  SUBCASE("too few rows for the requested shots") {
    std::mt19937_64 rng(3);
    CHECK_THROWS_WITH_AS(sample_weather_task(f, 28, 1, rng), doctest::Contains("28"),
                         std::runtime_error);
  }
}

TEST_CASE("idx containers") {
  SUBCASE("image round trip") {
    std::vector<Tensor> imgs;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> v(784);
      for (std::size_t i = 0; i < 784; ++i) v[i] = ((i * 7 + k * 13) % 256) / 255.0;
      imgs.push_back(Tensor::from({28, 28}, std::move(v)));
    }
    std::stringstream ss;
    write_idx_images(imgs, ss);
    // 16-byte header + 3 * 784 pixels.
    CHECK(ss.str().size() == 16 + 3 * 784);
    auto back = parse_idx_images(ss);
    REQUIRE(back.size() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(back[k].shape() == Shape{28, 28});
      for (std::size_t i = 0; i < 784; ++i)
        CHECK(back[k].values()[i] == doctest::Approx(imgs[k].values()[i]).epsilon(1e-12));
    }
  }

  SUBCASE("labels") {
    std::stringstream ss;
    const unsigned char hdr[8] = {0, 0, 8, 1, 0, 0, 0, 4};
    ss.write(reinterpret_cast<const char*>(hdr), 8);
    for (unsigned char c : {7, 0, 255, 42}) ss.put(static_cast<char>(c));
    auto labels = parse_idx_labels(ss);
    REQUIRE(labels.size() == 4);
    CHECK(labels[0] == 7);
    CHECK(labels[2] == 255);
  }

  SUBCASE("bad magic and truncation are detected") {
    std::stringstream ss;
    const unsigned char hdr[8] = {0, 0, 8, 1, 0, 0, 0, 4};
    ss.write(reinterpret_cast<const char*>(hdr), 8);
    CHECK_THROWS_WITH_AS(parse_idx_images(ss), doctest::Contains("magic"), std::runtime_error);

    std::stringstream ts;
    const unsigned char ihdr[16] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 28, 0, 0, 0, 28};
    ts.write(reinterpret_cast<const char*>(ihdr), 16);
    ts.put(0);  // far fewer than 784 pixels
    CHECK_THROWS_WITH_AS(parse_idx_images(ts), doctest::Contains("truncated"), std::runtime_error);
  }
}
