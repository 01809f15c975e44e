#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "cityprobe/error.hpp"
#include "cityprobe/parsing.hpp"

using namespace cityprobe;

namespace {

FeatureSchema two_features() {
  FeatureSchema schema;
  schema.features = {{"a", "first"}, {"b", "second"}};
  return schema;
}

}  // namespace

TEST_CASE("extract_json_object") {
  CHECK(extract_json_object("{\"zone\":\"X\",\"pred\":5}") == "{\"zone\":\"X\",\"pred\":5}");
  CHECK(extract_json_object("Here you go:\n```json\n{\"a\":1}\n```") == "{\"a\":1}");
  CHECK(extract_json_object("prose before {\"a\": {\"nested\": 1}} prose after") ==
        "{\"a\": {\"nested\": 1}}");
  CHECK(extract_json_object("{\"s\": \"braces }{ inside strings\"} trailing") ==
        "{\"s\": \"braces }{ inside strings\"}");

  try {
    extract_json_object("no braces at all");
    FAIL("expected NoJsonFound");
  } catch (const Error& e) {
    CHECK(e.code() == errc::no_json_found);
  }
}

TEST_CASE("extract_json_object never crashes on arbitrary bytes") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 500; ++round) {
    std::string garbage;
    size_t len = rng() % 128;
    for (size_t i = 0; i < len; ++i) garbage += static_cast<char>(rng() % 256);
    try {
      auto out = extract_json_object(garbage);
      CHECK(!out.empty());
      CHECK(out.front() == '{');
      CHECK(out.back() == '}');
    } catch (const Error& e) {
      CHECK(e.code() == errc::no_json_found);
    }
  }
}

TEST_CASE("parse_direct reads numbers and tolerant strings") {
  auto out = parse_direct("{\"zone\":\"Tianjin, China\",\"pred\":50}");
  CHECK(out.zone == "Tianjin, China");
  CHECK(out.pred == 50.0);

  out = parse_direct("{\"zone\":\"A\",\"pred\":\"1,234.5 tonnes\"}");
  CHECK(out.pred == doctest::Approx(1234.5));

  out = parse_direct("{\"zone\":\"A\",\"pred\":\"24,654.91 t\"}");
  CHECK(out.pred == doctest::Approx(24654.91));

  out = parse_direct("{\"pred\":\"45%\"}");
  CHECK(out.pred == 45.0);
  CHECK(out.zone.empty());
}

TEST_CASE("parse_direct error paths") {
  try {
    parse_direct("{\"zone\":\"A\"}");
    FAIL("expected MissingKey");
  } catch (const Error& e) {
    CHECK(e.code() == errc::missing_key);
  }
  try {
    parse_direct("{\"pred\":\"5-10\"}");
    FAIL("expected Unparseable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::unparseable);
  }
  try {
    parse_direct("{\"pred\":\"3 to 5\"}");
    FAIL("expected Unparseable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::unparseable);
  }
  CHECK_THROWS_AS(parse_direct("not json"), Error);
}

TEST_CASE("parse_features clamps out-of-scale values and flags them") {
  auto schema = two_features();
  auto out = parse_features("{\"a\":5.5,\"b\":6.0}", schema);
  CHECK(out.values.at("a") == 5.5);
  CHECK(out.values.at("b") == 6.0);
  CHECK(out.clamped.empty());

  out = parse_features("{\"a\":12.0,\"b\":-3}", schema);
  CHECK(out.values.at("a") == 10.0);
  CHECK(out.values.at("b") == 0.0);
  CHECK(out.clamped.count("a") == 1);
  CHECK(out.clamped.count("b") == 1);

  try {
    parse_features("{\"a\":5.5}", schema);
    FAIL("expected MissingKey");
  } catch (const Error& e) {
    CHECK(e.code() == errc::missing_key);
  }
}

TEST_CASE("parsed values never leave the schema scale") {
  std::mt19937_64 rng(5);
  auto schema = two_features();
  for (int round = 0; round < 100; ++round) {
    double a = -50.0 + 100.0 * (static_cast<double>(rng() % 1000) / 1000.0);
    double b = -50.0 + 100.0 * (static_cast<double>(rng() % 1000) / 1000.0);
    nlohmann::json doc{{"a", a}, {"b", b}};
    auto out = parse_features(doc.dump(), schema);
    for (const auto& [k, v] : out.values) {
      CHECK(v >= schema.scale_low);
      CHECK(v <= schema.scale_high);
    }
  }
}

TEST_CASE("round trip: serializing parsed answers and reparsing is identity") {
  std::mt19937_64 rng(17);
  auto schema = two_features();
  for (int round = 0; round < 50; ++round) {
    double a = 10.0 * (static_cast<double>(rng() % 1001) / 1000.0);
    double b = 10.0 * (static_cast<double>(rng() % 1001) / 1000.0);
    nlohmann::json doc{{"a", a}, {"b", b}};
    auto parsed = parse_features(doc.dump(), schema);
    nlohmann::json again{{"a", parsed.values.at("a")}, {"b", parsed.values.at("b")}};
    auto reparsed = parse_features(again.dump(), schema);
    CHECK(reparsed.values == parsed.values);
  }

  ParsedDirect direct{"Zone Name", 123.456};
  nlohmann::json doc{{"zone", direct.zone}, {"pred", direct.pred}};
  auto out = parse_direct(doc.dump());
  CHECK(out.zone == direct.zone);
  CHECK(out.pred == direct.pred);
}

TEST_CASE("parse_schema normalizes names and enforces the count") {
  std::string raw = R"({"features": [
    {"name": "Traffic Volume", "description": "How heavy the traffic is"},
    {"name": "Population Density", "description": "People per square mile"}
  ]})";
  auto schema = parse_schema(raw, 2);
  REQUIRE(schema.features.size() == 2);
  CHECK(schema.features[0].name == "traffic_volume");
  CHECK(schema.features[1].name == "population_density");
  CHECK(schema.scale_low == 0.0);
  CHECK(schema.scale_high == 10.0);

  try {
    parse_schema(raw, 5);
    FAIL("expected WrongCount");
  } catch (const Error& e) {
    CHECK(e.code() == errc::wrong_count);
  }

  std::string dup = R"({"features": [
    {"name": "Economy"}, {"name": "economy"}
  ]})";
  try {
    parse_schema(dup, 2);
    FAIL("expected DuplicateName");
  } catch (const Error& e) {
    CHECK(e.code() == errc::duplicate_name);
  }
}

TEST_CASE("snake_case normalization") {
  CHECK(to_snake_case("Traffic Volume") == "traffic_volume");
  CHECK(to_snake_case("GDP") == "gdp");
  CHECK(to_snake_case("Cost of Living & Quality-of-Life") == "cost_of_living_quality_of_life");
  CHECK(to_snake_case("  already_snake  ") == "already_snake");
}
