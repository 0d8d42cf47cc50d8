// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "lags/error.hpp"
#include "lags/kv_config.hpp"

using lags::KeyValueConfig;

TEST_CASE("parses keys, comments and later overrides") {
  const auto cfg = KeyValueConfig::parse("# comment\n a = 1 \nname = desk # trailing\n\na = 2\nlist = 3, 4,5\n");
  CHECK(cfg.get_int("a").value() == 2);
  CHECK(cfg.get_string("name").value() == "desk");
  CHECK(cfg.get_int_list("list").value() == std::vector<long long>{3, 4, 5});
  CHECK_FALSE(cfg.get_double("missing").has_value());
}

TEST_CASE("decibel suffixes convert to linear units") {
  const auto cfg = KeyValueConfig::parse("gain_db = -30\npower_dbm = 20\nnoise_dbm = -100\n");
  CHECK(cfg.get_ratio("gain").value() == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(cfg.get_power("power").value() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(cfg.get_power("noise").value() == doctest::Approx(1e-13).epsilon(1e-12));
}

TEST_CASE("both linear and decibel forms of one key is rejected") {
  const auto cfg = KeyValueConfig::parse("gain = 0.001\ngain_db = -30\n");
  CHECK_THROWS_AS(cfg.get_ratio("gain"), lags::ConfigError);
}

TEST_CASE("malformed values raise configuration errors") {
  CHECK_THROWS_AS(KeyValueConfig::parse("novalue\n"), lags::ConfigError);
  const auto cfg = KeyValueConfig::parse("n = abc\nx = 1.5\n");
  CHECK_THROWS_AS(cfg.get_int("n"), lags::ConfigError);
  CHECK_THROWS_AS(cfg.get_int("x"), lags::ConfigError);
  CHECK_THROWS_AS(cfg.get_double("n"), lags::ConfigError);
}

TEST_CASE("configuration errors map to the usage exit code") {
  CHECK(lags::ConfigError("x").exit_code() == 2);
  CHECK(lags::DataError("x").exit_code() == 3);
  CHECK(lags::NumericalError("x").exit_code() == 4);
}
