#include "doctest.h"
#include "property_suites.hpp"

TEST_CASE("generated-input properties") {
  for (const auto& suite : properties::all(250, 20240501)) {
    INFO(suite.name << ": " << suite.first_failure);
    CHECK(suite.cases >= 200);
    CHECK(suite.ok());
  }
}
