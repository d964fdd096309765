#include <hydromarket/system_model.hpp>

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

using namespace hydromarket;

namespace {

const char* kMinimal = R"({
  "horizon": {"stages": 1},
  "demand": [[5]],
  "plants": {"thermals": [{"id": "G1", "cost": 50, "capacity": 10}]}
})";

std::string cascade(const std::string& a_down, const std::string& b_down) {
  return std::string(R"({"horizon": {"stages": 1}, "demand": [[1]], "plants": {"hydros": [
    {"id": "A", "max_turbine": 1, "max_storage": 1, "max_generation": 1, "downstream": )") +
         a_down + R"(},
    {"id": "B", "max_turbine": 1, "max_storage": 1, "max_generation": 1, "downstream": )" + b_down + R"(}]}})";
}

}  // namespace

TEST(SystemModel, MinimalFile) {
  const auto sys = parse_system(kMinimal);
  ASSERT_EQ(sys.agents.size(), 1u);
  EXPECT_EQ(sys.horizon.stages, 1);
  EXPECT_EQ(sys.thermals.size(), 1u);
  EXPECT_DOUBLE_EQ(sys.horizon.demand[0][0], 5);
  EXPECT_DOUBLE_EQ(sys.deficit_cost(), 500);
}

TEST(SystemModel, CascadeCycleRejected) {
  try {
    parse_system(cascade("\"B\"", "\"A\""));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("cascade cycle"), std::string::npos);
  }
}

TEST(SystemModel, UpstreamIsInverseOfDownstream) {
  const auto sys = parse_system(cascade("\"B\"", "null"));
  for (std::size_t i = 0; i < sys.hydros.size(); ++i)
    for (std::size_t j = 0; j < sys.hydros.size(); ++j) {
      const auto& m = sys.upstream[i];
      const bool in_m = std::find(m.begin(), m.end(), static_cast<int>(j)) != m.end();
      EXPECT_EQ(in_m, sys.downstream_index[j] == static_cast<int>(i));
    }
}

TEST(SystemModel, ParseErrorHasLineContext) {
  try {
    parse_system("{\n  \"horizon\": {\n  oops }");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(SystemModel, InvariantViolationsNamed) {
  EXPECT_THROW(parse_system(R"({"horizon": {"stages": 1}, "demand": [[-1]]})"), ValidationError);
  EXPECT_THROW(parse_system(R"({"horizon": {"stages": 1, "blocks": [0.5, 0.4]}, "demand": [[1, 1]]})"),
               ValidationError);
  try {
    parse_system(R"({"horizon": {"stages": 1}, "demand": [[1]],
      "plants": {"thermals": [{"id": "T", "cost": 1, "capacity": 1}]},
      "agents": [{"id": "a", "thermals": ["T"]}, {"id": "b", "thermals": ["T"]}]})");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'T'"), std::string::npos);
  }
  try {
    parse_system(R"({"horizon": {"stages": 1}, "demand": [[1]],
      "plants": {"hydros": [{"id": "H", "max_turbine": 1, "max_storage": 1, "max_generation": 1, "initial_storage": 2}]}})");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'H'"), std::string::npos);
  }
}

TEST(SystemModel, MissingFileNamesPath) {
  try {
    load_system("/nonexistent/sys.json");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/sys.json"), std::string::npos);
  }
}

TEST(SystemModel, AgentPartition) {
  const auto sys = parse_system(R"({"horizon": {"stages": 1}, "demand": [[1]],
    "plants": {"thermals": [{"id": "A", "cost": 1, "capacity": 1}, {"id": "B", "cost": 2, "capacity": 1},
                            {"id": "C", "cost": 3, "capacity": 1}]},
    "agents": [{"id": "1", "thermals": ["A", "C"]}, {"id": "2", "kind": "price_maker", "thermals": ["B"]}]})");
  const auto v1 = agent_partition(sys, "1");
  const auto v2 = agent_partition(sys, "2");
  EXPECT_EQ(v1.thermals.size(), 2u);
  EXPECT_EQ(v1.other_thermals.size(), 1u);
  EXPECT_EQ(v2.thermals.size(), 1u);
  EXPECT_EQ(v2.other_thermals.size(), 2u);
  EXPECT_EQ(sys.agents[1].kind, AgentKind::PriceMaker);
  EXPECT_THROW(agent_partition(sys, "9"), std::invalid_argument);

  const auto single = parse_system(kMinimal);
  const auto all = agent_partition(single, 0);
  EXPECT_TRUE(all.other_thermals.empty());
  EXPECT_EQ(all.thermals.size(), 1u);
}

TEST(SystemModel, RoundTripJson) {
  const auto sys = parse_system(R"({"horizon": {"stages": 2, "blocks": [0.25, 0.75], "scenarios": 3},
    "demand": [[1, 2], [3, 4]],
    "plants": {"hydros": [{"id": "H", "production_factor": 2, "max_turbine": 5, "max_storage": 9,
                           "max_generation": 10, "initial_storage": 4}],
               "renewables": [{"id": "W", "generation": [[[1, 2, 3], [4, 5, 6]], [[0, 0, 0], [1, 1, 1]]]}]},
    "inflow_model": {"hydros": [{"hydro": "H", "ar": [[0.5], [0.2]], "residual": {"type": "lognormal", "mean": 3, "std": 1},
                                 "history": [2]}]}})");
  EXPECT_DOUBLE_EQ(sys.renewables[0].at(0, 1, 2), 6);
  EXPECT_DOUBLE_EQ(sys.renewable_total(1, 1, 0), 1);
  const auto again = system_from_json(system_to_json(sys));
  EXPECT_EQ(system_to_json(again).dump(), system_to_json(sys).dump());
  EXPECT_DOUBLE_EQ(again.inflow.hydros[0].coefficients(1)[0], 0.2);
}
