#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "emmp/io.hpp"
#include "support/fixtures.hpp"
#include "support/random_model.hpp"

using namespace emmp;

namespace {

Error error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an emmp::Error";
  return Error(ErrorCode::SchemaError, "none");
}

ModelSpec mixed_spec() {
  ModelSpec s;
  s.variables = {{"S", 2}, {"O", 3}};
  s.parameters = {{"A", CategoricalRows{2, 3}, DirichletRows{{1, 2, 1, 1, 1, 3}}},
                  {"mu", GaussianMean{2, 0.5}, GaussianPrior{{0.0, 1.0}, {2.0, 2.0}}},
                  {"g", Grid{{-1.0, 0.0, 2.5}}, GridLogPrior{{-INFINITY, 0.0, -1.5}}}};
  s.factors = {{"f", {"S", "O"},
                {TabularTerm{{1, 2, 3, 4, 5, 6}}, CategoricalTerm{"A", {"S"}, {"O"}}, GaussianEmissionTerm{"mu", "S", "y"},
                 GridTerm{"g", std::vector<double>(18, 0.25)}}}};
  s.observed_variables = {"O"};
  s.observed_slots = {"y"};
  s.clamps = {{"O", 2}};
  s.slot_values = {{"y", 0.1}};
  return s;
}

}  // namespace

TEST(ModelFile, RoundTripIsByteExact) {
  const std::string text = io::serialize_model(mixed_spec());
  const ModelSpec parsed = io::parse_model_spec(text);
  EXPECT_EQ(parsed, mixed_spec());
  EXPECT_EQ(io::serialize_model(parsed), text);
}

TEST(ModelFile, ShippedModelsRoundTrip) {
  for (const char* name : {"desk_hmm.model.json", "bernoulli.model.json", "bernoulli_map.model.json", "gaussian_chain.model.json"}) {
    const std::string text = io::detail::read_file(support::data_path(name));
    EXPECT_EQ(io::serialize_model(io::parse_model(text)), text) << name;
  }
}

TEST(ModelFile, RandomModelsRoundTrip) {
  support::ModelGenerator gen(3);
  for (int i = 0; i < 30; ++i) {
    const ModelSpec s = gen.model({}).spec;
    const std::string text = io::serialize_model(s);
    EXPECT_EQ(io::parse_model_spec(text), s);
    EXPECT_EQ(io::serialize_model(io::parse_model_spec(text)), text);
  }
}

TEST(ModelFile, UnknownFieldIsNamed) {
  auto doc = nlohmann::ordered_json::parse(io::serialize_model(mixed_spec()));
  doc["parameters"][1]["family"]["foo"] = 1;
  const Error e = error_of([&] { io::parse_model_spec(doc.dump()); });
  EXPECT_EQ(e.code(), ErrorCode::SchemaError);
  EXPECT_NE(std::string(e.what()).find("foo"), std::string::npos);
  EXPECT_NE(std::string(e.what()).find("$.parameters[1].family"), std::string::npos);
}

TEST(ModelFile, VersionAndSyntaxErrors) {
  auto doc = nlohmann::ordered_json::parse(io::serialize_model(mixed_spec()));
  doc["version"] = 2;
  EXPECT_EQ(error_of([&] { io::parse_model_spec(doc.dump()); }).code(), ErrorCode::SchemaError);
  EXPECT_EQ(error_of([] { io::parse_model_spec("{ not json"); }).code(), ErrorCode::SchemaError);
  EXPECT_EQ(error_of([] { io::parse_model_spec(R"({"version": 1, "variables": 3})"); }).code(), ErrorCode::SchemaError);
}

TEST(ModelFile, SemanticErrorsSurfaceFromBuild) {
  ModelSpec s = mixed_spec();
  s.factors[0].edges.push_back("ghost");
  EXPECT_EQ(error_of([&] { io::parse_model(io::serialize_model(s)); }).code(), ErrorCode::DanglingReference);
}

TEST(DataFile, ParsesRowsAndMissingCells) {
  const ModelSpec schema = mixed_spec();
  const auto rows = io::parse_data("O,y\n1,0.5\n,-2\n2,\n", schema);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].discrete.at("O"), 1u);
  EXPECT_EQ(rows[0].continuous.at("y"), 0.5);
  EXPECT_FALSE(rows[1].discrete.count("O"));
  EXPECT_EQ(rows[1].continuous.at("y"), -2.0);
  EXPECT_FALSE(rows[2].continuous.count("y"));
}

TEST(DataFile, Errors) {
  const ModelSpec schema = mixed_spec();
  EXPECT_EQ(error_of([&] { io::parse_data("Z\n1\n", schema); }).code(), ErrorCode::UnknownVariable);
  EXPECT_EQ(error_of([&] { io::parse_data("O\nx\n", schema); }).code(), ErrorCode::InvalidValue);
  EXPECT_EQ(error_of([&] { io::parse_data("O\n-1\n", schema); }).code(), ErrorCode::InvalidValue);
  EXPECT_EQ(error_of([&] { io::parse_data("y\n1.5q\n", schema); }).code(), ErrorCode::InvalidValue);
  EXPECT_EQ(error_of([&] { io::parse_data("O,y\n1\n", schema); }).code(), ErrorCode::SchemaError);
  EXPECT_EQ(error_of([&] { io::bind_data(schema, io::parse_data("O\n7\n", schema)); }).code(), ErrorCode::OutOfRangeObservation);
}

TEST(DataFile, BindingStacksRows) {
  const ModelSpec base = io::load_model_spec(support::data_path("bernoulli.model.json"));
  const auto rows = io::parse_data(io::detail::read_file(support::data_path("bernoulli.csv")), base);
  ASSERT_EQ(rows.size(), 4u);
  const ModelGraph g = io::bind_data(base, rows);
  EXPECT_EQ(g.num_nodes(), 4u);
  EXPECT_EQ(g.num_parameters(), 1u);
  const ModelGraph one = io::bind_data(base, {rows[0]});
  EXPECT_EQ(one.num_nodes(), 1u);
}

TEST(ThetaFile, RoundTrip) {
  const ModelGraph g = build_graph(mixed_spec());
  const ParamAssignment theta{{"A", CategoricalValue{2, 3, {0.2, 0.3, 0.5, 0.1, 0.1, 0.8}}},
                              {"mu", GaussianValue{{-0.125, 3.0000000000000004}}},
                              {"g", GridValue{2}}};
  const std::string text = io::serialize_theta(theta);
  EXPECT_EQ(io::parse_theta(text, g), theta);
  EXPECT_EQ(io::serialize_theta(io::parse_theta(text, g)), text);
}

TEST(ThetaFile, PartialFileFillsDefaultsAndBadValuesAreRejected) {
  const ModelGraph g = build_graph(mixed_spec());
  const auto theta = io::parse_theta(R"({"version": 1, "parameters": [{"id": "g", "value": {"index": 1}}]})", g);
  EXPECT_EQ(std::get<GridValue>(theta.at("g")).index, 1u);
  EXPECT_EQ(theta.at("A"), default_assignment(g).at("A"));
  EXPECT_THROW(io::parse_theta(R"({"version": 1, "parameters": [{"id": "nope", "value": {"index": 1}}]})", g), Error);
  EXPECT_THROW(io::parse_theta(R"({"version": 1, "parameters": [{"id": "A", "value": {"rows": [[1, 1, 1], [0, 0, 1]]}}]})", g), Error);
}

TEST(Trace, FormatIsStable) {
  const ModelGraph g = build_graph(mixed_spec());
  EMTrace t;
  t.records.push_back({0, {{"A", CategoricalValue{2, 3, {0.2, 0.3, 0.5, 0.1, 0.1, 0.8}}}, {"mu", GaussianValue{{0.0, 1.0}}}, {"g", GridValue{2}}}, -1.25, {}});
  const std::string text = io::format_trace(g, t);
  EXPECT_EQ(text,
            "iteration,log_f,A[0][0],A[0][1],A[0][2],A[1][0],A[1][1],A[1][2],mu[0],mu[1],g\n"
            "0,-1.25,0.20000000000000001,0.29999999999999999,0.5,0.10000000000000001,0.10000000000000001,"
            "0.80000000000000004,0,1,2.5\n");
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(io::exit_code(ErrorCode::SchemaError), 2);
  EXPECT_EQ(io::exit_code(ErrorCode::NotATree), 2);
  EXPECT_EQ(io::exit_code(ErrorCode::DegenerateEvidence), 3);
  EXPECT_EQ(io::exit_code(ErrorCode::PriorZero), 3);
  EXPECT_EQ(io::exit_code(ErrorCode::TooLarge), 4);
}
