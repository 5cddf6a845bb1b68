#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "toolplanner/catalog.hpp"
#include "toolplanner/embedding.hpp"

using namespace toolplanner;

namespace {

const std::filesystem::path fixtures{TOOLPLANNER_FIXTURES};

EmbeddingVector v(std::vector<double> xs) { return EmbeddingVector(std::move(xs)); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::io_error;
}

}  // namespace

TEST(LoadEmbeddings, TwoVectorsOfFourDims) {
  auto set = parse_embeddings("dims=4 count=2 provider=t\na\t1,0,0,0\nb\t0,1,0.5,-2\n");
  EXPECT_EQ(set.size(), 2u);
  EXPECT_EQ(set.dims(), 4u);
  EXPECT_EQ(set.provider_tag(), "t");
  EXPECT_EQ(set.at("b")[3], -2.0);
}

TEST(LoadEmbeddings, ShortRowIsDimMismatch) {
  EXPECT_EQ(code_of([] { load_embeddings(fixtures / "embeddings_short_row.tsv"); }), ErrorCode::dim_mismatch);
}

TEST(LoadEmbeddings, NanIsNonFinite) {
  EXPECT_EQ(code_of([] { load_embeddings(fixtures / "embeddings_nan.tsv"); }), ErrorCode::non_finite_value);
  EXPECT_EQ(code_of([] { parse_embeddings("dims=2 count=1\na\t1e400,0\n"); }), ErrorCode::non_finite_value);
}

TEST(LoadEmbeddings, HeaderAndRowProblemsAreParseErrors) {
  EXPECT_EQ(code_of([] { parse_embeddings(""); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_embeddings("dims=2\na\t1,0\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_embeddings("dims=2 count=2\na\t1,0\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_embeddings("dims=2 count=1\na 1,0\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_embeddings("dims=2 count=1\na\t1,x\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_embeddings("dims=2 count=2\na\t1,0\na\t0,1\n"); }), ErrorCode::parse_error);
}

TEST(LoadEmbeddings, FixtureMatchesFixtureCatalog) {
  auto set = load_embeddings(fixtures / "embeddings.tsv");
  auto registry = ingest_catalog(fixtures / "catalog.json");
  EXPECT_EQ(set.size(), registry.size());
  EXPECT_NO_THROW(set.check_against(registry));
  ToolRegistry other;
  EXPECT_EQ(code_of([&] { set.check_against(other); }), ErrorCode::unknown_tool);
}

TEST(LoadEmbeddings, SaveThenLoadIsBitExact) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  EmbeddingSet set(7, "random");
  for (int i = 0; i < 25; ++i) {
    std::vector<double> xs(7);
    for (auto& x : xs) x = u(gen) * std::pow(10.0, static_cast<int>(gen() % 30) - 15);
    set.add("tool" + std::to_string(i), v(xs));
  }
  auto path = std::filesystem::temp_directory_path() / "toolplanner_embedding_roundtrip.tsv";
  save_embeddings(set, path);
  auto back = load_embeddings(path);
  EXPECT_EQ(back, set);
  std::filesystem::remove(path);
}

TEST(Cosine, IdenticalOrthogonalAntiparallel) {
  EXPECT_DOUBLE_EQ(cosine_similarity(v({1, 0}), v({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(v({1, 0}), v({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(v({1, 0}), v({-1, 0})), -1.0);
}

TEST(Cosine, ZeroVectorAndDimMismatch) {
  EXPECT_EQ(code_of([] { cosine_similarity(v({0, 0}), v({1, 0})); }), ErrorCode::zero_vector);
  EXPECT_EQ(code_of([] { cosine_similarity(v({1, 0, 0}), v({1, 0})); }), ErrorCode::dim_mismatch);
}

TEST(Cosine, SelfSimilarityAndSymmetryOnRandomVectors) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = n(gen);
    for (auto& x : b) x = n(gen);
    EXPECT_NEAR(cosine_similarity(v(a), v(a)), 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(cosine_similarity(v(a), v(b)), cosine_similarity(v(b), v(a)));
    const double c = cosine_similarity(v(a), v(b));
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(TestEmbedder, Deterministic) {
  EXPECT_EQ(test_embedder("a", 8, 7), test_embedder("a", 8, 7));
}

TEST(TestEmbedder, DistinctTextsDiffer) {
  EXPECT_LT(cosine_similarity(test_embedder("a", 8, 7), test_embedder("b", 8, 7)), 1.0);
  EXPECT_NE(test_embedder("a", 8, 7), test_embedder("a", 8, 8));
}

TEST(TestEmbedder, UnitNormAndNonDegenerate) {
  std::vector<EmbeddingVector> vs;
  for (int i = 0; i < 100; ++i) {
    vs.push_back(test_embedder("text-" + std::to_string(i * 7919), 16, 3));
    EXPECT_NEAR(vs.back().norm(), 1.0, 1e-9);
  }
  std::set<double> sims;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) sims.insert(cosine_similarity(vs[i], vs[j]));
  }
  EXPECT_GT(sims.size(), 1u);
}

TEST(TestEmbedder, RejectsOneDimension) {
  EXPECT_EQ(code_of([] { test_embedder("a", 1, 0); }), ErrorCode::config_error);
}

TEST(EmbeddingText, NeedsExplanation) {
  ToolDescriptor t;
  t.tool_id = "x";
  t.description = "desc";
  EXPECT_EQ(code_of([&] { embedding_text(t); }), ErrorCode::missing_explanation);
  t.explanation = "explains";
  EXPECT_EQ(embedding_text(t), "explains");
  EXPECT_EQ(embedding_text(t, true), "explains\ndesc");
}

TEST(EmbeddingText, RegistryEmbeddingIsOneVectorPerTool) {
  auto registry = ingest_catalog(fixtures / "catalog.json");
  for (const auto& id : registry.ids()) registry.set_explanation(id, "explains " + id);
  auto set = embed_registry_with_test_embedder(registry, 12, 1);
  EXPECT_EQ(set.size(), 3u);
  EXPECT_EQ(set.dims(), 12u);
  auto back = parse_embeddings(serialize_embeddings(set));
  for (const auto& [id, vec] : back.vectors()) EXPECT_NEAR(cosine_similarity(vec, vec), 1.0, 1e-6);
}
