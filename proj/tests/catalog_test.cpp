#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "toolplanner/catalog.hpp"

using namespace toolplanner;

namespace {

const std::filesystem::path fixtures{TOOLPLANNER_FIXTURES};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::io_error;
}

std::shared_ptr<ScriptedProvider> echo_provider() {
  auto p = std::make_shared<ScriptedProvider>("echo");
  p->on("\nAPI: ", [](const ChatRequest& r) {
    auto text = r.text();
    auto pos = text.find("\nAPI: ") + 6;
    return "summarize:" + text.substr(pos, text.find('\n', pos) - pos);
  });
  return p;
}

ToolDescriptor tool(std::string id, std::string docs = "GET /x", std::string description = "does x") {
  ToolDescriptor t;
  t.tool_id = id;
  t.name = std::move(id);
  t.docs = std::move(docs);
  t.description = std::move(description);
  return t;
}

}  // namespace

TEST(Ingest, EmptyCatalogGivesEmptyRegistry) {
  auto r = ingest_catalog(fixtures / "empty_catalog.json");
  EXPECT_EQ(r.size(), 0u);
}

TEST(Ingest, FixtureToolsAreRetrievableById) {
  auto r = ingest_catalog(fixtures / "catalog.json");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.get("GasPriceAPI").params.size(), 2u);
  EXPECT_EQ(r.get("getZipCodeByCity").source_category, "Location");
  EXPECT_FALSE(r.get("trackPackage").source_category.has_value());
  EXPECT_EQ(r.ids(), (std::vector<std::string>{"GasPriceAPI", "getZipCodeByCity", "trackPackage"}));
}

TEST(Ingest, TwoDistinctTools) {
  auto r = parse_catalog(
      R"([{"tool_id":"a","name":"a","docs":"d","description":"m","params":[]},
          {"tool_id":"b","name":"b","docs":"d","description":"m","params":[]}])",
      CatalogFormat::flat);
  EXPECT_EQ(r.size(), 2u);
  EXPECT_TRUE(r.contains("a"));
  EXPECT_TRUE(r.contains("b"));
}

TEST(Ingest, RepeatedIdIsRejected) {
  EXPECT_EQ(code_of([] { ingest_catalog(fixtures / "duplicate_catalog.json"); }), ErrorCode::duplicate_tool_id);
}

TEST(Ingest, MalformedFilesAreParseErrors) {
  EXPECT_EQ(code_of([] { parse_catalog("[{", CatalogFormat::flat); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_catalog(R"({"a":1})", CatalogFormat::flat); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_catalog(R"([{"tool_id":"a"}])", CatalogFormat::flat); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { parse_catalog(R"([{"tool_id":"a","name":"a","docs":"d","description":"m"}])",
                                       CatalogFormat::flat); }),
            ErrorCode::parse_error);
}

TEST(Ingest, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { ingest_catalog(fixtures / "no_such_catalog.json"); }), ErrorCode::io_error);
}

TEST(Ingest, ToolbenchShapeExpandsApis) {
  auto r = ingest_catalog(fixtures / "toolbench_catalog.json", CatalogFormat::toolbench);
  ASSERT_EQ(r.size(), 2u);
  auto t = r.get("TrackingMore.trackings_get");
  EXPECT_EQ(t.params.size(), 3u);
  EXPECT_TRUE(t.params[0].required);
  EXPECT_FALSE(t.params[2].required);
  EXPECT_EQ(t.source_category, "Logistics");
}

TEST(Registry, SerializeRoundTripIsFieldEqual) {
  auto r = ingest_catalog(fixtures / "catalog.json");
  r.set_explanation("GasPriceAPI", "Reports fuel prices.");
  auto back = parse_catalog(serialize_registry(r), CatalogFormat::flat);
  EXPECT_EQ(back, r);
  EXPECT_EQ(serialize_registry(back), serialize_registry(r));
}

TEST(Registry, RoundTripHoldsForRandomRegistries) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    ToolRegistry r;
    const int n = static_cast<int>(gen() % 6);
    for (int i = 0; i < n; ++i) {
      auto t = tool("t" + std::to_string(gen() % 1000) + "_" + std::to_string(i), "docs \"quoted\"\n" + std::to_string(i));
      if (gen() % 2) t.source_category = "cat";
      if (gen() % 2) t.explanation = "exp " + std::to_string(i);
      for (unsigned p = 0; p < gen() % 3; ++p) t.params.push_back({"p" + std::to_string(p), "string", gen() % 2 == 0});
      r.add(t);
    }
    EXPECT_EQ(parse_catalog(serialize_registry(r), CatalogFormat::flat), r);
  }
}

TEST(Registry, UnknownIdIsReported) {
  ToolRegistry r;
  EXPECT_EQ(code_of([&] { r.get("nope"); }), ErrorCode::unknown_tool);
}

TEST(Explain, ScriptedEchoUsesToolName) {
  auto p = echo_provider();
  auto t = tool("GasPriceAPI");
  EXPECT_EQ(explain_tool(t, *p), "summarize:GasPriceAPI");
  EXPECT_EQ(t.explanation, "summarize:GasPriceAPI");
}

TEST(Explain, EmptyDocsIsRejected) {
  auto p = echo_provider();
  auto t = tool("GasPriceAPI", "");
  EXPECT_EQ(code_of([&] { explain_tool(t, *p); }), ErrorCode::empty_docs);
  EXPECT_EQ(p->call_count(), 0u);
}

TEST(Explain, SecondCallIsCached) {
  auto p = echo_provider();
  ToolRegistry r;
  r.add(tool("GasPriceAPI"));
  auto first = explain_tool(r, "GasPriceAPI", *p);
  auto calls = p->call_count();
  EXPECT_EQ(explain_tool(r, "GasPriceAPI", *p), first);
  EXPECT_EQ(p->call_count(), calls);
}

TEST(Explain, ProviderErrorCarriesAttemptCount) {
  ScriptedProvider silent;
  auto t = tool("x");
  try {
    explain_tool(t, silent, RetryPolicy::immediate(3));
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_EQ(silent.call_count(), 3u);
  }
}

TEST(Explain, BackoffDoublesBetweenAttempts) {
  ScriptedProvider silent;
  std::vector<long> waits;
  RetryPolicy policy;
  policy.sleep = [&](std::chrono::milliseconds d) { waits.push_back(static_cast<long>(d.count())); };
  auto t = tool("x");
  EXPECT_THROW(explain_tool(t, silent, policy), ProviderError);
  EXPECT_EQ(waits, (std::vector<long>{1000, 2000}));
}

TEST(ExplainAll, ThreeToolsThreeCalls) {
  auto p = echo_provider();
  ToolRegistry r;
  for (auto id : {"a", "b", "c"}) r.add(tool(id));
  explain_all(r, *p, 1, RetryPolicy::immediate());
  EXPECT_EQ(p->call_count(), 3u);
  for (const auto& t : r.tools()) EXPECT_EQ(t.explanation, "summarize:" + t.tool_id);
}

TEST(ExplainAll, OneFailingToolIsListedOthersExplained) {
  auto p = std::make_shared<ScriptedProvider>();
  p->on("\nAPI: bad\n", [](const ChatRequest&) -> std::string { throw ProviderError("boom"); });
  p->on("\nAPI: ", "fine");
  ToolRegistry r;
  for (auto id : {"a", "bad", "c"}) r.add(tool(id));
  try {
    explain_all(r, *p, 2, RetryPolicy::immediate());
    FAIL();
  } catch (const PartialFailure& e) {
    EXPECT_EQ(e.failed_ids(), std::vector<std::string>{"bad"});
  }
  EXPECT_EQ(r.explanation("a"), "fine");
  EXPECT_EQ(r.explanation("c"), "fine");
  EXPECT_FALSE(r.explanation("bad").has_value());
}

TEST(ExplainAll, EmptyRegistryIsNoop) {
  auto p = echo_provider();
  ToolRegistry r;
  EXPECT_NO_THROW(explain_all(r, *p, 4));
  EXPECT_EQ(p->call_count(), 0u);
}

TEST(ExplainAll, ParallelismDoesNotChangeResults) {
  ToolRegistry a, b;
  for (int i = 0; i < 40; ++i) {
    a.add(tool("tool" + std::to_string(i)));
    b.add(tool("tool" + std::to_string(i)));
  }
  explain_all(a, *echo_provider(), 1);
  explain_all(b, *echo_provider(), 8);
  EXPECT_EQ(a, b);
}

TEST(ExplainAll, RejectsZeroParallelism) {
  ToolRegistry r;
  EXPECT_EQ(code_of([&] { explain_all(r, *echo_provider(), 0); }), ErrorCode::config_error);
}
