#include <gtest/gtest.h>

#include <regex>

#include "toolplanner/planning.hpp"

using namespace toolplanner;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::io_error;
}

std::shared_ptr<ScriptedProvider> replying(std::string text) {
  auto p = std::make_shared<ScriptedProvider>();
  p->on("", std::move(text));
  return p;
}

const std::vector<ToolkitOffer> geo_tracking = {{"geo", "Resolves addresses."}, {"tracking", "Tracks parcels."}};

ErrorLedger one_failure(int step, const std::string& toolkit) {
  ErrorLedger l;
  l.append({step, toolkit, toolkit + "_api", FailureKind::invalid_input_parameters, "rejected"});
  return l;
}

// Offered toolkits in prompt order, minus those excluded at `step`.
std::vector<std::string> offered_except(const std::string& prompt, int step) {
  std::vector<std::string> out, excluded;
  static const std::regex offer(R"(^- ([A-Za-z_]+): )");
  static const std::regex excl(R"(^- step (\d+): ([A-Za-z_]+)$)");
  for (const auto& line : split_lines(prompt)) {
    std::smatch m;
    if (std::regex_match(line, m, excl)) {
      if (std::stoi(m[1].str()) == step) excluded.push_back(m[2].str());
    } else if (std::regex_search(line, m, offer)) {
      out.push_back(m[1].str());
    }
  }
  std::erase_if(out, [&](const std::string& s) { return std::find(excluded.begin(), excluded.end(), s) != excluded.end(); });
  return out;
}

}  // namespace

TEST(MakePlan, ScriptedTwoStepPlan) {
  auto plan = make_plan({"t", "track my parcel"}, geo_tracking, ProviderRoles::same(replying("1:geo 2:tracking")));
  EXPECT_EQ(plan.toolkit_sequence(), (std::vector<std::string>{"geo", "tracking"}));
  EXPECT_EQ(plan.origin, PlanOrigin::initial);
}

TEST(MakePlan, UnknownToolkitIsRejected) {
  EXPECT_EQ(code_of([] {
              make_plan({"t", "q"}, geo_tracking, ProviderRoles::same(replying("Step 1: nonexistent find")));
            }),
            ErrorCode::unknown_toolkit);
}

TEST(MakePlan, PreconditionsAndParseErrors) {
  auto roles = ProviderRoles::same(replying("Step 1: geo x"));
  EXPECT_EQ(code_of([&] { make_plan({"t", " "}, geo_tracking, roles); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([&] { make_plan({"t", "q"}, {}, roles); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([&] { make_plan({"t", "q"}, geo_tracking, ProviderRoles{}); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { make_plan({"t", "q"}, geo_tracking, ProviderRoles::same(replying("no idea"))); }),
            ErrorCode::plan_parse_error);
}

TEST(MakePlan, UsesThePlanningRole) {
  auto planner = replying("Step 1: geo x");
  auto behavior = std::make_shared<ScriptedProvider>();
  make_plan({"t", "q"}, geo_tracking, ProviderRoles{planner, behavior});
  EXPECT_EQ(planner->call_count(), 1u);
  EXPECT_EQ(behavior->call_count(), 0u);
}

TEST(MakePlan, ProviderErrorsSurface) {
  auto silent = std::make_shared<ScriptedProvider>();
  EXPECT_EQ(code_of([&] { make_plan({"t", "q"}, geo_tracking, ProviderRoles::same(silent)); }),
            ErrorCode::provider_error);
}

// The package-tracking case: detect the carrier first, then track.
TEST(MakePlan, CarrierDetectionThenTracking) {
  const std::vector<ToolkitOffer> offers = {
      {"carrier_detection", "The APIs in the Toolkit detect the carrier associated with a given tracking number."},
      {"package_tracking",
       "The APIs in the Toolkit provide detailed tracking information for a package using the tracking number."},
  };
  auto planner = std::make_shared<ScriptedProvider>();
  planner->on("detect the carrier", [](const ChatRequest& r) {
    // Picks toolkits by the verbs in the request, in the order the query needs them.
    const auto text = r.text();
    std::string out = "The carrier must be known before tracking.\n";
    int n = 0;
    if (text.find("carrier_detection") != std::string::npos) out += "Step " + std::to_string(++n) + ": carrier_detection detect the carrier\n";
    if (text.find("package_tracking") != std::string::npos) out += "Step " + std::to_string(++n) + ": package_tracking track the package\n";
    return out;
  });
  Task task{"case", "My friend sent a package with the tracking number YT2003521266065328. I need to track this "
                    "package and get the tracking information. Additionally, detect the carrier for this tracking "
                    "number."};
  auto plan = make_plan(task, offers, ProviderRoles::same(planner));
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_EQ(plan.toolkit_at(1), "carrier_detection");
  EXPECT_EQ(plan.toolkit_at(2), "package_tracking");
  EXPECT_EQ(plan.rationale, "The carrier must be known before tracking.");
}

TEST(Replan, SwapsExcludedToolkitKeepsOtherSteps) {
  Plan prior = parse_plan("Step 1: geo a\nStep 2: tracking b");
  const std::vector<ToolkitOffer> offers = {{"geo", "g"}, {"geo2", "g2"}, {"tracking", "t"}};
  auto plan = replan({"t", "q"}, {prior}, one_failure(1, "geo"), {{1, "geo"}}, offers,
                     ProviderRoles::same(replying("Step 1: geo2 a\nStep 2: tracking b")));
  EXPECT_EQ(plan.toolkit_sequence(), (std::vector<std::string>{"geo2", "tracking"}));
  EXPECT_EQ(plan.steps[1], prior.steps[1]);
  EXPECT_EQ(plan.origin, PlanOrigin::replanned);
}

TEST(Replan, ExcludedToolkitEveryTimeIsNoAlternative) {
  auto p = replying("Step 1: geo a\nStep 2: tracking b");
  Plan prior = parse_plan("Step 1: geo a\nStep 2: tracking b");
  EXPECT_EQ(code_of([&] {
              replan({"t", "q"}, {prior}, one_failure(1, "geo"), {{1, "geo"}}, geo_tracking, ProviderRoles::same(p));
            }),
            ErrorCode::no_alternative_plan);
  EXPECT_EQ(p->call_count(), static_cast<std::size_t>(1 + replan_regenerations));
}

TEST(Replan, RegenerationCanRecover) {
  auto p = std::make_shared<ScriptedProvider>();
  p->on("The previous answer reused an excluded toolkit", "Step 1: tracking b");
  p->on("", "Step 1: geo a");
  Plan prior = parse_plan("Step 1: geo a");
  auto plan = replan({"t", "q"}, {prior}, one_failure(1, "geo"), {{1, "geo"}}, geo_tracking, ProviderRoles::same(p));
  EXPECT_EQ(plan.toolkit_at(1), "tracking");
  EXPECT_EQ(p->call_count(), 2u);
}

TEST(Replan, ExclusionIsPerStep) {
  // geo is excluded only at step 2, so using it at step 1 is fine.
  Plan prior = parse_plan("Step 1: tracking a\nStep 2: geo b");
  auto plan = replan({"t", "q"}, {prior}, one_failure(2, "geo"), {{2, "geo"}}, geo_tracking,
                     ProviderRoles::same(replying("Step 1: geo a\nStep 2: tracking b")));
  EXPECT_EQ(plan.toolkit_at(1), "geo");
}

TEST(Replan, PromptCarriesLedgerAndExclusions) {
  auto p = std::make_shared<ScriptedProvider>();
  std::string seen;
  p->on("", [&](const ChatRequest& r) {
    seen = r.text();
    return std::string("Step 1: tracking x");
  });
  replan({"t", "where is it"}, {parse_plan("Step 1: geo a")}, one_failure(1, "geo"), {{1, "geo"}}, geo_tracking,
         ProviderRoles::same(p));
  EXPECT_NE(seen.find("geo_api (geo, step 1): invalid_input_parameters - rejected"), std::string::npos);
  EXPECT_NE(seen.find("revert to the previous node, revise the plan for this step"), std::string::npos);
  EXPECT_NE(seen.find("Previous plan 1:\nStep 1: geo a"), std::string::npos);
  EXPECT_NE(seen.find("Excluded toolkits:\n- step 1: geo"), std::string::npos);
}

TEST(Replan, NeedsExclusionAndErrors) {
  auto roles = ProviderRoles::same(replying("Step 1: geo"));
  EXPECT_EQ(code_of([&] { replan({"t", "q"}, {}, one_failure(1, "geo"), {}, geo_tracking, roles); }),
            ErrorCode::config_error);
  EXPECT_EQ(code_of([&] { replan({"t", "q"}, {}, ErrorLedger{}, {{1, "geo"}}, geo_tracking, roles); }),
            ErrorCode::config_error);
}

// The picnic case: every mapping API fails, so the replanned first step uses
// another toolkit that can fetch map tiles.
TEST(Replan, ExhaustedMappingToolkitSwitchesToAnotherMapSource) {
  const std::vector<ToolkitOffer> offers = {
      {"mapping", "Fetch static map tiles with language labels."},
      {"open_maps", "Fetch map tiles from open map data."},
      {"places", "Find places of interest such as grocery stores and farmers markets."},
  };
  auto planner = std::make_shared<ScriptedProvider>();
  planner->on("", [](const ChatRequest& r) {
    const auto text = r.text();
    std::string tile_source;
    for (const auto& name : offered_except(text, 1)) {
      if (name != "places") {
        tile_source = name;
        break;
      }
    }
    return "Step 1: " + tile_source + " fetch a map tile with English labels\nStep 2: places find grocery stores\n"
           "Step 3: places find farmers markets";
  });
  ErrorLedger ledger;
  for (auto api : {"google_static", "mapbox_static", "mapbox_maps"}) {
    ledger.append({1, "mapping", api, FailureKind::invalid_input_parameters, "Failed to fetch the map tile"});
  }
  Plan prior = parse_plan("Step 1: mapping tile\nStep 2: places grocery\nStep 3: places markets");
  auto plan = replan({"picnic", "map tile and nearby stores"}, {prior}, ledger, {{1, "mapping"}}, offers,
                     ProviderRoles::same(planner));
  EXPECT_EQ(plan.toolkit_at(1), "open_maps");
  EXPECT_EQ(plan.toolkit_at(2), "places");
}

// Random planner outputs: anything replan accepts respects every exclusion
// and the plan invariants.
TEST(Replan, AcceptedPlansNeverViolateExclusions) {
  const std::vector<ToolkitOffer> offers = {{"a", ""}, {"b", ""}, {"c", ""}};
  Rng rng(99);
  int accepted = 0;
  for (int trial = 0; trial < 400; ++trial) {
    auto p = std::make_shared<ScriptedProvider>();
    p->on("", [&rng](const ChatRequest&) {
      std::string out;
      const auto n = 1 + rng.below(3);
      for (std::size_t i = 1; i <= n; ++i) out += "Step " + std::to_string(i) + ": " + std::string(1, "abcd"[rng.below(4)]) + "\n";
      return out;
    });
    std::vector<StepExclusion> excl = {{static_cast<int>(1 + rng.below(3)), std::string(1, "abc"[rng.below(3)])}};
    try {
      auto plan = replan({"t", "q"}, {}, one_failure(excl[0].step, excl[0].toolkit), excl, offers,
                         ProviderRoles::same(p));
      ++accepted;
      EXPECT_FALSE(violates(plan, excl));
      EXPECT_NO_THROW(validate_plan(plan, offered_labels(offers)));
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == ErrorCode::unknown_toolkit || e.code() == ErrorCode::no_alternative_plan);
    }
  }
  EXPECT_GT(accepted, 50);
}

TEST(CountingProvider, CountsAndForwards) {
  auto inner = replying("ok");
  CountingProvider c(inner);
  EXPECT_EQ(c.complete(ChatRequest::user("x")), "ok");
  EXPECT_EQ(c.complete(ChatRequest::user("y")), "ok");
  EXPECT_EQ(c.calls(), 2u);
  EXPECT_EQ(c.kind(), ProviderKind::scripted);
}
