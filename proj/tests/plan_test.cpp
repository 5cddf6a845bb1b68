#include <gtest/gtest.h>

#include "toolplanner/plan.hpp"

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

}  // namespace

TEST(ParsePlan, AngleBracketToolkits) {
  auto p = parse_plan("Step 1: <geo> find address\nStep 2: <tracking> track");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.steps[0], (PlanStep{1, "geo", "find address"}));
  EXPECT_EQ(p.steps[1], (PlanStep{2, "tracking", "track"}));
}

TEST(ParsePlan, EmptyTextIsRejected) {
  EXPECT_EQ(code_of([] { parse_plan(""); }), ErrorCode::plan_parse_error);
  EXPECT_EQ(code_of([] { parse_plan("I cannot help with that."); }), ErrorCode::plan_parse_error);
}

TEST(ParsePlan, GapInNumberingIsRejected) {
  EXPECT_EQ(code_of([] { parse_plan("Step 1: geo a\nStep 3: tracking b"); }), ErrorCode::plan_parse_error);
  EXPECT_EQ(code_of([] { parse_plan("Step 2: geo a"); }), ErrorCode::plan_parse_error);
}

TEST(ParsePlan, CompactForm) {
  auto p = parse_plan("1:geo 2:tracking");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.toolkit_sequence(), (std::vector<std::string>{"geo", "tracking"}));
  EXPECT_EQ(parse_plan("1: geo find it 2: tracking follow it").steps[0].goal, "find it");
}

TEST(ParsePlan, ProseAroundStepsBecomesRationale) {
  auto p = parse_plan("First we locate.\n**Step 1:** geo locate\nstep 2. tracking go\nDone.");
  EXPECT_EQ(p.size(), 2u);
  EXPECT_EQ(p.rationale, "First we locate.\nDone.");
}

TEST(ParsePlan, TextRoundTrip) {
  Plan p;
  p.steps = {{1, "tk0", "a b"}, {2, "tk3", ""}, {3, "tk1", "c"}};
  auto back = parse_plan(p.to_text());
  EXPECT_EQ(back.steps, p.steps);
}

TEST(ValidatePlan, UnknownToolkit) {
  auto p = parse_plan("Step 1: nonexistent x");
  EXPECT_EQ(code_of([&] { validate_plan(p, {"geo"}); }), ErrorCode::unknown_toolkit);
  EXPECT_NO_THROW(validate_plan(parse_plan("Step 1: geo x"), {"geo"}));
}

// Accepted plans always satisfy the plan invariants, whatever the input.
TEST(ParsePlan, FuzzedInputsNeverYieldInvalidPlans) {
  const std::vector<std::string> pieces = {"Step 1: geo a\n", "Step 2: tk b\n", "Step 3: <x> c\n", "step 2: y\n",
                                           "1:geo ",          "2:tk ",          "noise\n",         "Step : z\n",
                                           "Step 9999999999: q\n", "3:w\n",     "\n"};
  Rng rng(17);
  int accepted = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::string text;
    const auto n = rng.below(6);
    for (std::size_t i = 0; i < n; ++i) text += pieces[rng.below(pieces.size())];
    Plan p;
    try {
      p = parse_plan(text);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::plan_parse_error);
      continue;
    }
    ++accepted;
    ASSERT_FALSE(p.steps.empty()) << text;
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_EQ(p.steps[i].index, static_cast<int>(i + 1)) << text;
      EXPECT_FALSE(p.steps[i].toolkit.empty()) << text;
    }
  }
  EXPECT_GT(accepted, 0);
}
