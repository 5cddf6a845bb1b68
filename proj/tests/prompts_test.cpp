#include <gtest/gtest.h>

#include <filesystem>

#include "toolplanner/planning.hpp"
#include "toolplanner/prompts.hpp"

using namespace toolplanner;

namespace {

const std::filesystem::path golden{TOOLPLANNER_GOLDEN};

std::string golden_prompt(const std::string& name) { return read_file(golden / "prompts" / (name + ".txt")); }

struct Published {
  PromptName name;
  const char* file;
};

const Published published[] = {
    {PromptName::plan_making, "plan_making"},
    {PromptName::plan_exploration, "plan_exploration"},
    {PromptName::in_toolkit_error, "in_toolkit_error"},
    {PromptName::cross_toolkit_error, "cross_toolkit_error"},
    {PromptName::final_output, "final_output"},
};

}  // namespace

TEST(PromptGolden, TemplatesMatchVerbatim) {
  for (const auto& p : published) EXPECT_EQ(std::string(prompt_template(p.name).text), golden_prompt(p.file)) << p.file;
}

TEST(PromptGolden, RenderedPromptsContainFixedText) {
  for (const auto& p : published) {
    auto tmpl = prompt_template(p.name);
    PromptContext ctx;
    for (const auto& ph : placeholders(tmpl.text)) ctx[ph] = "<" + ph + " value>";
    auto rendered = render_prompt(tmpl, ctx);
    // Every fixed segment between placeholders survives rendering.
    std::string text(tmpl.text);
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto open = text.find('[', pos);
      auto segment = text.substr(pos, open == std::string::npos ? std::string::npos : open - pos);
      EXPECT_NE(rendered.find(segment), std::string::npos) << p.file;
      if (open == std::string::npos) break;
      pos = text.find(']', open) + 1;
    }
  }
}

TEST(RenderPrompt, PlanMakingCarriesQueryAndPreamble) {
  auto out = render_prompt(prompt_template(PromptName::plan_making), {{"user query", "track package X"}});
  EXPECT_NE(out.find("track package X"), std::string::npos);
  EXPECT_EQ(out.rfind("You will be provided with the toolkits, the clustered names of toolkits", 0), 0u);
  EXPECT_EQ(out, golden_prompt("plan_making").substr(0, golden_prompt("plan_making").size() - 12) + "track package X");
}

TEST(RenderPrompt, MissingPlaceholder) {
  try {
    render_prompt(prompt_template(PromptName::in_toolkit_error), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_placeholder);
    EXPECT_NE(std::string(e.what()).find("previous API"), std::string::npos);
  }
}

TEST(RenderPrompt, NoPlaceholdersIsIdentity) {
  auto tmpl = prompt_template(PromptName::final_output);
  EXPECT_TRUE(placeholders(tmpl.text).empty());
  EXPECT_EQ(render_prompt(tmpl, {}), std::string(tmpl.text));
}

TEST(RenderPrompt, ValuesAreNotRescanned) {
  PromptTemplate t{PromptName::plan_making, "a [x] b"};
  EXPECT_EQ(render_prompt(t, {{"x", "[x]"}}), "a [x] b");
}

TEST(RenderPrompt, CompleteContextLeavesNoSlot) {
  for (int n = 0; n <= static_cast<int>(PromptName::intermediate_state); ++n) {
    auto tmpl = prompt_template(static_cast<PromptName>(n));
    PromptContext ctx;
    for (const auto& ph : placeholders(tmpl.text)) ctx[ph] = "v";
    auto out = render_prompt(tmpl, ctx);
    for (const auto& ph : placeholders(tmpl.text)) EXPECT_EQ(out.find("[" + ph + "]"), std::string::npos);
  }
}

TEST(RenderPrompt, PlanningPromptsEmbedTemplates) {
  Task task{"t1", "track package X"};
  std::vector<ToolkitOffer> offers{{"geo", "Geocoding."}, {"tracking", "Parcel tracking."}};
  auto p = plan_making_prompt(task, offers);
  EXPECT_EQ(p.find(render_prompt(prompt_template(PromptName::plan_making), {{"user query", task.query}})), 0u);
  EXPECT_NE(p.find("- tracking: Parcel tracking."), std::string::npos);

  ErrorLedger ledger;
  ledger.append({1, "geo", "geoA", FailureKind::invalid_input_parameters, "bad"});
  auto r = replan_prompt(task, {}, ledger, {{1, "geo"}}, offers);
  EXPECT_NE(r.find("Here are some previous candidate actions: geoA (geo, step 1): invalid_input_parameters - bad."),
            std::string::npos);
  EXPECT_NE(r.find("- step 1: geo"), std::string::npos);
}
