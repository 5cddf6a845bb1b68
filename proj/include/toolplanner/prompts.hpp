#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "toolplanner/error.hpp"

namespace toolplanner {

enum class PromptName {
  plan_making,
  plan_exploration,
  in_toolkit_error,
  cross_toolkit_error,
  final_output,
  // Auxiliary prompts for calls that have no published template.
  tool_explanation,
  toolkit_description,
  react_step,
  dfsdt_path,
  intermediate_state,
};

struct PromptTemplate {
  PromptName name;
  std::string_view text;
};

namespace prompt_text {

inline constexpr std::string_view plan_making =
    "You will be provided with the toolkits, the clustered names of toolkits, and the descriptions of the "
    "function of the toolkits.Your task is to interact with API toolkits to construct user queries and use the "
    "functionalities of the toolkits to answer the queries. You need to identify the most suitable toolkits based "
    "on the user's requirements, and then outline your solution plan based on the toolkits you've "
    "selected.Remember, your goal is not to directly answer the query but to identify the toolkits and provide a "
    "solution plan. Here is the user's question: [user query]";

inline constexpr std::string_view plan_exploration =
    "Let's begin executing this step of the plan. You will be provided with documentation for all the APIs "
    "contained within this step's toolkit, along with the parameters required to call the APIs. Please randomly "
    "select one API from this toolkit to satisfy the user's requirements, or select the specified API if the user "
    "has indicated one. Consult the usage documentation for this API, then make the API call and provide the "
    "response. Afterward, briefly analyze the current status and determine the next step. If the API call is "
    "successful, proceed to the next step as planned. If it fails, invoke another API from the toolkit. If all "
    "APIs in the toolkit have been tried and failed, revert to the previous node and revise this step. Keep the "
    "analysis concise, ideally no more than three sentences.";

inline constexpr std::string_view in_toolkit_error =
    "This is not your first attempt at this task. The previously called APIs have all failed, and you are now in "
    "the intermediate state of an In-Toolkit plan exploration. Before you decide on new actions, I will first show "
    "you the actions you have taken previously for this state. Then, you must develop an action that is different "
    "from all these previous actions. Here are some previous candidate actions: [previous API]. Now, please "
    "analyze the current state and then call another API within the same toolkit where the previously failed APIs "
    "are located.";

inline constexpr std::string_view cross_toolkit_error =
    "This is not your first attempt at this task. All the APIs planned within the previous toolkits have failed, "
    "and you are now in the intermediate state of a Cross-Toolkit plan exploration. Before you decide on new "
    "actions, I will first show you the actions you have taken previously for this state. Then, you must develop "
    "an action that is different from all these previous actions. Here are some previous candidate actions: "
    "[previous API, previous toolkit]. Now, please revert to the previous node, revise the plan for this step, and "
    "use a different toolkit.";

inline constexpr std::string_view final_output =
    "If you believe you have obtained the result capable of answering the task, please invoke this function to "
    "provide the final answer. Remember: the only part displayed to the user is the final answer, so it should "
    "contain sufficient information.";

inline constexpr std::string_view tool_explanation =
    "Here is the documentation and the description of an API. Write a brief explanation of its functionality in "
    "one or two sentences.\nAPI: [api name]\nDocumentation: [documentation]\nDescription: [description]";

inline constexpr std::string_view toolkit_description =
    "The following APIs were grouped into one toolkit because their functionality is similar. Write a short "
    "functionality description of the toolkit as a whole.\nAPI explanations:\n[explanations]";

inline constexpr std::string_view react_step =
    "Answer the user's question by calling one API at a time. After each call you will see its result. Choose the "
    "next API from the list below, or finish when the question is answered.\nQuestion: [user query]\nAPIs:\n"
    "[api list]\nObservations so far:\n[observations]\nRespond with `Action: <api_id>` and `Action Input: <json>`, "
    "or `Finish: <answer>`.";

inline constexpr std::string_view dfsdt_path =
    "Plan a sequence of API calls that answers the user's question. Each step calls exactly one API from the list "
    "below. Avoid the calls that already failed.\nQuestion: [user query]\nAPIs:\n[api list]\nFailed calls:\n"
    "[error history]";

inline constexpr std::string_view intermediate_state =
    "Summarize the state reached after this step of the plan in one sentence, using the question, the toolkits "
    "used so far, the earlier states and results, and the documentation of the API that was called.\nQuestion: "
    "[user query]\nToolkits:\n[toolkits]\nEarlier states:\n[states]\nEarlier results:\n[results]\nAPI: "
    "[api name]\nDocumentation: [documentation]\nResult: [result]";

}  // namespace prompt_text

inline PromptTemplate prompt_template(PromptName name) {
  switch (name) {
    case PromptName::plan_making: return {name, prompt_text::plan_making};
    case PromptName::plan_exploration: return {name, prompt_text::plan_exploration};
    case PromptName::in_toolkit_error: return {name, prompt_text::in_toolkit_error};
    case PromptName::cross_toolkit_error: return {name, prompt_text::cross_toolkit_error};
    case PromptName::final_output: return {name, prompt_text::final_output};
    case PromptName::tool_explanation: return {name, prompt_text::tool_explanation};
    case PromptName::toolkit_description: return {name, prompt_text::toolkit_description};
    case PromptName::react_step: return {name, prompt_text::react_step};
    case PromptName::dfsdt_path: return {name, prompt_text::dfsdt_path};
    case PromptName::intermediate_state: return {name, prompt_text::intermediate_state};
  }
  throw Error(ErrorCode::config_error, "unknown prompt template");
}

/// Names of the `[placeholder]` slots in order of appearance.
inline std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string_view::npos) {
    auto close = text.find(']', pos + 1);
    if (close == std::string_view::npos) break;
    out.emplace_back(text.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

using PromptContext = std::map<std::string, std::string, std::less<>>;

/// Substitutes every `[name]` slot with context[name]. Substituted values are
/// not rescanned, so they may contain brackets.
inline std::string render_prompt(const PromptTemplate& tmpl, const PromptContext& context) {
  std::string out;
  out.reserve(tmpl.text.size());
  std::size_t pos = 0;
  while (true) {
    auto open = tmpl.text.find('[', pos);
    if (open == std::string_view::npos) break;
    auto close = tmpl.text.find(']', open + 1);
    if (close == std::string_view::npos) break;
    auto name = tmpl.text.substr(open + 1, close - open - 1);
    auto it = context.find(name);
    if (it == context.end()) {
      throw Error(ErrorCode::missing_placeholder, "no value for [" + std::string(name) + "]");
    }
    out.append(tmpl.text.substr(pos, open - pos));
    out.append(it->second);
    pos = close + 1;
  }
  out.append(tmpl.text.substr(pos));
  return out;
}

}  // namespace toolplanner
