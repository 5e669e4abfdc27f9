#pragma once

#include "webgym/context.hpp"
#include "webgym/env.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace webgym {

// Versioned system-prompt assets; tests pin their fnv1a64 digests.
inline constexpr std::string_view kPromptVersion = "v1";
extern const std::string_view kSystemPromptThink;
extern const std::string_view kSystemPromptPlain;

struct PromptConfig {
    bool think_mode = true;
    std::string system_prompt;

    PromptConfig() : PromptConfig(true) {}
    explicit PromptConfig(bool think)
        : think_mode(think), system_prompt(think ? kSystemPromptThink : kSystemPromptPlain) {}
};

struct AgentMessage {
    std::optional<std::string> think_text;
    std::string answer_text;
    Action parsed_action;
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// do(...) / exit(...) / go_backward() / go_forward(), keyword arguments in any
// order, action names matched exactly. Throws ParseError.
Action parse_action_dsl(std::string_view text);

// Canonical formatter: double quotes, argument order action, argument, element.
// parse_action_dsl(format_action(a)) == a.
std::string format_action(const Action& action);

// Splits a model response per the prompt format and parses the single action.
// think_mode: first <think>..</think> and first <answer>..</answer> span;
// plain mode: the whole text. Lines starting with '#' inside the action body
// are treated as notes and ignored. Throws ParseError.
AgentMessage parse_response(std::string_view text, const PromptConfig& cfg);
bool try_parse_response(std::string_view text, const PromptConfig& cfg, AgentMessage& out,
                        std::string* error = nullptr);

// Demo-synthesis side of the format: wraps a canonical action (plus think
// remark) the way the agent is prompted to respond.
std::string format_agent_text(const std::string& remark, const Action& action, const PromptConfig& cfg);

// Full prompt: [BOS] system prompt, task instruction, then the materialized
// history (alternating observation/action sections ending with the latest
// full observation).
std::vector<Token> build_prompt(const std::string& task_instruction, const MaterializedContext& history,
                                const PromptConfig& cfg);

// The constant [BOS]+system+instruction prefix of build_prompt, used by the
// rollout engine to advance its incremental state.
std::vector<Token> prompt_prefix_tokens(const std::string& task_instruction, const PromptConfig& cfg);

} // namespace webgym
