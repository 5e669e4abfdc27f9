#include "webgym/protocol.hpp"

#include <array>
#include <cctype>

namespace webgym {

// ---------------------------------------------------------------------------
// System prompts (version v1). Kept deliberately compact: the context of every
// training example pays for these bytes.
// ---------------------------------------------------------------------------

const std::string_view kSystemPromptThink =
    "Web browsing agent: given the page HTML each round, reply with ONLY ONE ACTION as "
    "<think> ... </think> <answer> ... </answer>.\n"
    "Actions: do(action=\"Click|Right Click|Type|Search|Hover|Scroll Up|Scroll Down|Press Enter|"
    "Switch Tab|Select Dropdown Option|Wait\", argument=\"...\", element=\"...\"); "
    "exit(message=\"...\"); go_backward(); go_forward().\n"
    "element is an id from the HTML and must not be None for Click, Right Click, Type, Search, "
    "Select Dropdown Option, Hover. Answer questions via exit.";

const std::string_view kSystemPromptPlain =
    "Web browsing agent: given the page HTML each round, reply with ONLY ONE ACTION and nothing "
    "else.\n"
    "Actions: do(action=\"Click|Right Click|Type|Search|Hover|Scroll Up|Scroll Down|Press Enter|"
    "Switch Tab|Select Dropdown Option|Wait\", argument=\"...\", element=\"...\"); "
    "exit(message=\"...\"); go_backward(); go_forward().\n"
    "element is an id from the HTML and must not be None for Click, Right Click, Type, Search, "
    "Select Dropdown Option, Hover. Answer questions via exit.";

// ---------------------------------------------------------------------------
// DSL parsing
// ---------------------------------------------------------------------------

namespace {

void skip_ws(std::string_view s, size_t& i) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
}

std::string parse_quoted(std::string_view s, size_t& i) {
    if (i >= s.size() || s[i] != '"') throw ParseError("expected quoted string");
    ++i;
    std::string out;
    while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\' && i + 1 < s.size()) {
            ++i;
            out.push_back(s[i] == 'n' ? '\n' : s[i]);
        } else {
            out.push_back(s[i]);
        }
        ++i;
    }
    if (i >= s.size()) throw ParseError("unterminated string");
    ++i; // closing quote
    return out;
}

std::string parse_ident(std::string_view s, size_t& i) {
    std::string out;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) out.push_back(s[i++]);
    if (out.empty()) throw ParseError("expected identifier");
    return out;
}

struct Kwargs {
    std::optional<std::string> action, argument, element, message;
};

Kwargs parse_kwargs(std::string_view s, size_t& i) {
    Kwargs kw;
    skip_ws(s, i);
    if (i < s.size() && s[i] == ')') {
        ++i;
        return kw;
    }
    for (;;) {
        skip_ws(s, i);
        const std::string key = parse_ident(s, i);
        skip_ws(s, i);
        if (i >= s.size() || s[i] != '=') throw ParseError("expected '=' after " + key);
        ++i;
        skip_ws(s, i);
        const std::string value = parse_quoted(s, i);
        if (key == "action") kw.action = value;
        else if (key == "argument") kw.argument = value;
        else if (key == "element") kw.element = value;
        else if (key == "message") kw.message = value;
        else throw ParseError("unknown keyword argument: " + key);
        skip_ws(s, i);
        if (i < s.size() && s[i] == ',') {
            ++i;
            continue;
        }
        if (i < s.size() && s[i] == ')') {
            ++i;
            return kw;
        }
        throw ParseError("expected ',' or ')'");
    }
}

int parse_int_arg(const std::string& text, const char* what) {
    if (text.empty()) throw ParseError(std::string(what) + " must be an integer");
    size_t pos = 0;
    int value = 0;
    try {
        value = std::stoi(text, &pos);
    } catch (...) {
        throw ParseError(std::string(what) + " must be an integer: " + text);
    }
    if (pos != text.size() || value < 0) throw ParseError(std::string(what) + " must be a nonnegative integer: " + text);
    return value;
}

ActionKind do_action_kind(const std::string& name) {
    static const std::array<std::pair<const char*, ActionKind>, 11> kNames{{
        {"Click", ActionKind::Click},
        {"Right Click", ActionKind::RightClick},
        {"Type", ActionKind::Type},
        {"Search", ActionKind::Search},
        {"Hover", ActionKind::Hover},
        {"Scroll Up", ActionKind::ScrollUp},
        {"Scroll Down", ActionKind::ScrollDown},
        {"Press Enter", ActionKind::PressEnter},
        {"Switch Tab", ActionKind::SwitchTab},
        {"Select Dropdown Option", ActionKind::SelectDropdownOption},
        {"Wait", ActionKind::Wait},
    }};
    for (const auto& [n, kind] : kNames)
        if (name == n) return kind;
    throw ParseError("unknown action name: " + name);
}

// Strips '#'-prefixed note lines, keeps the rest.
std::string strip_notes(std::string_view body) {
    std::string out;
    size_t start = 0;
    while (start <= body.size()) {
        size_t end = body.find('\n', start);
        if (end == std::string_view::npos) end = body.size();
        std::string_view line = body.substr(start, end - start);
        size_t first = 0;
        while (first < line.size() && std::isspace(static_cast<unsigned char>(line[first]))) ++first;
        if (first >= line.size() || line[first] != '#') {
            out += line;
            out += '\n';
        }
        if (end == body.size()) break;
        start = end + 1;
    }
    return out;
}

// Counts top-level call sites, skipping quoted strings.
int count_calls(std::string_view s) {
    int calls = 0;
    bool in_quotes = false;
    for (size_t i = 0; i < s.size(); ++i) {
        if (in_quotes) {
            if (s[i] == '\\') ++i;
            else if (s[i] == '"') in_quotes = false;
            continue;
        }
        if (s[i] == '"') {
            in_quotes = true;
            continue;
        }
        for (std::string_view name : {"do(", "exit(", "go_backward(", "go_forward("}) {
            if (s.substr(i, name.size()) == name) {
                // Reject matches inside longer identifiers, e.g. "redo(".
                if (i > 0 && (std::isalnum(static_cast<unsigned char>(s[i - 1])) || s[i - 1] == '_')) break;
                ++calls;
                break;
            }
        }
    }
    return calls;
}

} // namespace

Action parse_action_dsl(std::string_view text) {
    if (count_calls(text) > 1) throw ParseError("multiple actions in one response");
    size_t i = 0;
    skip_ws(text, i);
    const std::string fn = parse_ident(text, i);
    skip_ws(text, i);
    if (i >= text.size() || text[i] != '(') throw ParseError("expected '(' after " + fn);
    ++i;
    Kwargs kw = parse_kwargs(text, i);
    skip_ws(text, i);
    if (i != text.size()) throw ParseError("trailing text after action call");

    if (fn == "go_backward") return Action::go_backward();
    if (fn == "go_forward") return Action::go_forward();
    if (fn == "exit") return Action::exit_session(kw.message.value_or(""));
    if (fn != "do") throw ParseError("unknown function: " + fn);

    if (!kw.action) throw ParseError("do() requires action=");
    const ActionKind kind = do_action_kind(*kw.action);

    Action action;
    action.kind = kind;
    if (action_needs_element(kind)) {
        if (!kw.element) throw ParseError(*kw.action + ": element must not be None");
        action.element = parse_int_arg(*kw.element, "element");
    } else if (kw.element) {
        throw ParseError(*kw.action + " takes no element");
    }
    if (action_needs_argument(kind)) {
        if (!kw.argument) throw ParseError(*kw.action + ": argument must not be None");
        if (kind == ActionKind::SwitchTab) parse_int_arg(*kw.argument, "tab index");
        action.argument = *kw.argument;
    } else if (kw.argument) {
        throw ParseError(*kw.action + " takes no argument");
    }
    return action;
}

std::string format_action(const Action& action) {
    switch (action.kind) {
        case ActionKind::Exit:
            return action.argument.empty() ? "exit()" : "exit(message=\"" + action.argument + "\")";
        case ActionKind::GoBackward: return "go_backward()";
        case ActionKind::GoForward: return "go_forward()";
        default: break;
    }
    std::string out = "do(action=\"";
    out += action_kind_name(action.kind);
    out += '"';
    if (action_needs_argument(action.kind)) {
        out += ", argument=\"";
        out += action.argument;
        out += '"';
    }
    if (action_needs_element(action.kind)) {
        out += ", element=\"";
        out += std::to_string(action.element);
        out += '"';
    }
    out += ')';
    return out;
}

namespace {

std::string_view extract_span(std::string_view text, std::string_view open, std::string_view close,
                              const char* what) {
    const size_t begin = text.find(open);
    if (begin == std::string_view::npos) throw ParseError(std::string("missing ") + what + " tag");
    const size_t body = begin + open.size();
    const size_t end = text.find(close, body);
    if (end == std::string_view::npos) throw ParseError(std::string("unterminated ") + what + " tag");
    return text.substr(body, end - body);
}

std::string trim_copy(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

} // namespace

AgentMessage parse_response(std::string_view text, const PromptConfig& cfg) {
    AgentMessage msg;
    std::string body;
    if (cfg.think_mode) {
        msg.think_text = trim_copy(extract_span(text, "<think>", "</think>", "think"));
        body = trim_copy(extract_span(text, "<answer>", "</answer>", "answer"));
    } else {
        body = trim_copy(text);
    }
    msg.answer_text = body;
    const std::string cleaned = trim_copy(strip_notes(body));
    if (cleaned.empty()) throw ParseError("no action in response");
    msg.parsed_action = parse_action_dsl(cleaned);
    return msg;
}

bool try_parse_response(std::string_view text, const PromptConfig& cfg, AgentMessage& out, std::string* error) {
    try {
        out = parse_response(text, cfg);
        return true;
    } catch (const ParseError& e) {
        if (error) *error = e.what();
        return false;
    }
}

std::string format_agent_text(const std::string& remark, const Action& action, const PromptConfig& cfg) {
    const std::string dsl = format_action(action);
    if (!cfg.think_mode) return dsl;
    return "<think> " + remark + " </think> <answer> " + dsl + " </answer>";
}

std::vector<Token> build_prompt(const std::string& task_instruction, const MaterializedContext& history,
                                const PromptConfig& cfg) {
    std::vector<Token> out = prompt_prefix_tokens(task_instruction, cfg);
    out.insert(out.end(), history.tokens.begin(), history.tokens.end());
    return out;
}

std::vector<Token> prompt_prefix_tokens(const std::string& task_instruction, const PromptConfig& cfg) {
    std::vector<Token> out;
    out.push_back(kTokenBos);
    append_tokens(out, cfg.system_prompt);
    append_tokens(out, "\n\nTask: ");
    append_tokens(out, task_instruction);
    append_tokens(out, "\n\n");
    return out;
}

} // namespace webgym
