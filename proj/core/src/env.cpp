#include "webgym/env.hpp"

#include "webgym/sitegen.hpp"

#include <stdexcept>

namespace webgym {

const char* action_kind_name(ActionKind kind) {
    switch (kind) {
        case ActionKind::Click: return "Click";
        case ActionKind::RightClick: return "Right Click";
        case ActionKind::Type: return "Type";
        case ActionKind::Search: return "Search";
        case ActionKind::Hover: return "Hover";
        case ActionKind::ScrollUp: return "Scroll Up";
        case ActionKind::ScrollDown: return "Scroll Down";
        case ActionKind::PressEnter: return "Press Enter";
        case ActionKind::SwitchTab: return "Switch Tab";
        case ActionKind::SelectDropdownOption: return "Select Dropdown Option";
        case ActionKind::Wait: return "Wait";
        case ActionKind::Exit: return "Exit";
        case ActionKind::GoBackward: return "Go Backward";
        case ActionKind::GoForward: return "Go Forward";
    }
    return "?";
}

bool action_needs_element(ActionKind kind) {
    switch (kind) {
        case ActionKind::Click:
        case ActionKind::RightClick:
        case ActionKind::Type:
        case ActionKind::Search:
        case ActionKind::Hover:
        case ActionKind::SelectDropdownOption: return true;
        default: return false;
    }
}

bool action_needs_argument(ActionKind kind) {
    switch (kind) {
        case ActionKind::Type:
        case ActionKind::Search:
        case ActionKind::SwitchTab:
        case ActionKind::SelectDropdownOption: return true;
        default: return false;
    }
}

const char* task_family_name(TaskFamily family) {
    switch (family) {
        case TaskFamily::Navigate: return "navigate";
        case TaskFamily::FormFill: return "form_fill";
        case TaskFamily::LookupAnswer: return "lookup_answer";
    }
    return "?";
}

std::optional<TaskFamily> parse_task_family(const std::string& name) {
    if (name == "navigate") return TaskFamily::Navigate;
    if (name == "form_fill") return TaskFamily::FormFill;
    if (name == "lookup_answer") return TaskFamily::LookupAnswer;
    return std::nullopt;
}

std::string trim_whitespace(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\n' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\n' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

WorldState new_world(const TaskSpec& task, int max_interactions) {
    WorldState state;
    state.site = generate_site(task.site_seed);
    if (!state.site.count(task.start_url))
        throw std::invalid_argument("new_world: start_url not present in generated site: " + task.start_url);
    state.current_url = task.start_url;
    state.nav_history = {task.start_url};
    state.nav_cursor = 0;
    state.tab_list = {task.start_url};
    state.active_tab = 0;
    state.step_count = 0;
    state.max_steps = max_interactions;
    state.done = false;
    return state;
}

// Rendering folds the episode's mutable state (typed text, dropdown choice)
// into the value attribute so re-rendering reflects what the agent did.
static void render_live_node(const WorldState& state, const Page& page, const DomNode& node, std::string& out) {
    out += '<';
    out += node.tag;
    for (const auto& [k, v] : node.attributes) {
        out += ' ';
        out += k;
        out += "=\"";
        out += v;
        out += '"';
    }
    if (node.tag == "input" || node.tag == "textarea") {
        auto it = state.form_values.find({page.url, node.element_id});
        out += " value=\"";
        if (it != state.form_values.end()) out += it->second;
        out += '"';
    } else if (node.tag == "select") {
        auto it = page.dropdown_state.find(node.element_id);
        out += " value=\"";
        if (it != page.dropdown_state.end()) out += it->second;
        out += '"';
    }
    out += " id=\"";
    out += std::to_string(node.element_id);
    out += '"';
    if (node.text_content.empty() && node.children.empty()) {
        out += "/>";
        return;
    }
    out += '>';
    if (!node.text_content.empty()) out += node.text_content;
    for (const auto& child : node.children) {
        out += ' ';
        render_live_node(state, page, child, out);
    }
    out += "</";
    out += node.tag;
    out += '>';
}

std::string render_observation(const WorldState& state) {
    const Page& page = state.current_page();
    std::string out;
    out.reserve(512);
    render_live_node(state, page, page.root, out);
    return out;
}

static bool is_interactive(const Page& page, const DomNode& node) {
    if (page.link_targets.count(node.element_id)) return true;
    return node.tag == "input" || node.tag == "textarea" || node.tag == "select" || node.tag == "button";
}

static void navigate_to(WorldState& state, const std::string& url) {
    state.nav_history.resize(state.nav_cursor + 1);
    state.nav_history.push_back(url);
    state.nav_cursor++;
    state.current_url = url;
    state.tab_list[state.active_tab] = url;
}

StepResult apply_action(WorldState& state, const Action& action) {
    if (state.done) throw std::logic_error("apply_action: episode already done");
    if (state.step_count >= state.max_steps) throw std::logic_error("apply_action: step budget exhausted");

    state.step_count++;
    bool invalid = false;

    Page& page = state.current_page();
    const DomNode* node = action.element >= 0 ? find_by_id(page.root, action.element) : nullptr;

    switch (action.kind) {
        case ActionKind::Click: {
            if (!node || !is_interactive(page, *node)) {
                invalid = true;
                break;
            }
            // Only anchor/button-style targets navigate; clicking a form
            // control just focuses it.
            auto it = page.link_targets.find(action.element);
            if (it != page.link_targets.end() && node->tag != "input" && node->tag != "textarea")
                navigate_to(state, it->second);
            break;
        }
        case ActionKind::RightClick:
        case ActionKind::Hover: {
            if (!node) invalid = true;
            break;
        }
        case ActionKind::Type:
        case ActionKind::Search: {
            if (!node || (node->tag != "input" && node->tag != "textarea")) {
                invalid = true;
                break;
            }
            state.form_values[{page.url, action.element}] = action.argument;
            if (action.kind == ActionKind::Search) {
                // Search = Type + Enter: a search box carries its results page
                // as a link target.
                auto it = page.link_targets.find(action.element);
                if (it != page.link_targets.end()) navigate_to(state, it->second);
            }
            break;
        }
        case ActionKind::SelectDropdownOption: {
            if (!node || node->tag != "select") {
                invalid = true;
                break;
            }
            bool has_option = false;
            for (const auto& child : node->children)
                if (child.tag == "option" && child.text_content == action.argument) has_option = true;
            if (!has_option) {
                invalid = true;
                break;
            }
            page.dropdown_state[action.element] = action.argument;
            break;
        }
        case ActionKind::SwitchTab: {
            int index = -1;
            try {
                index = std::stoi(action.argument);
            } catch (...) {
                index = -1;
            }
            if (index < 0 || static_cast<size_t>(index) >= state.tab_list.size()) {
                invalid = true;
                break;
            }
            state.active_tab = static_cast<size_t>(index);
            state.current_url = state.tab_list[state.active_tab];
            break;
        }
        case ActionKind::GoBackward: {
            if (state.nav_cursor > 0) {
                state.nav_cursor--;
                state.current_url = state.nav_history[state.nav_cursor];
                state.tab_list[state.active_tab] = state.current_url;
            }
            break;
        }
        case ActionKind::GoForward: {
            if (state.nav_cursor + 1 < state.nav_history.size()) {
                state.nav_cursor++;
                state.current_url = state.nav_history[state.nav_cursor];
                state.tab_list[state.active_tab] = state.current_url;
            }
            break;
        }
        case ActionKind::Exit: {
            state.done = true;
            state.exit_message = action.argument;
            break;
        }
        case ActionKind::ScrollUp:
        case ActionKind::ScrollDown:
        case ActionKind::PressEnter:
        case ActionKind::Wait:
            break; // consume the step, page unchanged
    }

    if (state.step_count >= state.max_steps) state.done = true;

    StepResult result;
    result.terminated = state.done;
    result.invalid_action = invalid;
    result.observation = render_observation(state);
    return result;
}

StepResult note_invalid_step(WorldState& state) {
    if (state.done) throw std::logic_error("note_invalid_step: episode already done");
    state.step_count++;
    if (state.step_count >= state.max_steps) state.done = true;
    StepResult result;
    result.terminated = state.done;
    result.invalid_action = true;
    result.observation = render_observation(state);
    return result;
}

int evaluate(const WorldState& state, const Rubric& rubric) {
    switch (rubric.kind) {
        case RubricKind::StringMatch: {
            if (!state.exit_message) return 0;
            return trim_whitespace(*state.exit_message) == trim_whitespace(rubric.expected) ? 1 : 0;
        }
        case RubricKind::UrlMatch:
            return state.current_url == rubric.expected ? 1 : 0;
        case RubricKind::StatePredicate: {
            if (rubric.predicate_kind == "form_value") {
                for (const auto& [key, value] : state.form_values)
                    if (key.second == rubric.element_id && trim_whitespace(value) == rubric.expected) return 1;
                return 0;
            }
            if (rubric.predicate_kind == "dropdown_selected") {
                for (const auto& [url, page] : state.site) {
                    auto it = page.dropdown_state.find(rubric.element_id);
                    if (it != page.dropdown_state.end() && it->second == rubric.expected) return 1;
                }
                return 0;
            }
            throw std::invalid_argument("evaluate: unknown predicate kind: " + rubric.predicate_kind);
        }
    }
    return 0;
}

} // namespace webgym
