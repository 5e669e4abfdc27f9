#pragma once

#include "webgym/dom.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace webgym {

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class ActionKind {
    Click,
    RightClick,
    Type,
    Search,
    Hover,
    ScrollUp,
    ScrollDown,
    PressEnter,
    SwitchTab,
    SelectDropdownOption,
    Wait,
    Exit,
    GoBackward,
    GoForward,
};

const char* action_kind_name(ActionKind kind); // the Appendix-style display name, e.g. "Select Dropdown Option"
bool action_needs_element(ActionKind kind);
bool action_needs_argument(ActionKind kind);

struct Action {
    ActionKind kind = ActionKind::Wait;
    int element = -1;      // element_id, -1 when the action takes none
    std::string argument;  // typed text / option / tab index / exit message

    static Action click(int element_id) { return {ActionKind::Click, element_id, ""}; }
    static Action right_click(int element_id) { return {ActionKind::RightClick, element_id, ""}; }
    static Action type_text(int element_id, std::string text) { return {ActionKind::Type, element_id, std::move(text)}; }
    static Action search(int element_id, std::string text) { return {ActionKind::Search, element_id, std::move(text)}; }
    static Action hover(int element_id) { return {ActionKind::Hover, element_id, ""}; }
    static Action scroll_up() { return {ActionKind::ScrollUp, -1, ""}; }
    static Action scroll_down() { return {ActionKind::ScrollDown, -1, ""}; }
    static Action press_enter() { return {ActionKind::PressEnter, -1, ""}; }
    static Action switch_tab(int index) { return {ActionKind::SwitchTab, -1, std::to_string(index)}; }
    static Action select_option(int element_id, std::string option) {
        return {ActionKind::SelectDropdownOption, element_id, std::move(option)};
    }
    static Action wait() { return {ActionKind::Wait, -1, ""}; }
    static Action exit_session(std::string message = "") { return {ActionKind::Exit, -1, std::move(message)}; }
    static Action go_backward() { return {ActionKind::GoBackward, -1, ""}; }
    static Action go_forward() { return {ActionKind::GoForward, -1, ""}; }

    bool operator==(const Action& other) const = default;
};

// ---------------------------------------------------------------------------
// Rubrics and tasks
// ---------------------------------------------------------------------------

enum class RubricKind {
    StringMatch, // exit message equals expected (whitespace-trimmed)
    UrlMatch,    // final current_url equals expected
    StatePredicate,
};

// StatePredicate kinds:
//   "form_value"        some recorded form value for element_id equals expected
//   "dropdown_selected" some page's dropdown state for element_id equals expected
struct Rubric {
    RubricKind kind = RubricKind::UrlMatch;
    std::string expected;
    std::string predicate_kind; // StatePredicate only
    int element_id = -1;        // StatePredicate only

    static Rubric string_match(std::string expected) { return {RubricKind::StringMatch, std::move(expected), "", -1}; }
    static Rubric url_match(std::string expected) { return {RubricKind::UrlMatch, std::move(expected), "", -1}; }
    static Rubric state_predicate(std::string predicate, int element_id, std::string expected) {
        return {RubricKind::StatePredicate, std::move(expected), std::move(predicate), element_id};
    }

    bool operator==(const Rubric& other) const = default;
};

enum class TaskFamily { Navigate, FormFill, LookupAnswer };

const char* task_family_name(TaskFamily family);
std::optional<TaskFamily> parse_task_family(const std::string& name);

struct TaskSpec {
    std::string task_id;
    TaskFamily family = TaskFamily::Navigate;
    std::string instruction;
    int64_t site_seed = 0;
    std::string start_url;
    Rubric rubric;

    bool operator==(const TaskSpec& other) const = default;
};

// ---------------------------------------------------------------------------
// World state
// ---------------------------------------------------------------------------

struct Page {
    std::string url;
    DomNode root;
    std::map<int, std::string> dropdown_state; // element_id -> selected option
    std::map<int, std::string> link_targets;   // element_id -> destination url
};

// Full hidden state of one episode. Single-owner: a rollout worker owns its
// WorldState (including its copy of the site) and never shares it.
struct WorldState {
    std::map<std::string, Page> site;
    std::string current_url;
    std::vector<std::string> nav_history; // back/forward stack
    size_t nav_cursor = 0;                // index of current_url within nav_history
    std::map<std::pair<std::string, int>, std::string> form_values; // (url, element_id) -> text
    std::vector<std::string> tab_list;
    size_t active_tab = 0;
    int step_count = 0;
    int max_steps = 10;
    bool done = false;
    std::optional<std::string> exit_message;

    const Page& current_page() const { return site.at(current_url); }
    Page& current_page() { return site.at(current_url); }
};

struct StepResult {
    std::string observation;
    bool terminated = false;
    bool invalid_action = false;
};

// Builds the initial WorldState for a task: generates the site from
// task.site_seed, current_url = start_url, empty forms, step_count 0.
WorldState new_world(const TaskSpec& task, int max_interactions = 10);

// Serializes the current page, with live form values and dropdown selections
// folded in. Stable: identical states render to identical bytes.
std::string render_observation(const WorldState& state);

// Applies one action. Every call consumes exactly one step. Malformed
// references (unknown element_id, Click on a non-interactive node, SwitchTab
// out of range, unknown dropdown option) leave the page untouched and come
// back with invalid_action set.
StepResult apply_action(WorldState& state, const Action& action);

// A response that failed to parse still consumes an interaction.
StepResult note_invalid_step(WorldState& state);

// Binary terminal reward. Call once the episode is over.
int evaluate(const WorldState& state, const Rubric& rubric);

std::string trim_whitespace(const std::string& s);

} // namespace webgym
