#pragma once

#include "webgym/env.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace webgym {

// Generation-time metadata about a page, kept outside WorldState. Solvers and
// task synthesis read it; the agent only ever sees the rendered DOM.
struct PageInfo {
    std::string url;
    std::string title;
    int depth = 0; // link distance from "/"
    std::string fact_noun; // empty when the page carries no fact line
    std::string fact_code;
    std::map<std::string, int> inputs;                                   // label -> element_id
    std::map<std::string, std::pair<int, std::vector<std::string>>> selects; // label -> (element_id, options)
};

struct SiteInfo {
    std::string site_name;
    std::vector<std::string> page_order; // generation order, "/" first
    std::map<std::string, PageInfo> pages;
};

struct Site {
    std::map<std::string, Page> pages;
    SiteInfo info;
};

// Procedural site: 4-12 pages, 3-10 interactive elements per page, every page
// reachable from "/" within two clicks. Pure function of the seed.
Site build_site(int64_t site_seed);
std::map<std::string, Page> generate_site(int64_t site_seed);

// Deterministic task suites. Throws std::invalid_argument for count < 1.
std::vector<TaskSpec> generate_task_suite(TaskFamily family, int count, uint64_t seed);
// Same, resolving the family by name; throws on unknown names.
std::vector<TaskSpec> generate_task_suite(const std::string& family_name, int count, uint64_t seed);
// Interleaved multi-family suite (family i*, i+1*, ... round robin).
std::vector<TaskSpec> generate_mixed_suite(const std::vector<TaskFamily>& families, int count, uint64_t seed);

struct SolverStep {
    Action action;
    std::string remark; // "# Element: ..." / "# Note: ..." line used by demos
};

// Rule-based ground-truth solver. Replaying the returned actions from
// new_world(task) reaches reward 1; the last action is always Exit.
std::vector<SolverStep> scripted_solver_steps(const TaskSpec& task);
std::vector<Action> scripted_solver(const TaskSpec& task);

// Line-delimited task records; parse(serialize(x)) round-trips bit-exactly.
std::string task_suite_to_jsonl(const std::vector<TaskSpec>& suite);
std::vector<TaskSpec> parse_task_suite_jsonl(const std::string& text);
void save_task_suite(const std::string& path, const std::vector<TaskSpec>& suite);
std::vector<TaskSpec> load_task_suite(const std::string& path);

} // namespace webgym
