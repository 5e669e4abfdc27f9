#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "test_support.hpp"
#include "webgym/env.hpp"
#include "webgym/sitegen.hpp"

#include <chrono>
#include <regex>
#include <set>

using namespace webgym;

TEST_CASE("task suites are byte-identical under a fixed seed") {
    const auto a = generate_task_suite(TaskFamily::Navigate, 3, 0);
    const auto b = generate_task_suite(TaskFamily::Navigate, 3, 0);
    CHECK(task_suite_to_jsonl(a) == task_suite_to_jsonl(b));
}

TEST_CASE("family determines the rubric kind") {
    const auto nav = generate_task_suite(TaskFamily::Navigate, 1, 7);
    CHECK(nav[0].rubric.kind == RubricKind::UrlMatch);
    const auto lookup = generate_task_suite(TaskFamily::LookupAnswer, 4, 7);
    for (const auto& t : lookup) CHECK(t.rubric.kind == RubricKind::StringMatch);
    const auto form = generate_task_suite(TaskFamily::FormFill, 4, 7);
    for (const auto& t : form) CHECK(t.rubric.kind == RubricKind::StatePredicate);
}

TEST_CASE("form_fill suites have distinct task ids") {
    const auto suite = generate_task_suite(TaskFamily::FormFill, 5, 1);
    std::set<std::string> ids;
    for (const auto& t : suite) ids.insert(t.task_id);
    CHECK(ids.size() == 5);
}

TEST_CASE("unknown family name is rejected") {
    CHECK_THROWS_AS(generate_task_suite("teleport", 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(generate_task_suite(TaskFamily::Navigate, 0, 0), std::invalid_argument);
}

TEST_CASE("new_world starts at the task's start page with a fresh history") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 7);
    const WorldState w = new_world(suite[0]);
    CHECK(w.current_url == suite[0].start_url);
    CHECK(w.step_count == 0);
    CHECK_FALSE(w.done);
    CHECK(w.form_values.empty());
    REQUIRE(w.nav_history.size() == 1);
    CHECK(w.nav_history[0] == suite[0].start_url);

    const WorldState w2 = new_world(suite[0]);
    CHECK(render_observation(w) == render_observation(w2));
}

TEST_CASE("rendered text carries every link id exactly once") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 3);
    const WorldState w = new_world(suite[0]);
    const std::string obs = render_observation(w);

    // Collect ids from the text and compare with the page's link ids.
    std::set<int> rendered;
    const std::regex id_re("id=\"(\\d+)\"");
    for (auto it = std::sregex_iterator(obs.begin(), obs.end(), id_re); it != std::sregex_iterator(); ++it) {
        const int id = std::stoi((*it)[1]);
        CHECK_FALSE(rendered.count(id)); // each id appears once
        rendered.insert(id);
    }
    for (const auto& [eid, target] : w.current_page().link_targets) CHECK(rendered.count(eid));
}

TEST_CASE("typed text shows up in the re-rendered input") {
    const auto suite = generate_task_suite(TaskFamily::FormFill, 6, 11);
    // Find a type-variant task and walk to its page.
    for (const auto& task : suite) {
        if (task.rubric.predicate_kind != "form_value") continue;
        WorldState w = new_world(task);
        for (const Action& a : scripted_solver(task)) {
            if (a.kind == ActionKind::Type) {
                REQUIRE(w.current_page().root.element_id >= 0);
                const StepResult r = apply_action(w, Action::type_text(a.element, "42"));
                CHECK_FALSE(r.invalid_action);
                CHECK(r.observation.find("value=\"42\"") != std::string::npos);
                return;
            }
            apply_action(w, a);
        }
    }
    FAIL("no form_value task found");
}

TEST_CASE("identical states render identical bytes") {
    const auto suite = generate_task_suite(TaskFamily::LookupAnswer, 1, 5);
    WorldState a = new_world(suite[0]);
    WorldState b = new_world(suite[0]);
    CHECK(render_observation(a) == render_observation(b));
}

TEST_CASE("click on a link navigates and pushes history") {
    // Hand-trace: pick the first link on the start page and click it.
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 21);
    WorldState w = new_world(suite[0]);
    const Page& home = w.current_page();
    REQUIRE_FALSE(home.link_targets.empty());
    int link_id = -1;
    std::string target;
    for (const auto& [eid, url] : home.link_targets) {
        const DomNode* node = find_by_id(home.root, eid);
        if (node && node->tag == "a") {
            link_id = eid;
            target = url;
            break;
        }
    }
    REQUIRE(link_id >= 0);
    const StepResult r = apply_action(w, Action::click(link_id));
    CHECK_FALSE(r.invalid_action);
    CHECK(w.current_url == target);
    CHECK(w.nav_history.size() == 2);

    SUBCASE("go_backward returns to the start page") {
        apply_action(w, Action::go_backward());
        CHECK(w.current_url == suite[0].start_url);
        apply_action(w, Action::go_forward());
        CHECK(w.current_url == target);
    }
}

TEST_CASE("wait changes nothing but the step count") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 2);
    WorldState w = new_world(suite[0]);
    const std::string before = render_observation(w);
    const StepResult r = apply_action(w, Action::wait());
    CHECK_FALSE(r.invalid_action);
    CHECK(w.step_count == 1);
    CHECK(r.observation == before);
}

TEST_CASE("exit records the message and terminates") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 2);
    WorldState w = new_world(suite[0]);
    const StepResult r = apply_action(w, Action::exit_session("42"));
    CHECK(r.terminated);
    CHECK(w.done);
    REQUIRE(w.exit_message.has_value());
    CHECK(*w.exit_message == "42");
    CHECK_THROWS_AS(apply_action(w, Action::wait()), std::logic_error);
}

TEST_CASE("invalid references consume a step but leave the page alone") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 13);
    WorldState w = new_world(suite[0]);
    const std::string before = render_observation(w);

    CHECK(apply_action(w, Action::click(9999)).invalid_action);       // unknown id
    CHECK(apply_action(w, Action::click(0)).invalid_action);          // html root: not interactive
    CHECK(apply_action(w, Action::switch_tab(3)).invalid_action);     // out of range
    CHECK(apply_action(w, Action::hover(9999)).invalid_action);       // unknown id
    CHECK_FALSE(apply_action(w, Action::switch_tab(0)).invalid_action);
    CHECK(w.step_count == 5);
    CHECK(render_observation(w) == before);
}

TEST_CASE("step accounting counts invalid and parse-failed steps alike") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 13);
    WorldState w = new_world(suite[0]);
    apply_action(w, Action::click(9999));
    note_invalid_step(w);
    apply_action(w, Action::wait());
    CHECK(w.step_count == 3);
}

TEST_CASE("step budget exhaustion terminates the episode") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 17);
    WorldState w = new_world(suite[0], 3);
    CHECK_FALSE(apply_action(w, Action::wait()).terminated);
    CHECK_FALSE(apply_action(w, Action::wait()).terminated);
    CHECK(apply_action(w, Action::wait()).terminated);
    CHECK(w.done);
}

TEST_CASE("evaluate: string match trims whitespace and tolerates no message") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 2);
    WorldState w = new_world(suite[0]);
    CHECK(evaluate(w, Rubric::string_match("42")) == 0); // no exit message
    apply_action(w, Action::exit_session("  42\n"));
    CHECK(evaluate(w, Rubric::string_match("42")) == 1);
    CHECK(evaluate(w, Rubric::string_match("43")) == 0);
}

TEST_CASE("evaluate: url match compares the final url") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 2);
    WorldState w = new_world(suite[0]);
    CHECK(evaluate(w, Rubric::url_match("/profile")) == (w.current_url == "/profile" ? 1 : 0));
    CHECK(evaluate(w, Rubric::url_match(w.current_url)) == 1);
}

TEST_CASE("search writes the form value and triggers the page transition") {
    // The home search box carries a link target.
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 29);
    WorldState w = new_world(suite[0]);
    const Page& home = w.current_page();
    int search_id = -1;
    std::string search_target;
    for (const auto& [eid, url] : home.link_targets) {
        const DomNode* node = find_by_id(home.root, eid);
        if (node && node->tag == "input") {
            search_id = eid;
            search_target = url;
        }
    }
    REQUIRE(search_id >= 0);
    const StepResult r = apply_action(w, Action::search(search_id, "gadgets"));
    CHECK_FALSE(r.invalid_action);
    CHECK(w.current_url == search_target);
    CHECK(w.form_values.at({suite[0].start_url, search_id}) == "gadgets");
}

TEST_CASE("dropdown selection updates state and rejects unknown options") {
    const auto suite = generate_task_suite(TaskFamily::FormFill, 12, 31);
    for (const auto& task : suite) {
        if (task.rubric.predicate_kind != "dropdown_selected") continue;
        WorldState w = new_world(task);
        for (const Action& a : scripted_solver(task)) {
            if (a.kind == ActionKind::SelectDropdownOption) {
                CHECK(apply_action(w, Action::select_option(a.element, "NotAnOption")).invalid_action);
                CHECK_FALSE(apply_action(w, a).invalid_action);
                CHECK(evaluate(w, task.rubric) == 1);
                return;
            }
            apply_action(w, a);
        }
    }
    FAIL("no dropdown task found");
}

TEST_CASE("solver soundness: replay reaches reward 1 on every family") {
    for (const TaskFamily family : {TaskFamily::Navigate, TaskFamily::FormFill, TaskFamily::LookupAnswer}) {
        const auto suite = generate_task_suite(family, 10, 123);
        for (const TaskSpec& task : suite) {
            WorldState w = new_world(task);
            const auto actions = scripted_solver(task);
            CHECK(static_cast<int>(actions.size()) <= w.max_steps);
            for (const Action& a : actions) {
                const StepResult r = apply_action(w, a);
                CHECK_FALSE(r.invalid_action);
            }
            const int reward = evaluate(w, task.rubric);
            CHECK(reward == 1);
            if (task.rubric.kind == RubricKind::StringMatch) CHECK(actions.back().kind == ActionKind::Exit);
        }
    }
}

TEST_CASE("lookup solver exits with the expected answer") {
    const auto suite = generate_task_suite(TaskFamily::LookupAnswer, 3, 77);
    for (const TaskSpec& task : suite) {
        const auto actions = scripted_solver(task);
        REQUIRE_FALSE(actions.empty());
        CHECK(actions.back().kind == ActionKind::Exit);
        CHECK(actions.back().argument == task.rubric.expected);
    }
}

TEST_CASE("rewards are binary over random action sequences") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 5, 55);
    Rng rng(5);
    for (const TaskSpec& task : suite) {
        WorldState w = new_world(task, 6);
        while (!w.done) {
            const int pick = static_cast<int>(rng.next_below(4));
            const Action a = pick == 0   ? Action::wait()
                             : pick == 1 ? Action::click(static_cast<int>(rng.next_below(20)))
                             : pick == 2 ? Action::go_backward()
                                         : Action::scroll_down();
            apply_action(w, a);
        }
        const int r = evaluate(w, task.rubric);
        CHECK((r == 0 || r == 1));
    }
}

TEST_CASE("replay of deterministic sequences is byte-identical") {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 2, 19);
    for (const TaskSpec& task : suite) {
        const auto actions = scripted_solver(task);
        std::string trace_a, trace_b;
        for (int rep = 0; rep < 2; ++rep) {
            WorldState w = new_world(task);
            std::string& trace = rep == 0 ? trace_a : trace_b;
            trace += render_observation(w);
            for (const Action& a : actions) {
                if (w.done) break;
                trace += apply_action(w, a).observation;
            }
            trace += std::to_string(evaluate(w, task.rubric));
        }
        CHECK(trace_a == trace_b);
    }
}

TEST_CASE("generated sites keep 3-10 interactive elements per page") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const Site site = build_site(static_cast<int64_t>(seed * 1234567 + 13));
        CHECK(site.pages.size() >= 4);
        CHECK(site.pages.size() <= 12);
        for (const auto& [url, page] : site.pages) {
            int interactive = 0;
            visit_dom(page.root, [&](const DomNode& n) {
                if (n.tag == "a" || n.tag == "input" || n.tag == "select" || n.tag == "button") interactive++;
                return true;
            });
            CHECK(interactive >= 3);
            CHECK(interactive <= 10);
        }
    }
}

TEST_CASE("task file round-trips bit-exactly") {
    const auto dir = testsupport::temp_dir("taskfile");
    auto suite = generate_task_suite(TaskFamily::FormFill, 8, 3);
    const auto lookup = generate_task_suite(TaskFamily::LookupAnswer, 4, 9);
    suite.insert(suite.end(), lookup.begin(), lookup.end());

    const std::string once = task_suite_to_jsonl(suite);
    const auto parsed = parse_task_suite_jsonl(once);
    CHECK(parsed == suite);
    CHECK(task_suite_to_jsonl(parsed) == once);

    save_task_suite(dir + "/tasks.jsonl", suite);
    CHECK(load_task_suite(dir + "/tasks.jsonl") == suite);
}

TEST_CASE("a 50-task replay finishes fast") {
    const auto start = std::chrono::steady_clock::now();
    std::vector<TaskSpec> suite = generate_mixed_suite(
        {TaskFamily::Navigate, TaskFamily::FormFill, TaskFamily::LookupAnswer}, 50, 4242);
    for (const TaskSpec& task : suite) {
        WorldState w = new_world(task);
        for (const Action& a : scripted_solver(task)) apply_action(w, a);
        CHECK(evaluate(w, task.rubric) == 1);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(seconds < 10.0);
}
