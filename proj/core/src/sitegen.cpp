#include "webgym/sitegen.hpp"

#include "webgym/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace webgym {

using nlohmann::json;

namespace {

struct CatalogEntry {
    const char* name;
    const char* title;
};

// Non-home page catalog. Titles double as link text and instruction targets.
constexpr CatalogEntry kCatalog[] = {
    {"forums", "Forums"},   {"wiki", "Wiki"},         {"cart", "Cart"},
    {"settings", "Settings"}, {"profile", "Profile"}, {"reports", "Reports"},
    {"products", "Products"}, {"orders", "Orders"},   {"help", "Help"},
    {"account", "Account"}, {"news", "News"},         {"gallery", "Gallery"},
    {"contact", "Contact"}, {"about", "About"},       {"billing", "Billing"},
};

constexpr const char* kSiteNames[] = {"Acme", "Borealis", "Cobalt", "Dune",
                                      "Ember", "Fathom", "Juniper", "Lumen"};

constexpr const char* kFactNouns[] = {"access", "backup", "order", "ticket", "invite", "serial"};

constexpr const char* kInputLabels[] = {"title", "name", "email", "city", "amount", "query"};

constexpr const char* kButtonLabels[] = {"Refresh", "Apply", "Save", "Reset"};

constexpr const char* kTypeValues[] = {"maple", "ember", "falcon", "harbor",
                                       "indigo", "juniper", "meadow", "quartz"};

struct SelectTemplate {
    const char* label;
    std::vector<const char*> options;
};

const SelectTemplate kSelectTemplates[] = {
    {"period", {"Day", "Week", "Month", "Year"}},
    {"color", {"Red", "Green", "Blue", "Yellow"}},
    {"size", {"Small", "Medium", "Large"}},
};

struct PagePlan {
    std::string url;
    std::string title;
    int depth = 0;
    std::string parent; // url of the page whose nav links here
    bool has_input = false;
    std::string input_label;
    bool has_select = false;
    const SelectTemplate* select_tpl = nullptr;
    std::string fact_noun;
    std::string fact_code;
    int extra_buttons = 0;
};

} // namespace

Site build_site(int64_t site_seed) {
    Rng rng(substream(static_cast<uint64_t>(site_seed), "site"));

    const int total_pages = 4 + static_cast<int>(rng.next_below(9)); // 4..12
    const std::string site_name = kSiteNames[rng.next_below(std::size(kSiteNames))];

    // Pick distinct catalog entries.
    std::vector<int> order(std::size(kCatalog));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);

    std::vector<PagePlan> plans;
    plans.push_back({"/", "Home", 0, "", false, "", false, nullptr, "", "", 0});
    for (int i = 0; i < total_pages - 1; ++i) {
        const CatalogEntry& entry = kCatalog[order[static_cast<size_t>(i)]];
        PagePlan plan;
        plan.url = std::string("/") + entry.name;
        plan.title = entry.title;
        plans.push_back(plan);
    }

    // Topology: home fans out to at most 8 children, the rest hang one level
    // deeper off an earlier depth-1 page.
    std::vector<size_t> depth1;
    for (size_t i = 1; i < plans.size(); ++i) {
        const bool want_home = depth1.size() < 2 || rng.next_double() < 0.7;
        if ((want_home && depth1.size() < 8) || depth1.empty()) {
            plans[i].parent = "/";
            plans[i].depth = 1;
            depth1.push_back(i);
        } else {
            const size_t parent = depth1[rng.next_below(depth1.size())];
            plans[i].parent = plans[parent].url;
            plans[i].depth = 2;
        }
    }

    // Content: every non-home page carries a fact line; inputs and selects are
    // sprinkled, with at least one input somewhere for form tasks.
    for (size_t i = 1; i < plans.size(); ++i) {
        PagePlan& plan = plans[i];
        plan.fact_noun = kFactNouns[rng.next_below(std::size(kFactNouns))];
        plan.fact_code = std::to_string(1000 + rng.next_below(9000));
        plan.has_input = i == 1 || rng.next_double() < 0.5;
        if (plan.has_input) plan.input_label = kInputLabels[rng.next_below(std::size(kInputLabels))];
        plan.has_select = rng.next_double() < 0.35;
        if (plan.has_select) plan.select_tpl = &kSelectTemplates[rng.next_below(std::size(kSelectTemplates))];
    }

    Site site;
    site.info.site_name = site_name;

    // Children listed in generation order.
    std::map<std::string, std::vector<size_t>> children;
    for (size_t i = 1; i < plans.size(); ++i) children[plans[i].parent].push_back(i);

    for (const PagePlan& plan : plans) {
        Page page;
        page.url = plan.url;
        PageInfo info;
        info.url = plan.url;
        info.title = plan.title;
        info.depth = plan.depth;
        info.fact_noun = plan.fact_noun;
        info.fact_code = plan.fact_code;

        DomNode root;
        root.tag = "html";

        DomNode heading;
        heading.tag = "h1";
        heading.text_content = plan.title;
        root.children.push_back(heading);

        DomNode nav;
        nav.tag = "nav";
        std::vector<std::string> nav_targets;
        if (plan.depth > 0) {
            DomNode home_link;
            home_link.tag = "a";
            home_link.set_attr("title", "Home");
            nav.children.push_back(home_link);
            nav_targets.push_back("/");
        }
        for (size_t child_idx : children[plan.url]) {
            const PagePlan& child = plans[child_idx];
            DomNode link;
            link.tag = "a";
            link.set_attr("title", child.title);
            nav.children.push_back(link);
            nav_targets.push_back(child.url);
        }
        root.children.push_back(nav);

        DomNode main;
        main.tag = "main";

        if (plan.depth == 0) {
            DomNode intro;
            intro.tag = "p";
            intro.text_content = "Welcome to the " + site_name + " portal.";
            main.children.push_back(intro);
        }

        if (!plan.fact_noun.empty()) {
            DomNode fact;
            fact.tag = "p";
            fact.text_content = "The " + plan.fact_noun + " code is " + plan.fact_code + ".";
            main.children.push_back(fact);
        }

        int interactive = static_cast<int>(nav_targets.size());
        bool home_search = false;
        if (plan.depth == 0) {
            DomNode search;
            search.tag = "input";
            search.set_attr("name", "search");
            main.children.push_back(search);
            interactive++;
            home_search = true;
        }
        if (plan.has_input) {
            DomNode input;
            input.tag = "input";
            input.set_attr("name", plan.input_label);
            main.children.push_back(input);
            interactive++;
        }
        if (plan.select_tpl) {
            DomNode select;
            select.tag = "select";
            select.set_attr("name", plan.select_tpl->label);
            for (const char* option_text : plan.select_tpl->options) {
                DomNode option;
                option.tag = "option";
                option.text_content = option_text;
                select.children.push_back(option);
            }
            main.children.push_back(select);
            interactive++;
        }
        while (interactive < 3) {
            DomNode button;
            button.tag = "button";
            button.text_content = kButtonLabels[static_cast<size_t>(interactive) % std::size(kButtonLabels)];
            main.children.push_back(button);
            interactive++;
        }
        root.children.push_back(main);

        assign_element_ids(root);

        // Resolve element ids now that numbering is final.
        {
            DomNode& nav_node = root.children[1];
            for (size_t k = 0; k < nav_node.children.size(); ++k)
                page.link_targets[nav_node.children[k].element_id] = nav_targets[k];
            DomNode& main_node = root.children[2];
            for (DomNode& child : main_node.children) {
                if (child.tag == "input") {
                    const std::string* name = child.attr("name");
                    if (home_search && name && *name == "search") {
                        // The search box navigates to the first child page as
                        // its results view; plain typing works regardless.
                        if (!children[plan.url].empty())
                            page.link_targets[child.element_id] = plans[children[plan.url][0]].url;
                    } else if (name) {
                        info.inputs[*name] = child.element_id;
                    }
                } else if (child.tag == "select") {
                    const std::string* name = child.attr("name");
                    std::vector<std::string> options;
                    for (const DomNode& option : child.children) options.push_back(option.text_content);
                    if (name) info.selects[*name] = {child.element_id, options};
                }
            }
        }

        page.root = std::move(root);
        site.pages[page.url] = std::move(page);
        site.info.pages[info.url] = std::move(info);
        site.info.page_order.push_back(plan.url);
    }

    return site;
}

std::map<std::string, Page> generate_site(int64_t site_seed) { return build_site(site_seed).pages; }

// ---------------------------------------------------------------------------
// Task synthesis
// ---------------------------------------------------------------------------

namespace {

const PageInfo& pick_target_page(const SiteInfo& info, Rng& rng) {
    std::vector<const PageInfo*> shallow, deep;
    for (const std::string& url : info.page_order) {
        const PageInfo& page = info.pages.at(url);
        if (page.depth == 1) shallow.push_back(&page);
        if (page.depth == 2) deep.push_back(&page);
    }
    // Mostly one click away; the rest require finding the hub page first.
    if (!deep.empty() && rng.next_double() < 0.25) return *deep[rng.next_below(deep.size())];
    return *shallow[rng.next_below(shallow.size())];
}

TaskSpec make_task(TaskFamily family, int64_t site_seed, const std::string& task_id, Rng& rng) {
    Site site = build_site(site_seed);
    TaskSpec task;
    task.task_id = task_id;
    task.family = family;
    task.site_seed = site_seed;
    task.start_url = "/";

    switch (family) {
        case TaskFamily::Navigate: {
            const PageInfo& target = pick_target_page(site.info, rng);
            task.instruction = "Open the " + target.title + " page.";
            task.rubric = Rubric::url_match(target.url);
            break;
        }
        case TaskFamily::FormFill: {
            std::vector<const PageInfo*> with_input, with_select;
            for (const std::string& url : site.info.page_order) {
                const PageInfo& page = site.info.pages.at(url);
                if (page.depth == 0) continue;
                if (!page.inputs.empty()) with_input.push_back(&page);
                if (!page.selects.empty()) with_select.push_back(&page);
            }
            const bool use_select = !with_select.empty() && rng.next_double() < 0.5;
            if (use_select) {
                const PageInfo& target = *with_select[rng.next_below(with_select.size())];
                const auto& [label, entry] = *std::next(target.selects.begin(),
                                                        static_cast<long>(rng.next_below(target.selects.size())));
                const std::string option = entry.second[rng.next_below(entry.second.size())];
                task.instruction = "Open the " + target.title + " page and select " + option +
                                   " from the " + label + " menu.";
                task.rubric = Rubric::state_predicate("dropdown_selected", entry.first, option);
            } else {
                const PageInfo& target = *with_input[rng.next_below(with_input.size())];
                const auto& [label, element_id] = *std::next(target.inputs.begin(),
                                                             static_cast<long>(rng.next_below(target.inputs.size())));
                const std::string value = kTypeValues[rng.next_below(std::size(kTypeValues))];
                task.instruction = "Open the " + target.title + " page and type " + value +
                                   " into the " + label + " field.";
                task.rubric = Rubric::state_predicate("form_value", element_id, value);
            }
            break;
        }
        case TaskFamily::LookupAnswer: {
            const PageInfo& target = pick_target_page(site.info, rng);
            task.instruction = "Find the " + target.fact_noun + " code on the " + target.title +
                               " page and exit with the code.";
            task.rubric = Rubric::string_match(target.fact_code);
            break;
        }
    }
    return task;
}

} // namespace

std::vector<TaskSpec> generate_task_suite(TaskFamily family, int count, uint64_t seed) {
    if (count < 1) throw std::invalid_argument("generate_task_suite: count must be >= 1");
    std::vector<TaskSpec> suite;
    suite.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto site_seed = static_cast<int64_t>(substream(seed, "task-site", static_cast<uint64_t>(i)) >> 1);
        Rng rng(substream(seed, "task-choice", static_cast<uint64_t>(i)));
        const std::string task_id =
            std::string(task_family_name(family)) + "-" + std::to_string(seed) + "-" + std::to_string(i);
        suite.push_back(make_task(family, site_seed, task_id, rng));
    }
    return suite;
}

std::vector<TaskSpec> generate_task_suite(const std::string& family_name, int count, uint64_t seed) {
    const auto family = parse_task_family(family_name);
    if (!family) throw std::invalid_argument("generate_task_suite: unknown family: " + family_name);
    return generate_task_suite(*family, count, seed);
}

std::vector<TaskSpec> generate_mixed_suite(const std::vector<TaskFamily>& families, int count, uint64_t seed) {
    if (families.empty()) throw std::invalid_argument("generate_mixed_suite: no families");
    if (count < 1) throw std::invalid_argument("generate_mixed_suite: count must be >= 1");
    std::vector<TaskSpec> suite;
    suite.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const TaskFamily family = families[static_cast<size_t>(i) % families.size()];
        const auto site_seed = static_cast<int64_t>(substream(seed, "task-site", static_cast<uint64_t>(i)) >> 1);
        Rng rng(substream(seed, "task-choice", static_cast<uint64_t>(i)));
        const std::string task_id =
            std::string(task_family_name(family)) + "-" + std::to_string(seed) + "-" + std::to_string(i);
        suite.push_back(make_task(family, site_seed, task_id, rng));
    }
    return suite;
}

// ---------------------------------------------------------------------------
// Scripted solver
// ---------------------------------------------------------------------------

namespace {

bool is_anchor_link(const Page& page, int eid) {
    const DomNode* node = find_by_id(page.root, eid);
    return node && node->tag == "a";
}

// Shortest click path between two urls over the anchor-link graph.
std::vector<std::string> link_path(const std::map<std::string, Page>& pages, const std::string& from,
                                   const std::string& to) {
    std::map<std::string, std::string> parent;
    std::vector<std::string> frontier{from};
    parent[from] = from;
    while (!frontier.empty()) {
        std::vector<std::string> next;
        for (const std::string& url : frontier) {
            for (const auto& [eid, target] : pages.at(url).link_targets) {
                if (!is_anchor_link(pages.at(url), eid)) continue;
                if (parent.count(target)) continue;
                parent[target] = url;
                if (target == to) {
                    std::vector<std::string> path{to};
                    std::string cur = to;
                    while (cur != from) {
                        cur = parent[cur];
                        path.push_back(cur);
                    }
                    std::reverse(path.begin(), path.end());
                    return path;
                }
                next.push_back(target);
            }
        }
        frontier = std::move(next);
    }
    throw std::runtime_error("scripted_solver: no path from " + from + " to " + to);
}

int link_element(const Page& page, const std::string& target) {
    for (const auto& [eid, url] : page.link_targets) {
        const DomNode* node = find_by_id(page.root, eid);
        if (url == target && node && node->tag == "a") return eid;
    }
    throw std::runtime_error("scripted_solver: no link to " + target + " on " + page.url);
}

void append_navigation(std::vector<SolverStep>& steps, const Site& site, const std::string& from,
                       const std::string& to) {
    const auto path = link_path(site.pages, from, to);
    for (size_t i = 0; i + 1 < path.size(); ++i) {
        const Page& page = site.pages.at(path[i]);
        const int eid = link_element(page, path[i + 1]);
        const std::string& title = site.info.pages.at(path[i + 1]).title;
        steps.push_back({Action::click(eid), "# Element: the '" + title + "' link"});
    }
}

} // namespace

std::vector<SolverStep> scripted_solver_steps(const TaskSpec& task) {
    const Site site = build_site(task.site_seed);
    std::vector<SolverStep> steps;

    switch (task.family) {
        case TaskFamily::Navigate: {
            append_navigation(steps, site, task.start_url, task.rubric.expected);
            steps.push_back({Action::exit_session(), "# Note: task complete"});
            break;
        }
        case TaskFamily::FormFill: {
            // Locate the page owning the rubric element. Element ids are only
            // unique per page, so candidates are disambiguated by the page
            // title the instruction names.
            const bool want_select = task.rubric.predicate_kind == "dropdown_selected";
            const PageInfo* target = nullptr;
            std::string label;
            for (const auto& [url, page] : site.info.pages) {
                const bool named = task.instruction.find("the " + page.title + " page") != std::string::npos;
                if (want_select) {
                    for (const auto& [lbl, entry] : page.selects)
                        if (entry.first == task.rubric.element_id && (named || !target)) {
                            target = &page;
                            label = lbl;
                        }
                } else {
                    for (const auto& [lbl, eid] : page.inputs)
                        if (eid == task.rubric.element_id && (named || !target)) {
                            target = &page;
                            label = lbl;
                        }
                }
            }
            if (!target) throw std::runtime_error("scripted_solver: rubric element not found in site");
            append_navigation(steps, site, task.start_url, target->url);
            if (task.rubric.predicate_kind == "dropdown_selected") {
                steps.push_back({Action::select_option(task.rubric.element_id, task.rubric.expected),
                                 "# Element: the '" + label + "' dropdown"});
            } else {
                steps.push_back({Action::type_text(task.rubric.element_id, task.rubric.expected),
                                 "# Element: the '" + label + "' input field"});
            }
            steps.push_back({Action::exit_session(), "# Note: task complete"});
            break;
        }
        case TaskFamily::LookupAnswer: {
            const PageInfo* target = nullptr;
            for (const auto& [url, page] : site.info.pages) {
                if (page.fact_code != task.rubric.expected) continue;
                const bool named = task.instruction.find("the " + page.title + " page") != std::string::npos;
                if (named || !target) target = &page;
            }
            if (!target) throw std::runtime_error("scripted_solver: fact page not found in site");
            append_navigation(steps, site, task.start_url, target->url);
            steps.push_back({Action::exit_session(task.rubric.expected),
                             "# Note: the " + target->fact_noun + " code is " + target->fact_code});
            break;
        }
    }
    return steps;
}

std::vector<Action> scripted_solver(const TaskSpec& task) {
    std::vector<Action> actions;
    for (const SolverStep& step : scripted_solver_steps(task)) actions.push_back(step.action);
    return actions;
}

// ---------------------------------------------------------------------------
// Task suite persistence
// ---------------------------------------------------------------------------

namespace {

json rubric_to_json(const Rubric& rubric) {
    json j;
    switch (rubric.kind) {
        case RubricKind::StringMatch: j["kind"] = "string_match"; break;
        case RubricKind::UrlMatch: j["kind"] = "url_match"; break;
        case RubricKind::StatePredicate: j["kind"] = "state_predicate"; break;
    }
    j["expected"] = rubric.expected;
    if (rubric.kind == RubricKind::StatePredicate) {
        j["predicate_kind"] = rubric.predicate_kind;
        j["element_id"] = rubric.element_id;
    }
    return j;
}

Rubric rubric_from_json(const json& j) {
    Rubric rubric;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "string_match") rubric.kind = RubricKind::StringMatch;
    else if (kind == "url_match") rubric.kind = RubricKind::UrlMatch;
    else if (kind == "state_predicate") rubric.kind = RubricKind::StatePredicate;
    else throw std::invalid_argument("unknown rubric kind: " + kind);
    rubric.expected = j.at("expected").get<std::string>();
    if (rubric.kind == RubricKind::StatePredicate) {
        rubric.predicate_kind = j.at("predicate_kind").get<std::string>();
        rubric.element_id = j.at("element_id").get<int>();
    }
    return rubric;
}

} // namespace

std::string task_suite_to_jsonl(const std::vector<TaskSpec>& suite) {
    std::string out;
    for (const TaskSpec& task : suite) {
        json j;
        j["task_id"] = task.task_id;
        j["family"] = task_family_name(task.family);
        j["instruction"] = task.instruction;
        j["site_seed"] = task.site_seed;
        j["start_url"] = task.start_url;
        j["rubric"] = rubric_to_json(task.rubric);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<TaskSpec> parse_task_suite_jsonl(const std::string& text) {
    std::vector<TaskSpec> suite;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        TaskSpec task;
        task.task_id = j.at("task_id").get<std::string>();
        const auto family = parse_task_family(j.at("family").get<std::string>());
        if (!family) throw std::invalid_argument("unknown task family in task file");
        task.family = *family;
        task.instruction = j.at("instruction").get<std::string>();
        task.site_seed = j.at("site_seed").get<int64_t>();
        task.start_url = j.at("start_url").get<std::string>();
        task.rubric = rubric_from_json(j.at("rubric"));
        suite.push_back(std::move(task));
    }
    return suite;
}

void save_task_suite(const std::string& path, const std::vector<TaskSpec>& suite) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write task file: " + path);
    out << task_suite_to_jsonl(suite);
}

std::vector<TaskSpec> load_task_suite(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read task file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_task_suite_jsonl(buf.str());
}

} // namespace webgym
