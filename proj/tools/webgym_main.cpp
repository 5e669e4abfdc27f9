// webgym: task generation, demonstrations, BC and M-GRPO training, evaluation
// sweeps and trajectory replay for the simulated-web agent pipeline.

#include "CLI11.hpp"

#include "webgym/bc.hpp"
#include "webgym/mgrpo.hpp"
#include "webgym/metrics.hpp"
#include "webgym/rollout.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace webgym;
namespace fs = std::filesystem;

namespace {

PromptConfig prompt_config_for(const std::string& format) {
    if (format == "think") return PromptConfig(true);
    if (format == "plain") return PromptConfig(false);
    throw CLI::ValidationError("--format", "expected think or plain");
}

std::vector<TaskFamily> parse_families(const std::string& csv) {
    std::vector<TaskFamily> families;
    std::stringstream ss(csv);
    std::string name;
    while (std::getline(ss, name, ',')) {
        const auto family = parse_task_family(name);
        if (!family) throw CLI::ValidationError("--families", "unknown family: " + name);
        families.push_back(*family);
    }
    if (families.empty()) throw CLI::ValidationError("--families", "no families given");
    return families;
}

void write_text(const std::string& path, const std::string& text) {
    if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// --config FILE holds key = value lines; explicit command-line flags win.
// Expansion happens before CLI11 sees the arguments, so unknown keys surface
// as ordinary unknown-flag errors.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::string config_path;
    for (size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") {
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
            break;
        }
    }
    if (config_path.empty()) return args;
    if (args.size() < 2) throw std::runtime_error("--config requires a subcommand");

    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read config file: " + config_path);

    std::vector<std::string> expanded(args.begin(), args.begin() + 2); // program + subcommand
    std::string line;
    while (std::getline(in, line)) {
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#' || stripped[0] == '[') continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config line is not key = value: " + stripped);
        const std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        const std::string flag = "--" + key;
        bool overridden = false;
        for (size_t i = 2; i < args.size(); ++i)
            if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) overridden = true;
        if (!overridden) expanded.push_back(flag + "=" + value);
    }
    expanded.insert(expanded.end(), args.begin() + 2, args.end());
    return expanded;
}

// The resolved config is the reproducibility artifact; timestamps live only in
// the run manifest next to it.
void write_run_artifacts(CLI::App* cmd, const std::string& dir_or_prefix, bool is_dir) {
    const std::string base = is_dir ? dir_or_prefix + "/" : dir_or_prefix + ".";
    std::string resolved;
    std::istringstream lines(cmd->config_to_str(true, false));
    for (std::string line; std::getline(lines, line);)
        if (line.rfind("config=", 0) != 0) resolved += line + "\n"; // the file never names itself
    write_text(base + "config.ini", resolved);
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char stamp[64];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    std::string manifest = "command = " + cmd->get_name() + "\n";
    manifest += std::string("finished = ") + stamp + "\n";
    manifest += "version = webgym 0.1.0\n";
    write_text(base + "run_manifest.txt", manifest);
}

std::string eval_report_text(const std::vector<int>& budgets, const std::vector<EvalReport>& reports,
                             const std::string& checkpoint, const std::string& format) {
    std::string out = "# webgym evaluation report\n";
    out += "# checkpoint: " + checkpoint + "\n";
    out += "# format: " + format + "\n";
    out += "# per-task: task_id family budget reward interactions agent_tokens exited\n";
    char buf[64];
    for (size_t b = 0; b < budgets.size(); ++b) {
        for (const EvalTaskResult& r : reports[b].tasks) {
            out += r.task_id;
            out += ' ';
            out += task_family_name(r.family);
            std::snprintf(buf, sizeof(buf), " %d %d %d %lld %d\n", budgets[b], r.reward, r.interactions,
                          static_cast<long long>(r.agent_tokens), r.exited ? 1 : 0);
            out += buf;
        }
    }
    out += "# summary: budget success_rate exit_successes\n";
    for (size_t b = 0; b < budgets.size(); ++b) {
        int exit_successes = 0;
        for (const EvalTaskResult& r : reports[b].tasks)
            if (r.exited && r.reward == 1) ++exit_successes;
        std::snprintf(buf, sizeof(buf), "%d %.6f %d\n", budgets[b], reports[b].success_rate, exit_successes);
        out += buf;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multi-turn RL pipeline for simulated web agents"};
    app.require_subcommand(1);

    // --config is expanded by hand before parsing; register it per
    // subcommand only so it shows up in --help.
    auto add_config = [](CLI::App* cmd) {
        std::string ignored;
        cmd->add_option("--config", ignored, "key = value file; command-line flags override file values");
    };

    // ---- gen-tasks ----
    auto* gen_tasks = app.add_subcommand("gen-tasks", "generate a deterministic task suite");
    std::string gt_families = "navigate";
    int gt_count = 10;
    uint64_t gt_seed = 0;
    std::string gt_out = "tasks.jsonl";
    gen_tasks->add_option("--families", gt_families, "comma-separated: navigate,form_fill,lookup_answer");
    gen_tasks->add_option("--count", gt_count, "number of tasks")->check(CLI::PositiveNumber);
    gen_tasks->add_option("--seed", gt_seed, "suite seed");
    gen_tasks->add_option("--out", gt_out, "output task file (jsonl)");
    add_config(gen_tasks);

    // ---- gen-demos ----
    auto* gen_demos = app.add_subcommand("gen-demos", "synthesize expert demonstrations via the scripted solvers");
    std::string gd_tasks, gd_out = "demos.jsonl", gd_format = "think";
    bool gd_cot = false;
    int gd_budget = 10;
    gen_demos->add_option("--tasks", gd_tasks, "task file")->required();
    gen_demos->add_option("--out", gd_out, "output demonstration file");
    gen_demos->add_option("--format", gd_format, "think|plain response format");
    gen_demos->add_flag("--cot", gd_cot, "emit extended chain-of-thought remarks");
    gen_demos->add_option("--budget", gd_budget, "max interactions per episode")->check(CLI::PositiveNumber);
    add_config(gen_demos);

    // ---- train-bc ----
    auto* train_bc_cmd = app.add_subcommand("train-bc", "behavior cloning on a demonstration file");
    std::string tb_demos, tb_tasks, tb_out_dir = "runs/bc", tb_format = "think";
    BcConfig tb_cfg;
    train_bc_cmd->add_option("--demos", tb_demos, "demonstration file")->required();
    train_bc_cmd->add_option("--tasks", tb_tasks, "task file the demos refer to")->required();
    train_bc_cmd->add_option("--out-dir", tb_out_dir, "output directory");
    train_bc_cmd->add_option("--format", tb_format, "think|plain response format");
    train_bc_cmd->add_option("--updates", tb_cfg.updates, "optimizer steps")->check(CLI::PositiveNumber);
    train_bc_cmd->add_option("--batch", tb_cfg.batch_size, "minibatch size")->check(CLI::PositiveNumber);
    train_bc_cmd->add_option("--lr", tb_cfg.learning_rate, "learning rate");
    train_bc_cmd->add_option("--seed", tb_cfg.seed, "run seed");
    train_bc_cmd->add_option("--embed-dim", tb_cfg.policy.embed_dim, "embedding width");
    train_bc_cmd->add_option("--hidden-dim", tb_cfg.policy.hidden_dim, "recurrent width");
    add_config(train_bc_cmd);

    // ---- train-rl ----
    auto* train_rl_cmd = app.add_subcommand("train-rl", "M-GRPO training against the simulated web environment");
    std::string tr_tasks, tr_out_dir = "runs/rl", tr_format = "think", tr_mode = "r1", tr_bc_checkpoint;
    bool tr_dump = false;
    MGRPOConfig tr_cfg;
    PolicyConfig tr_policy;
    train_rl_cmd->add_option("--tasks", tr_tasks, "training task file")->required();
    train_rl_cmd->add_option("--out-dir", tr_out_dir, "output directory");
    train_rl_cmd->add_option("--mode", tr_mode, "r1 (BC init) | r1-zero (fresh init) | r1-cot (CoT BC init)");
    train_rl_cmd->add_option("--bc-checkpoint", tr_bc_checkpoint, "BC checkpoint for r1/r1-cot");
    train_rl_cmd->add_option("--format", tr_format, "think|plain response format");
    train_rl_cmd->add_option("--updates", tr_cfg.updates, "number of M-GRPO updates")->check(CLI::PositiveNumber);
    train_rl_cmd->add_option("--group-size", tr_cfg.group_size, "trajectories per group (G)")
        ->check(CLI::Range(2, 64));
    train_rl_cmd->add_option("--clip-ratio", tr_cfg.clip_ratio, "clip epsilon");
    train_rl_cmd->add_option("--kl-coeff", tr_cfg.kl_coeff, "KL coefficient beta");
    train_rl_cmd->add_option("--lr", tr_cfg.learning_rate, "learning rate");
    train_rl_cmd->add_option("--budget", tr_cfg.max_interactions, "max interactions per episode")
        ->check(CLI::PositiveNumber);
    train_rl_cmd->add_option("--seed", tr_cfg.seed, "run seed");
    train_rl_cmd->add_option("--threads", tr_cfg.threads, "rollout/loss worker threads (0 = auto)");
    train_rl_cmd->add_option("--max-new-tokens", tr_cfg.max_new_tokens, "sampling cap per action");
    train_rl_cmd->add_option("--embed-dim", tr_policy.embed_dim, "embedding width (r1-zero)");
    train_rl_cmd->add_option("--hidden-dim", tr_policy.hidden_dim, "recurrent width (r1-zero)");
    train_rl_cmd->add_flag("--dump-trajectories", tr_dump, "append every rollout episode to trajectories.jsonl");
    add_config(train_rl_cmd);

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over a task suite");
    std::string ev_tasks, ev_checkpoint, ev_out = "eval_report.txt", ev_format = "think", ev_decode = "greedy";
    std::string ev_budgets = "10";
    uint64_t ev_seed = 0;
    int ev_threads = 0;
    bool ev_dump = false;
    eval_cmd->add_option("--tasks", ev_tasks, "task file")->required();
    eval_cmd->add_option("--checkpoint", ev_checkpoint, "policy checkpoint")->required();
    eval_cmd->add_option("--out", ev_out, "report file");
    eval_cmd->add_option("--budgets", ev_budgets, "comma-separated interaction budgets");
    eval_cmd->add_option("--format", ev_format, "think|plain response format");
    eval_cmd->add_option("--decode", ev_decode, "greedy|sampled");
    eval_cmd->add_option("--seed", ev_seed, "sampling seed (sampled decode)");
    eval_cmd->add_option("--threads", ev_threads, "worker threads (0 = auto)");
    eval_cmd->add_flag("--dump-trajectories", ev_dump, "write evaluated episodes next to the report");
    add_config(eval_cmd);

    // ---- replay ----
    auto* replay_cmd = app.add_subcommand("replay", "render a stored trajectory turn by turn");
    std::string rp_file;
    int rp_episode = -1;
    replay_cmd->add_option("--trajectories", rp_file, "trajectory/demonstration file")->required();
    replay_cmd->add_option("--episode", rp_episode, "episode index (default: all)");
    add_config(replay_cmd);

    // ---- report ----
    auto* report_cmd = app.add_subcommand("report", "smooth training-dynamics curves from a metrics table");
    std::string rd_metrics, rd_out = "dynamics.tsv";
    int rd_window = 10;
    report_cmd->add_option("--metrics", rd_metrics, "train-rl metrics table")->required();
    report_cmd->add_option("--out", rd_out, "smoothed output table");
    report_cmd->add_option("--window", rd_window, "moving-average window")->check(CLI::PositiveNumber);
    add_config(report_cmd);

    std::vector<std::string> args;
    try {
        args = expand_config_args(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    // CLI11 wants reversed argument order when parsing from a vector.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    reversed.pop_back(); // drop program name
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen_tasks->parsed()) {
            const auto suite = generate_mixed_suite(parse_families(gt_families), gt_count, gt_seed);
            save_task_suite(gt_out, suite);
            write_run_artifacts(gen_tasks, gt_out, false);
            std::cout << "wrote " << suite.size() << " tasks to " << gt_out << "\n";
        } else if (gen_demos->parsed()) {
            const auto suite = load_task_suite(gd_tasks);
            const auto demos = synthesize_demos(suite, prompt_config_for(gd_format), gd_cot, gd_budget);
            save_demos(gd_out, demos);
            write_run_artifacts(gen_demos, gd_out, false);
            std::cout << "wrote " << demos.size() << " demonstrations to " << gd_out << "\n";
        } else if (train_bc_cmd->parsed()) {
            const auto suite = load_task_suite(tb_tasks);
            const auto demos = load_demos(tb_demos, suite);
            const auto prompt_cfg = prompt_config_for(tb_format);
            const BcResult result = train_bc(demos, tb_cfg, prompt_cfg);
            fs::create_directories(tb_out_dir);
            save_checkpoint(tb_out_dir + "/bc.ckpt", result.params);
            save_metrics(tb_out_dir + "/bc_metrics.tsv", result.metrics);
            write_run_artifacts(train_bc_cmd, tb_out_dir, true);
            const auto losses = result.metrics.column("loss");
            std::cout << "bc: " << demos.size() << " demos, " << tb_cfg.updates << " updates, final loss "
                      << (losses.empty() ? 0.0 : losses.back()) << "\n";
        } else if (train_rl_cmd->parsed()) {
            const auto suite = load_task_suite(tr_tasks);
            const auto prompt_cfg = prompt_config_for(tr_format);

            PolicyParams init;
            if (tr_mode == "r1" || tr_mode == "r1-cot") {
                if (tr_bc_checkpoint.empty())
                    throw CLI::ValidationError("--bc-checkpoint", "required for mode " + tr_mode);
                init = load_checkpoint(tr_bc_checkpoint);
            } else if (tr_mode == "r1-zero") {
                init = init_params(tr_policy, substream(tr_cfg.seed, "rl-zero-init"));
            } else {
                throw CLI::ValidationError("--mode", "expected r1, r1-zero or r1-cot");
            }
            const PolicySnapshot ref{init, 0}; // frozen for the whole run

            fs::create_directories(tr_out_dir);
            const std::string dump_path = tr_dump ? tr_out_dir + "/trajectories.jsonl" : "";
            const RlResult result = train_rl(suite, init, ref, tr_cfg, prompt_cfg, dump_path);
            save_checkpoint(tr_out_dir + "/rl.ckpt", result.params);
            save_metrics(tr_out_dir + "/rl_metrics.tsv", result.metrics);
            save_metrics(tr_out_dir + "/rl_dynamics.tsv", report_dynamics(result.metrics, 10));
            write_run_artifacts(train_rl_cmd, tr_out_dir, true);
            const auto rewards = result.metrics.column("mean_reward");
            std::cout << "rl(" << tr_mode << "): " << tr_cfg.updates << " updates, final mean reward "
                      << (rewards.empty() ? 0.0 : rewards.back()) << "\n";
        } else if (eval_cmd->parsed()) {
            const auto suite = load_task_suite(ev_tasks);
            const PolicySnapshot snapshot{load_checkpoint(ev_checkpoint), 0};
            const auto prompt_cfg = prompt_config_for(ev_format);
            if (ev_decode != "greedy" && ev_decode != "sampled")
                throw CLI::ValidationError("--decode", "expected greedy or sampled");

            std::vector<int> budgets;
            std::stringstream ss(ev_budgets);
            std::string tok;
            while (std::getline(ss, tok, ',')) budgets.push_back(std::stoi(tok));
            if (budgets.empty()) throw CLI::ValidationError("--budgets", "no budgets given");

            std::vector<EvalReport> reports;
            for (int budget : budgets) {
                EvalOptions options;
                options.max_interactions = budget;
                options.sampled = ev_decode == "sampled";
                options.seed = ev_seed;
                options.threads = ev_threads;
                reports.push_back(evaluate_policy(suite, snapshot, prompt_cfg, options));
            }
            write_text(ev_out, eval_report_text(budgets, reports, ev_checkpoint, ev_format));
            if (ev_dump) {
                std::vector<EpisodeRecord> episodes;
                for (const auto& report : reports)
                    episodes.insert(episodes.end(), report.episodes.begin(), report.episodes.end());
                save_episodes(ev_out + ".trajectories.jsonl", episodes);
            }
            write_run_artifacts(eval_cmd, ev_out, false);
            for (size_t b = 0; b < budgets.size(); ++b)
                std::cout << "budget " << budgets[b] << ": success rate " << reports[b].success_rate << "\n";
        } else if (replay_cmd->parsed()) {
            const auto episodes = load_episodes(rp_file);
            for (size_t i = 0; i < episodes.size(); ++i) {
                if (rp_episode >= 0 && static_cast<size_t>(rp_episode) != i) continue;
                const EpisodeRecord& ep = episodes[i];
                std::cout << "=== episode " << i << " task " << ep.task_id << " instance " << ep.instance
                          << " reward " << ep.reward << " interactions " << ep.interactions << " ===\n";
                for (const TurnRecord& turn : ep.turns) {
                    std::cout << "--- round " << turn.round << " ---\n";
                    std::cout << "observation: " << turn.observation << "\n";
                    if (turn.remarks) std::cout << "remarks: " << *turn.remarks << "\n";
                    std::cout << "agent: " << turn.agent_text << "\n";
                    std::cout << "action: " << (turn.action.empty() ? "<invalid>" : turn.action) << "\n";
                }
            }
        } else if (report_cmd->parsed()) {
            const auto table = load_metrics(rd_metrics);
            save_metrics(rd_out, report_dynamics(table, rd_window));
            std::cout << "wrote smoothed dynamics to " << rd_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
