#include "webgym/bc.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace webgym {

namespace {

std::string extended_remark(const std::string& remark, const TaskSpec& task, const Action& action) {
    // Longer first-person reasoning in the long-CoT style; purely templated.
    std::string out = "The task is: " + task.instruction + " Looking at the current page, I should ";
    switch (action.kind) {
        case ActionKind::Click: out += "follow the matching link to get closer to the goal."; break;
        case ActionKind::Type: out += "fill the requested value into the form field."; break;
        case ActionKind::SelectDropdownOption: out += "pick the requested option from the dropdown."; break;
        case ActionKind::Exit: out += "finish the session now that the goal is reached."; break;
        default: out += "perform the next scripted step."; break;
    }
    out += " ";
    out += remark;
    out += " Element " + std::to_string(action.element >= 0 ? action.element : 0) +
           " is the one to act on, so I will do that now.";
    return out;
}

} // namespace

std::vector<Demonstration> synthesize_demos(const std::vector<TaskSpec>& suite, const PromptConfig& cfg,
                                            bool extended_cot, int max_interactions) {
    std::vector<Demonstration> demos;
    demos.reserve(suite.size());
    for (const TaskSpec& task : suite) {
        const std::vector<SolverStep> steps = scripted_solver_steps(task);
        if (static_cast<int>(steps.size()) > max_interactions)
            throw std::runtime_error("synthesize_demos: solver exceeds interaction budget for " + task.task_id);

        Demonstration demo;
        demo.task_id = task.task_id;
        demo.instruction = task.instruction;

        WorldState world = new_world(task, max_interactions);
        for (const SolverStep& step : steps) {
            DemoTurn turn;
            turn.observation = render_observation(world);
            const std::string remark =
                extended_cot ? extended_remark(step.remark, task, step.action) : step.remark;
            if (cfg.think_mode) turn.remark = remark;
            turn.action = step.action;
            turn.agent_text = format_agent_text(remark, step.action, cfg);
            demo.turns.push_back(std::move(turn));

            const StepResult result = apply_action(world, step.action);
            if (result.invalid_action)
                throw std::runtime_error("synthesize_demos: solver step rejected for " + task.task_id);
        }
        if (evaluate(world, task.rubric) != 1)
            throw std::runtime_error("synthesize_demos: solver replay failed for " + task.task_id);
        demos.push_back(std::move(demo));
    }
    return demos;
}

void save_demos(const std::string& path, const std::vector<Demonstration>& demos) {
    std::vector<EpisodeRecord> episodes;
    episodes.reserve(demos.size());
    for (const Demonstration& demo : demos) {
        EpisodeRecord ep;
        ep.task_id = demo.task_id;
        ep.instance = 0;
        ep.reward = 1;
        ep.interactions = static_cast<int>(demo.turns.size());
        int64_t tokens = 0;
        for (size_t i = 0; i < demo.turns.size(); ++i) {
            const DemoTurn& turn = demo.turns[i];
            TurnRecord rec;
            rec.round = static_cast<int>(i);
            rec.observation = turn.observation;
            rec.remarks = turn.remark;
            rec.agent_text = turn.agent_text;
            rec.action = format_action(turn.action);
            ep.turns.push_back(std::move(rec));
            tokens += static_cast<int64_t>(turn.agent_text.size()) + 1; // +1 for EOS
        }
        ep.agent_tokens = tokens;
        episodes.push_back(std::move(ep));
    }
    save_episodes(path, episodes);
}

std::vector<Demonstration> load_demos(const std::string& path, const std::vector<TaskSpec>& suite) {
    std::map<std::string, const TaskSpec*> by_id;
    for (const TaskSpec& task : suite) by_id[task.task_id] = &task;

    std::vector<Demonstration> demos;
    for (const EpisodeRecord& ep : load_episodes(path)) {
        auto it = by_id.find(ep.task_id);
        if (it == by_id.end())
            throw std::runtime_error("load_demos: task " + ep.task_id + " not present in task file");
        Demonstration demo;
        demo.task_id = ep.task_id;
        demo.instruction = it->second->instruction;
        for (const TurnRecord& rec : ep.turns) {
            DemoTurn turn;
            turn.observation = rec.observation;
            turn.remark = rec.remarks;
            turn.action = parse_action_dsl(rec.action);
            turn.agent_text = rec.agent_text;
            demo.turns.push_back(std::move(turn));
        }
        demos.push_back(std::move(demo));
    }
    return demos;
}

MaterializedContext make_step_example(const std::string& instruction, const std::vector<Turn>& completed,
                                      const std::string& current_observation, const std::string& agent_text,
                                      const PromptConfig& cfg) {
    std::vector<Turn> history = completed;
    Turn pending;
    pending.observation_text = current_observation;
    history.push_back(pending);

    const std::vector<Token> prompt = build_prompt(instruction, compress(history), cfg);
    std::vector<Token> action_tokens = tokenize(agent_text);
    action_tokens.push_back(kTokenEos);
    return make_training_context(prompt, action_tokens);
}

std::vector<MaterializedContext> make_bc_examples(const std::vector<Demonstration>& demos,
                                                  const PromptConfig& cfg) {
    std::vector<MaterializedContext> examples;
    for (const Demonstration& demo : demos) {
        std::vector<Turn> completed;
        for (const DemoTurn& turn : demo.turns) {
            examples.push_back(
                make_step_example(demo.instruction, completed, turn.observation, turn.agent_text, cfg));
            Turn done;
            done.observation_text = turn.observation;
            done.agent_text = turn.agent_text;
            completed.push_back(std::move(done));
        }
    }
    return examples;
}

double bc_loss(const PolicyParams& params, const std::vector<const MaterializedContext*>& batch,
               std::vector<double>& grad) {
    size_t total_tokens = 0;
    for (const MaterializedContext* ctx : batch)
        for (uint8_t m : ctx->loss_mask) total_tokens += m;
    if (total_tokens == 0) throw std::invalid_argument("bc_loss: batch has no masked action token");

    const double w = -1.0 / static_cast<double>(total_tokens);
    double loss = 0.0;
    for (const MaterializedContext* ctx : batch) {
        size_t scored = 0;
        for (uint8_t m : ctx->loss_mask) scored += m;
        const std::vector<double> weights(scored, w);
        loss += grad_weighted_log_probs(params, *ctx, weights, grad);
    }
    return loss;
}

double bc_loss_value(const PolicyParams& params, const std::vector<const MaterializedContext*>& batch) {
    size_t total_tokens = 0;
    double sum = 0.0;
    for (const MaterializedContext* ctx : batch) {
        const std::vector<double> logps = log_probs_masked(params, *ctx);
        for (double lp : logps) sum += lp;
        total_tokens += logps.size();
    }
    if (total_tokens == 0) throw std::invalid_argument("bc_loss_value: batch has no masked action token");
    return -sum / static_cast<double>(total_tokens);
}

BcResult train_bc(const std::vector<Demonstration>& demos, const BcConfig& cfg, const PromptConfig& prompt_cfg) {
    if (demos.empty()) throw std::invalid_argument("train_bc: no demonstrations");
    const std::vector<MaterializedContext> examples = make_bc_examples(demos, prompt_cfg);

    BcResult result;
    result.params = init_params(cfg.policy, substream(cfg.seed, "bc-init"));
    result.metrics.columns = {"update", "loss"};

    Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8}, result.params.size());
    std::vector<double> grad = result.params.zeros_like();

    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = 0;
    uint64_t epoch = 0;

    auto reshuffle = [&]() {
        Rng rng(substream(cfg.seed, "bc-shuffle", epoch++));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
        cursor = 0;
    };
    reshuffle();

    for (int update = 0; update < cfg.updates; ++update) {
        const double progress = cfg.updates > 1 ? static_cast<double>(update) / (cfg.updates - 1) : 1.0;
        const int warmup = static_cast<int>(cfg.warmup_frac * cfg.updates);
        double lr = cfg.learning_rate;
        if (warmup > 0 && update < warmup) lr *= static_cast<double>(update + 1) / warmup;
        else if (cfg.cosine_schedule) lr *= 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
        opt.set_lr(lr);

        std::vector<const MaterializedContext*> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) reshuffle();
            batch.push_back(&examples[order[cursor++]]);
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = bc_loss(result.params, batch, grad);
        opt.step(result.params.data, grad);
        result.metrics.add_row({static_cast<double>(update), loss});
    }
    return result;
}

} // namespace webgym
