#include "webgym/rollout.hpp"

#include <atomic>
#include <thread>

namespace webgym {

namespace {

struct EpisodeOutput {
    TrajectorySample trajectory;
    EpisodeRecord episode;
    bool exited = false;
};

// One full episode: render -> compress -> prompt -> sample -> parse -> apply,
// until Exit or budget exhaustion. The incremental GRU state is advanced over
// exactly the tokens a from-scratch materialization would produce, so the
// recorded contexts and log-probs are bit-identical to a replay.
EpisodeOutput run_episode(const TaskSpec& task, const PolicySnapshot& snapshot, const PromptConfig& prompt_cfg,
                          const SampleConfig& sample_cfg, int max_interactions, uint64_t instance_seed,
                          int instance) {
    const PolicyParams& params = snapshot.params;
    Rng rng(instance_seed);

    EpisodeOutput out;
    out.episode.task_id = task.task_id;
    out.episode.instance = instance;

    WorldState world = new_world(task, max_interactions);

    std::vector<Token> context = prompt_prefix_tokens(task.instruction, prompt_cfg);
    GruState prefix_state = initial_state(params);
    advance_state(params, prefix_state, context);

    int round = 0;
    for (;;) {
        const std::string observation = render_observation(world);
        const std::string section = observation_section(observation);
        const std::vector<Token> section_tokens = tokenize(section);

        // Branch off the compressed prefix for this round's full observation.
        std::vector<Token> ctx_tokens = context;
        ctx_tokens.insert(ctx_tokens.end(), section_tokens.begin(), section_tokens.end());
        GruState branch = prefix_state;
        advance_state(params, branch, section_tokens);

        const SampledTokens sampled = sample_from_state(params, branch, sample_cfg, rng);
        const std::string agent_text = detokenize(sampled.tokens);

        ActionSample action_sample;
        action_sample.ctx = make_training_context(ctx_tokens, sampled.tokens);
        action_sample.old_logprobs = sampled.logprobs;
        out.trajectory.actions.push_back(std::move(action_sample));
        out.trajectory.agent_tokens += static_cast<int64_t>(sampled.tokens.size());

        AgentMessage msg;
        std::string parse_error;
        StepResult step;
        std::string action_dsl;
        if (try_parse_response(agent_text, prompt_cfg, msg, &parse_error)) {
            step = apply_action(world, msg.parsed_action);
            action_dsl = format_action(msg.parsed_action);
        } else {
            step = note_invalid_step(world);
        }

        TurnRecord record;
        record.round = round;
        record.observation = observation;
        record.agent_text = agent_text;
        record.action = action_dsl;
        record.old_logprobs = sampled.logprobs;
        out.episode.turns.push_back(std::move(record));

        if (step.terminated) break;

        // Fold this round into the compressed prefix: placeholder observation,
        // agent text verbatim.
        const std::vector<Token> folded =
            tokenize(completed_turn_section(kObservationPlaceholder, agent_text));
        context.insert(context.end(), folded.begin(), folded.end());
        advance_state(params, prefix_state, folded);
        ++round;
    }

    out.trajectory.reward = evaluate(world, task.rubric);
    out.trajectory.interactions = world.step_count;
    out.exited = world.exit_message.has_value();
    out.episode.reward = static_cast<int>(out.trajectory.reward);
    out.episode.interactions = world.step_count;
    out.episode.agent_tokens = out.trajectory.agent_tokens;
    return out;
}

int resolve_threads(int requested, int jobs) {
    int threads = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, std::min(threads, jobs));
}

} // namespace

RolloutResult rollout_group(const TaskSpec& task, const PolicySnapshot& snapshot, const PromptConfig& prompt_cfg,
                            const RolloutConfig& cfg) {
    if (cfg.group_size < 1) throw std::invalid_argument("rollout_group: group_size must be >= 1");

    const uint64_t task_stream = substream(cfg.run_seed, "rollout-task", fnv1a64(task.task_id));
    std::vector<EpisodeOutput> outputs(static_cast<size_t>(cfg.group_size));

    auto run_instance = [&](int instance) {
        const uint64_t seed = substream(task_stream, "instance", static_cast<uint64_t>(instance));
        outputs[static_cast<size_t>(instance)] =
            run_episode(task, snapshot, prompt_cfg, cfg.sample, cfg.max_interactions, seed, instance);
    };

    const int threads = resolve_threads(cfg.threads, cfg.group_size);
    if (threads == 1) {
        for (int i = 0; i < cfg.group_size; ++i) run_instance(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads));
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const int i = next.fetch_add(1);
                    if (i >= cfg.group_size) return;
                    run_instance(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    RolloutResult result;
    result.batch.task_id = task.task_id;
    for (EpisodeOutput& output : outputs) {
        result.batch.trajectories.push_back(std::move(output.trajectory));
        result.episodes.push_back(std::move(output.episode));
    }
    return result;
}

EvalReport evaluate_policy(const std::vector<TaskSpec>& suite, const PolicySnapshot& snapshot,
                           const PromptConfig& prompt_cfg, const EvalOptions& options) {
    EvalReport report;
    report.tasks.resize(suite.size());
    report.episodes.resize(suite.size());

    SampleConfig sample_cfg;
    sample_cfg.greedy = !options.sampled;

    std::atomic<size_t> next{0};
    auto run_task = [&](size_t i) {
        const TaskSpec& task = suite[i];
        const uint64_t seed =
            options.sampled ? substream(options.seed, "eval-task", fnv1a64(task.task_id)) : uint64_t{0};
        EpisodeOutput output =
            run_episode(task, snapshot, prompt_cfg, sample_cfg, options.max_interactions, seed, 0);

        EvalTaskResult r;
        r.task_id = task.task_id;
        r.family = task.family;
        r.reward = static_cast<int>(output.trajectory.reward);
        r.interactions = output.trajectory.interactions;
        r.agent_tokens = output.trajectory.agent_tokens;
        r.exited = output.exited;
        report.tasks[i] = std::move(r);
        report.episodes[i] = std::move(output.episode);
    };

    const int threads = resolve_threads(options.threads, static_cast<int>(suite.size()));
    if (threads == 1) {
        for (size_t i = 0; i < suite.size(); ++i) run_task(i);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads));
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= suite.size()) return;
                    run_task(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    double sum = 0.0;
    for (const EvalTaskResult& r : report.tasks) sum += r.reward;
    report.success_rate = suite.empty() ? 0.0 : sum / static_cast<double>(suite.size());
    return report;
}

} // namespace webgym
