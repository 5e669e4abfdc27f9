#pragma once

#include "webgym/mgrpo.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace webgym {

struct RolloutConfig {
    int group_size = 8;
    int max_interactions = 10;
    SampleConfig sample;   // temperature/top-p 1.0; greedy only for evaluation
    uint64_t run_seed = 0; // per-instance streams derive from (run_seed, task_id, instance)
    int threads = 0;       // 0 = hardware concurrency, capped at group_size
};

struct RolloutResult {
    GroupBatch batch;                    // ordered by instance index
    std::vector<EpisodeRecord> episodes; // same order, persistence-ready
};

// G independent episodes for one task against a frozen snapshot. Each worker
// owns its WorldState and history; old log-probs are recorded at generation
// time. The result is a pure function of (task, snapshot, seeds) regardless
// of worker interleaving.
RolloutResult rollout_group(const TaskSpec& task, const PolicySnapshot& snapshot, const PromptConfig& prompt_cfg,
                            const RolloutConfig& cfg);

struct EvalOptions {
    int max_interactions = 10;
    bool sampled = false; // default greedy decoding
    uint64_t seed = 0;    // sampled decoding only
    int threads = 0;
};

struct EvalTaskResult {
    std::string task_id;
    TaskFamily family = TaskFamily::Navigate;
    int reward = 0;
    int interactions = 0;
    int64_t agent_tokens = 0;
    bool exited = false; // episode ended via Exit rather than budget exhaustion
};

struct EvalReport {
    double success_rate = 0.0;
    std::vector<EvalTaskResult> tasks;
    std::vector<EpisodeRecord> episodes;
};

// One episode per task; success rate is the mean binary reward.
EvalReport evaluate_policy(const std::vector<TaskSpec>& suite, const PolicySnapshot& snapshot,
                           const PromptConfig& prompt_cfg, const EvalOptions& options);

} // namespace webgym
