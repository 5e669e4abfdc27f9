#include <benchmark/benchmark.h>

#include "webgym/rollout.hpp"

using namespace webgym;

// Group rollout against a fresh (uniform) policy: worst-case trajectory
// lengths, since nothing terminates early.
static void BM_RolloutGroup(benchmark::State& state) {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 0);
    const PolicySnapshot snapshot{init_params(PolicyConfig{}, 0), 0};
    const PromptConfig prompt_cfg;
    RolloutConfig cfg;
    cfg.group_size = static_cast<int>(state.range(0));
    cfg.max_interactions = 4;
    cfg.sample.max_new_tokens = 32;
    uint64_t seed = 0;
    for (auto _ : state) {
        cfg.run_seed = seed++;
        RolloutResult result = rollout_group(suite[0], snapshot, prompt_cfg, cfg);
        benchmark::DoNotOptimize(result.batch.trajectories.size());
    }
}
BENCHMARK(BM_RolloutGroup)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);
