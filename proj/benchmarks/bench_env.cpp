#include <benchmark/benchmark.h>

#include "webgym/env.hpp"
#include "webgym/sitegen.hpp"

using namespace webgym;

static void BM_BuildSite(benchmark::State& state) {
    int64_t seed = 0;
    for (auto _ : state) {
        Site site = build_site(seed++);
        benchmark::DoNotOptimize(site.pages.size());
    }
}
BENCHMARK(BM_BuildSite);

static void BM_RenderObservation(benchmark::State& state) {
    const auto suite = generate_task_suite(TaskFamily::Navigate, 1, 0);
    const WorldState world = new_world(suite[0]);
    for (auto _ : state) {
        std::string obs = render_observation(world);
        benchmark::DoNotOptimize(obs.data());
    }
}
BENCHMARK(BM_RenderObservation);

static void BM_SolverReplay(benchmark::State& state) {
    const auto suite = generate_task_suite(TaskFamily::LookupAnswer, 8, 0);
    for (auto _ : state) {
        for (const TaskSpec& task : suite) {
            WorldState world = new_world(task);
            for (const Action& a : scripted_solver(task)) apply_action(world, a);
            benchmark::DoNotOptimize(evaluate(world, task.rubric));
        }
    }
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_SolverReplay);
