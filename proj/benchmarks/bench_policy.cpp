#include <benchmark/benchmark.h>

#include "webgym/policy.hpp"

using namespace webgym;

namespace {

PolicyParams bench_params() {
    static PolicyParams params = init_params(PolicyConfig{}, 1);
    return params;
}

std::vector<Token> random_bytes(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<Token> out(n);
    for (auto& t : out) t = static_cast<Token>(rng.next_below(256));
    return out;
}

} // namespace

static void BM_AdvanceState(benchmark::State& state) {
    const PolicyParams params = bench_params();
    const auto tokens = random_bytes(static_cast<size_t>(state.range(0)), 3);
    for (auto _ : state) {
        GruState s = initial_state(params);
        advance_state(params, s, tokens);
        benchmark::DoNotOptimize(s.h.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AdvanceState)->Arg(256)->Arg(1024)->Arg(4096);

static void BM_LogProbs(benchmark::State& state) {
    const PolicyParams params = bench_params();
    const auto context = random_bytes(static_cast<size_t>(state.range(0)), 5);
    const auto continuation = random_bytes(96, 7);
    for (auto _ : state) {
        auto lp = log_probs(params, context, continuation);
        benchmark::DoNotOptimize(lp.data());
    }
    state.SetItemsProcessed(state.iterations() * (state.range(0) + 96));
}
BENCHMARK(BM_LogProbs)->Arg(512)->Arg(1024)->Arg(2048);

static void BM_GradWeightedLogProbs(benchmark::State& state) {
    const PolicyParams params = bench_params();
    auto prompt = random_bytes(static_cast<size_t>(state.range(0)), 11);
    prompt.insert(prompt.begin(), kTokenBos);
    auto action = random_bytes(96, 13);
    action.push_back(kTokenEos);
    const MaterializedContext ctx = make_training_context(prompt, action);
    const std::vector<double> weights(action.size(), -0.01);
    std::vector<double> grad = params.zeros_like();
    for (auto _ : state) {
        std::fill(grad.begin(), grad.end(), 0.0);
        benchmark::DoNotOptimize(grad_weighted_log_probs(params, ctx, weights, grad));
    }
    state.SetItemsProcessed(state.iterations() * (state.range(0) + 97));
}
BENCHMARK(BM_GradWeightedLogProbs)->Arg(512)->Arg(1024)->Arg(2048);

static void BM_Sample(benchmark::State& state) {
    const PolicyParams params = bench_params();
    const auto context = random_bytes(512, 17);
    SampleConfig cfg;
    cfg.max_new_tokens = static_cast<int>(state.range(0));
    uint64_t seed = 0;
    for (auto _ : state) {
        cfg.rng_seed = seed++;
        auto toks = sample(params, context, cfg);
        benchmark::DoNotOptimize(toks.data());
    }
}
BENCHMARK(BM_Sample)->Arg(32)->Arg(128);
