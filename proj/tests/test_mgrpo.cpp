#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "test_support.hpp"
#include "webgym/mgrpo.hpp"
#include "webgym/rollout.hpp"

#include <cmath>

using namespace webgym;
using namespace testsupport;

namespace {

PolicyConfig tiny_config() {
    PolicyConfig cfg;
    cfg.vocab = 8;
    cfg.embed_dim = 4;
    cfg.hidden_dim = 4;
    cfg.max_seq = 512;
    return cfg;
}

// Builds a synthetic group: G trajectories over a small vocab, with action
// token sequences sampled from the generating snapshot and old log-probs
// recorded from it.
GroupBatch synthetic_batch(const PolicyParams& gen, const std::vector<double>& rewards, uint64_t seed,
                           int actions_per_traj = 2, int tokens_per_action = 4) {
    GroupBatch batch;
    batch.task_id = "synthetic";
    Rng rng(seed);
    for (size_t i = 0; i < rewards.size(); ++i) {
        TrajectorySample traj;
        traj.reward = rewards[i];
        traj.interactions = actions_per_traj;
        for (int j = 0; j < actions_per_traj; ++j) {
            std::vector<Token> prompt{0}; // tiny vocab: token 0 stands in for BOS
            for (int k = 0; k < 6; ++k) prompt.push_back(static_cast<Token>(rng.next_below(8)));
            std::vector<Token> action;
            for (int k = 0; k < tokens_per_action; ++k) action.push_back(static_cast<Token>(rng.next_below(8)));
            ActionSample sample;
            sample.ctx = make_training_context(prompt, action);
            sample.old_logprobs = log_probs_masked(gen, sample.ctx);
            traj.agent_tokens += static_cast<int64_t>(action.size());
            traj.actions.push_back(std::move(sample));
        }
        batch.trajectories.push_back(std::move(traj));
    }
    return batch;
}

// Fresh inits keep the output head at zero (uniform distributions), which
// makes every ratio exactly 1. Scatter the head so snapshots genuinely differ.
PolicyParams with_random_head(PolicyParams params, uint64_t seed) {
    Rng rng(seed);
    for (size_t i = params.off_wo(); i < params.data.size(); ++i) params.data[i] = rng.next_range(-0.8, 0.8);
    return params;
}

double mgrpo_loss_value(const GroupBatch& batch, const PolicyParams& params, const PolicySnapshot& ref,
                        const MGRPOConfig& cfg) {
    // Independent scalar evaluation used as the FD target: straight loop over
    // the loss display, no gradient machinery.
    std::vector<double> rewards;
    for (const auto& traj : batch.trajectories) rewards.push_back(traj.reward);
    const AdvantageSet adv = compute_advantages(rewards, cfg.std_floor);
    REQUIRE_FALSE(adv.degenerate);
    const double g = static_cast<double>(batch.trajectories.size());
    double loss = 0.0;
    for (size_t i = 0; i < batch.trajectories.size(); ++i) {
        const auto& traj = batch.trajectories[i];
        double traj_term = 0.0;
        for (const auto& action : traj.actions) {
            const auto cur = log_probs_masked(params, action.ctx);
            const auto refl = log_probs_masked(ref.params, action.ctx);
            double action_term = 0.0;
            for (size_t t = 0; t < cur.size(); ++t) {
                const double ratio = std::exp(cur[t] - action.old_logprobs[t]);
                action_term += clipped_token_objective(ratio, adv.values[i], cfg.clip_ratio) -
                               cfg.kl_coeff * kl_token_term(cur[t], refl[t]);
            }
            traj_term += action_term / static_cast<double>(cur.size());
        }
        loss += traj_term / static_cast<double>(traj.actions.size());
    }
    return -loss / g;
}

} // namespace

TEST_CASE("advantages: [1,0,0,0]") {
    const auto adv = compute_advantages({1, 0, 0, 0});
    REQUIRE_FALSE(adv.degenerate);
    CHECK(adv.values[0] == doctest::Approx(1.732051).epsilon(1e-6));
    for (int i = 1; i < 4; ++i) CHECK(adv.values[static_cast<size_t>(i)] == doctest::Approx(-0.577350).epsilon(1e-6));
}

TEST_CASE("advantages: [1,0] is symmetric under population std") {
    const auto adv = compute_advantages({1, 0});
    CHECK(adv.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(adv.values[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("uniform rewards are degenerate") {
    const auto ones = compute_advantages({1, 1, 1, 1});
    CHECK(ones.degenerate);
    for (double a : ones.values) CHECK(a == 0.0);
    const auto zeros = compute_advantages({0, 0});
    CHECK(zeros.degenerate);
    CHECK_THROWS_AS(compute_advantages({1.0}), std::invalid_argument);
}

TEST_CASE("non-degenerate advantages normalize to mean 0, population std 1") {
    Rng rng(5);
    for (int it = 0; it < 50; ++it) {
        std::vector<double> rewards;
        const size_t g = 2 + rng.next_below(15);
        bool mixed = false;
        for (size_t i = 0; i < g; ++i) rewards.push_back(static_cast<double>(rng.next_below(2)));
        for (size_t i = 1; i < g; ++i) mixed |= rewards[i] != rewards[0];
        if (!mixed) rewards[0] = 1.0 - rewards[0];
        const auto adv = compute_advantages(rewards);
        REQUIRE_FALSE(adv.degenerate);
        double mean = 0.0;
        for (double a : adv.values) mean += a;
        mean /= static_cast<double>(g);
        double var = 0.0;
        for (double a : adv.values) var += (a - mean) * (a - mean);
        var /= static_cast<double>(g);
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-9);
    }
}

TEST_CASE("clipped objective identities") {
    CHECK(clipped_token_objective(1.0, 3.25, 0.2) == 3.25);
    CHECK(clipped_token_objective(1.0, -0.5, 0.2) == -0.5);
    CHECK(clipped_token_objective(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(clipped_token_objective(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));
}

TEST_CASE("clip bound properties") {
    // The min-of-clipped objective is bounded above by (1+eps)|A| for any
    // ratio; the magnitude bound additionally holds whenever the ratio is
    // inside the band (every on-policy token) or the advantage is
    // nonnegative. For A < 0 with ratio far above the band the min keeps the
    // pessimistic unclipped branch, which is the intended PPO behavior.
    Rng rng(6);
    const double eps = 0.2;
    for (int it = 0; it < 1000; ++it) {
        const double ratio = std::exp(rng.next_range(-3.0, 3.0));
        const double a = rng.next_range(-2.0, 2.0);
        const double value = clipped_token_objective(ratio, a, eps);
        CHECK(value <= (1.0 + eps) * std::fabs(a) + 1e-12);
        if (a >= 0.0 || (ratio >= 1.0 - eps && ratio <= 1.0 + eps))
            CHECK(std::fabs(value) <= (1.0 + eps) * std::fabs(a) + 1e-12);
    }
    for (int it = 0; it < 1000; ++it) {
        const double a = rng.next_range(-2.0, 2.0);
        CHECK(clipped_token_objective(1.0, a, eps) == a); // on-policy identity
    }
}

TEST_CASE("kl term: zero at equality, positive elsewhere, spec value") {
    CHECK(kl_token_term(-1.25, -1.25) == 0.0);
    CHECK(kl_token_term(std::log(0.5), std::log(0.25)) == doctest::Approx(0.193147).epsilon(1e-5));
    Rng rng(7);
    for (int it = 0; it < 100000; ++it) {
        const double a = rng.next_range(-12.0, 0.0);
        const double b = rng.next_range(-12.0, 0.0);
        const double kl = kl_token_term(a, b);
        CHECK(kl >= 0.0);
        if (a != b) CHECK(kl > 0.0);
    }
}

TEST_CASE("on-policy gradient equals the REINFORCE-style weighting") {
    const auto params = init_params(tiny_config(), 11);
    const GroupBatch batch = synthetic_batch(params, {1.0, 0.0}, 21);
    const PolicySnapshot self{params, 0};

    MGRPOConfig cfg;
    cfg.kl_coeff = 0.0;
    cfg.threads = 1;

    std::vector<double> grad = params.zeros_like();
    const MgrpoStats stats = mgrpo_loss(batch, params, self, cfg, grad);

    // on-policy: every ratio exactly 1, loss = -(A1+A2)/2 = 0
    CHECK(stats.mean_ratio == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(stats.clip_fraction == 0.0);
    CHECK(stats.loss == doctest::Approx(0.0).epsilon(1e-12));

    // independent REINFORCE-style gradient: weights A_i / (G |tau| |a_ij|)
    const auto adv = compute_advantages({1.0, 0.0});
    std::vector<double> expected = params.zeros_like();
    for (size_t i = 0; i < batch.trajectories.size(); ++i) {
        const auto& traj = batch.trajectories[i];
        for (const auto& action : traj.actions) {
            const double c = -adv.values[i] /
                             (2.0 * static_cast<double>(traj.actions.size()) *
                              static_cast<double>(action.old_logprobs.size()));
            const std::vector<double> weights(action.old_logprobs.size(), c);
            grad_weighted_log_probs(params, action.ctx, weights, expected);
        }
    }
    CHECK(max_relative_error(grad, expected) < 1e-10);
}

TEST_CASE("with params == ref the KL contribution vanishes") {
    const auto params = init_params(tiny_config(), 13);
    const GroupBatch batch = synthetic_batch(params, {1.0, 0.0, 0.0, 0.0}, 23);
    const PolicySnapshot self{params, 0};

    MGRPOConfig beta_zero;
    beta_zero.kl_coeff = 0.0;
    beta_zero.threads = 1;
    MGRPOConfig beta_live;
    beta_live.kl_coeff = 0.001;
    beta_live.threads = 1;

    std::vector<double> g0 = params.zeros_like(), g1 = params.zeros_like();
    const MgrpoStats s0 = mgrpo_loss(batch, params, self, beta_zero, g0);
    const MgrpoStats s1 = mgrpo_loss(batch, params, self, beta_live, g1);
    CHECK(s1.mean_kl == 0.0);
    CHECK(s0.loss == s1.loss);
    CHECK(g0 == g1);
}

TEST_CASE("degenerate groups are skipped") {
    const auto params = init_params(tiny_config(), 17);
    const GroupBatch batch = synthetic_batch(params, {1.0, 1.0}, 29);
    const PolicySnapshot self{params, 0};
    MGRPOConfig cfg;
    cfg.threads = 1;
    std::vector<double> grad = params.zeros_like();
    const MgrpoStats stats = mgrpo_loss(batch, params, self, cfg, grad);
    CHECK(stats.degenerate);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("off-policy stats agree with a brute-force recount") {
    // Generate with one snapshot, score with another.
    const auto gen = with_random_head(init_params(tiny_config(), 19), 119);
    const auto cur = with_random_head(init_params(tiny_config(), 20), 120);
    const auto ref = with_random_head(init_params(tiny_config(), 21), 121);
    const GroupBatch batch = synthetic_batch(gen, {1.0, 0.0, 1.0, 0.0}, 31, 2, 5);

    MGRPOConfig cfg;
    cfg.threads = 2;
    std::vector<double> grad = cur.zeros_like();
    const MgrpoStats stats = mgrpo_loss(batch, cur, PolicySnapshot{ref, 0}, cfg, grad);

    int64_t tokens = 0, clipped = 0;
    double ratio_sum = 0.0, kl_sum = 0.0;
    for (const auto& traj : batch.trajectories) {
        for (const auto& action : traj.actions) {
            const auto cur_lp = log_probs_masked(cur, action.ctx);
            const auto ref_lp = log_probs_masked(ref, action.ctx);
            for (size_t t = 0; t < cur_lp.size(); ++t) {
                const double ratio = std::exp(cur_lp[t] - action.old_logprobs[t]);
                ratio_sum += ratio;
                kl_sum += kl_token_term(cur_lp[t], ref_lp[t]);
                if (ratio < 0.8 || ratio > 1.2) ++clipped;
                ++tokens;
            }
        }
    }
    CHECK(stats.tokens == tokens);
    CHECK(stats.mean_ratio == doctest::Approx(ratio_sum / static_cast<double>(tokens)).epsilon(1e-12));
    CHECK(stats.mean_kl == doctest::Approx(kl_sum / static_cast<double>(tokens)).epsilon(1e-12));
    CHECK(stats.clip_fraction ==
          doctest::Approx(static_cast<double>(clipped) / static_cast<double>(tokens)).epsilon(1e-12));
    CHECK(stats.clip_fraction > 0.0); // the random snapshots genuinely disagree

    SUBCASE("threaded and serial scoring agree bitwise") {
        MGRPOConfig serial = cfg;
        serial.threads = 1;
        std::vector<double> grad_serial = cur.zeros_like();
        const MgrpoStats again = mgrpo_loss(batch, cur, PolicySnapshot{ref, 0}, serial, grad_serial);
        CHECK(again.loss == stats.loss);
        CHECK(grad_serial == grad);
    }
}

TEST_CASE("mgrpo gradient matches finite differences off-policy") {
    const auto gen = with_random_head(init_params(tiny_config(), 23), 123);
    auto cur = with_random_head(init_params(tiny_config(), 24), 124);
    const auto ref = with_random_head(init_params(tiny_config(), 25), 125);
    const GroupBatch batch = synthetic_batch(gen, {1.0, 0.0}, 37, 1, 3);

    MGRPOConfig cfg;
    cfg.threads = 1;
    cfg.kl_coeff = 0.01; // exercise the KL path in the gradient

    std::vector<double> grad = cur.zeros_like();
    const MgrpoStats stats = mgrpo_loss(batch, cur, PolicySnapshot{ref, 0}, cfg, grad);
    CHECK(stats.loss == doctest::Approx(mgrpo_loss_value(batch, cur, PolicySnapshot{ref, 0}, cfg)).epsilon(1e-12));

    const auto fd = finite_difference_grad(
        cur, [&](const PolicyParams& p) { return mgrpo_loss_value(batch, p, PolicySnapshot{ref, 0}, cfg); }, 1e-5);
    CHECK(max_relative_error(grad, fd) < 1e-6);
}

TEST_CASE("mask discipline: mgrpo loss ignores label identities off the mask") {
    const auto gen = with_random_head(init_params(tiny_config(), 29), 129);
    const auto cur = with_random_head(init_params(tiny_config(), 30), 130);
    const auto ref = with_random_head(init_params(tiny_config(), 31), 131);
    GroupBatch batch = synthetic_batch(gen, {1.0, 0.0}, 41);

    MGRPOConfig cfg;
    cfg.threads = 1;
    std::vector<double> grad = cur.zeros_like();
    const MgrpoStats base = mgrpo_loss(batch, cur, PolicySnapshot{ref, 0}, cfg, grad);

    Rng rng(4);
    for (int it = 0; it < 100; ++it) {
        GroupBatch fuzzed = batch;
        for (auto& traj : fuzzed.trajectories)
            for (auto& action : traj.actions)
                for (int k = 0; k < 4; ++k) {
                    const size_t pos = rng.next_below(action.ctx.targets.size());
                    if (action.ctx.loss_mask[pos]) continue;
                    action.ctx.targets[pos] = static_cast<Token>(rng.next_below(8));
                }
        std::vector<double> fuzz_grad = cur.zeros_like();
        const MgrpoStats fuzz = mgrpo_loss(fuzzed, cur, PolicySnapshot{ref, 0}, cfg, fuzz_grad);
        CHECK(fuzz.loss == base.loss);
        CHECK(fuzz_grad == grad);
    }
}
