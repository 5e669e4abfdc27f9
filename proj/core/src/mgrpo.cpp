#include "webgym/mgrpo.hpp"

#include "webgym/optim.hpp"
#include "webgym/rollout.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace webgym {

AdvantageSet compute_advantages(const std::vector<double>& rewards, double std_floor) {
    if (rewards.size() < 2) throw std::invalid_argument("compute_advantages: need G >= 2");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n; // population
    const double std_dev = std::sqrt(var);

    AdvantageSet out;
    out.values.resize(rewards.size());
    if (std_dev < std_floor) {
        out.degenerate = true;
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    for (size_t i = 0; i < rewards.size(); ++i) out.values[i] = (rewards[i] - mean) / std_dev;
    return out;
}

double clipped_token_objective(double ratio, double advantage, double eps) {
    const double clipped = std::min(std::max(ratio, 1.0 - eps), 1.0 + eps);
    return std::min(ratio * advantage, clipped * advantage);
}

double kl_token_term(double logp_current, double logp_ref) {
    const double delta = logp_ref - logp_current;
    return std::exp(delta) - delta - 1.0;
}

namespace {

struct TrajectoryPartial {
    double loss = 0.0;
    double ratio_sum = 0.0;
    double kl_sum = 0.0;
    int64_t clipped = 0;
    int64_t tokens = 0;
    std::vector<double> grad;
};

// Scores one trajectory: for each action, ratios against the recorded old
// log-probs, KL against the frozen reference, and the gradient of the loss
// terms through the current log-probs.
void score_trajectory(const TrajectorySample& traj, double advantage, const PolicyParams& params,
                      const PolicySnapshot& ref, const MGRPOConfig& cfg, size_t group_size,
                      TrajectoryPartial& out) {
    const double traj_norm = 1.0 / (static_cast<double>(group_size) * static_cast<double>(traj.actions.size()));
    for (const ActionSample& action : traj.actions) {
        const std::vector<double> ref_logps = log_probs_masked(ref.params, action.ctx);
        const double token_norm = traj_norm / static_cast<double>(action.old_logprobs.size());

        auto weight_fn = [&](const std::vector<double>& cur_logps) {
            if (cur_logps.size() != action.old_logprobs.size() || cur_logps.size() != ref_logps.size())
                throw std::runtime_error("mgrpo_loss: log-prob length mismatch");
            std::vector<double> weights(cur_logps.size());
            for (size_t t = 0; t < cur_logps.size(); ++t) {
                const double ratio = std::exp(cur_logps[t] - action.old_logprobs[t]);
                const double clipped_obj = clipped_token_objective(ratio, advantage, cfg.clip_ratio);
                const double kl = kl_token_term(cur_logps[t], ref_logps[t]);
                out.loss += -token_norm * (clipped_obj - cfg.kl_coeff * kl);
                out.ratio_sum += ratio;
                out.kl_sum += kl;
                if (ratio < 1.0 - cfg.clip_ratio || ratio > 1.0 + cfg.clip_ratio) out.clipped++;
                out.tokens++;

                // dL/dlogp: the ratio branch contributes A*ratio while the
                // unclipped arm is active (ties included); the KL estimator
                // contributes 1 - exp(logp_ref - logp_cur).
                const double clipped_ratio = std::min(std::max(ratio, 1.0 - cfg.clip_ratio), 1.0 + cfg.clip_ratio);
                const bool unclipped_active = ratio * advantage <= clipped_ratio * advantage;
                const double dobj = unclipped_active ? advantage * ratio : 0.0;
                const double dkl = 1.0 - std::exp(ref_logps[t] - cur_logps[t]);
                weights[t] = -token_norm * (dobj - cfg.kl_coeff * dkl);
            }
            return weights;
        };
        grad_weighted_log_probs_fused(params, action.ctx, weight_fn, out.grad);
    }
}

} // namespace

MgrpoStats mgrpo_loss(const GroupBatch& batch, const PolicyParams& params, const PolicySnapshot& ref,
                      const MGRPOConfig& cfg, std::vector<double>& grad) {
    MgrpoStats stats;
    std::vector<double> rewards;
    rewards.reserve(batch.trajectories.size());
    for (const TrajectorySample& traj : batch.trajectories) rewards.push_back(traj.reward);

    const AdvantageSet adv = compute_advantages(rewards, cfg.std_floor);
    if (adv.degenerate) {
        stats.degenerate = true;
        return stats;
    }
    if (grad.size() != params.data.size()) throw std::invalid_argument("mgrpo_loss: grad buffer size mismatch");

    const size_t n = batch.trajectories.size();
    std::vector<TrajectoryPartial> partials(n);
    for (auto& partial : partials) partial.grad = params.zeros_like();

    int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));

    if (threads == 1) {
        for (size_t i = 0; i < n; ++i)
            if (!batch.trajectories[i].actions.empty())
                score_trajectory(batch.trajectories[i], adv.values[i], params, ref, cfg, n, partials[i]);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads));
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= n) return;
                    if (!batch.trajectories[i].actions.empty())
                        score_trajectory(batch.trajectories[i], adv.values[i], params, ref, cfg, n, partials[i]);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    // Deterministic reduction in trajectory order.
    for (size_t i = 0; i < n; ++i) {
        const TrajectoryPartial& partial = partials[i];
        stats.loss += partial.loss;
        stats.mean_ratio += partial.ratio_sum;
        stats.mean_kl += partial.kl_sum;
        stats.clip_fraction += static_cast<double>(partial.clipped);
        stats.tokens += partial.tokens;
        for (size_t k = 0; k < grad.size(); ++k) grad[k] += partial.grad[k];
    }
    if (stats.tokens > 0) {
        stats.mean_ratio /= static_cast<double>(stats.tokens);
        stats.mean_kl /= static_cast<double>(stats.tokens);
        stats.clip_fraction /= static_cast<double>(stats.tokens);
    }
    return stats;
}

RlResult train_rl(const std::vector<TaskSpec>& suite, const PolicyParams& init, const PolicySnapshot& ref,
                  const MGRPOConfig& cfg, const PromptConfig& prompt_cfg, const std::string& traj_dump_path) {
    if (suite.empty()) throw std::invalid_argument("train_rl: empty task suite");
    if (cfg.group_size < 2) throw std::invalid_argument("train_rl: group_size must be >= 2");

    RlResult result;
    result.params = init;
    result.metrics.columns = {"update",  "mean_reward",   "mean_traj_tokens", "mean_interactions",
                              "mean_kl", "clip_fraction", "degenerate",       "loss"};

    Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8}, result.params.size());
    std::vector<double> grad = result.params.zeros_like();

    std::ofstream dump;
    if (!traj_dump_path.empty()) {
        dump.open(traj_dump_path, std::ios::binary);
        if (!dump) throw std::runtime_error("cannot write trajectory dump: " + traj_dump_path);
    }

    // Shuffled round-robin over the suite, reshuffled every epoch.
    std::vector<size_t> order(suite.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int update = 0; update < cfg.updates; ++update) {
        const size_t pos = static_cast<size_t>(update) % suite.size();
        if (pos == 0) {
            Rng rng(substream(cfg.seed, "task-order", static_cast<uint64_t>(update) / suite.size()));
            for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
        }
        const TaskSpec& task = suite[order[pos]];

        PolicySnapshot old_snapshot{result.params, static_cast<uint64_t>(update)};
        RolloutConfig rollout_cfg;
        rollout_cfg.group_size = cfg.group_size;
        rollout_cfg.max_interactions = cfg.max_interactions;
        rollout_cfg.threads = cfg.threads;
        rollout_cfg.run_seed = substream(cfg.seed, "rollout-update", static_cast<uint64_t>(update));
        rollout_cfg.sample.max_new_tokens = cfg.max_new_tokens;

        const RolloutResult rollout = rollout_group(task, old_snapshot, prompt_cfg, rollout_cfg);
        if (dump.is_open()) dump << episodes_to_jsonl(rollout.episodes);

        double reward_sum = 0.0, token_sum = 0.0, interaction_sum = 0.0;
        for (const TrajectorySample& traj : rollout.batch.trajectories) {
            reward_sum += traj.reward;
            token_sum += static_cast<double>(traj.agent_tokens);
            interaction_sum += traj.interactions;
        }
        const double g = static_cast<double>(rollout.batch.trajectories.size());

        std::fill(grad.begin(), grad.end(), 0.0);
        const MgrpoStats stats = mgrpo_loss(rollout.batch, result.params, ref, cfg, grad);
        if (!stats.degenerate) opt.step(result.params.data, grad);

        result.metrics.add_row({static_cast<double>(update), reward_sum / g, token_sum / g, interaction_sum / g,
                                stats.mean_kl, stats.clip_fraction, stats.degenerate ? 1.0 : 0.0, stats.loss});
    }
    return result;
}

} // namespace webgym
