#pragma once

#include "webgym/metrics.hpp"
#include "webgym/policy.hpp"
#include "webgym/protocol.hpp"
#include "webgym/sitegen.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace webgym {

struct MGRPOConfig {
    int group_size = 8;        // G
    double clip_ratio = 0.2;   // epsilon
    double kl_coeff = 0.001;   // beta
    double learning_rate = 1e-4;
    int max_interactions = 10;
    int updates = 500;
    uint64_t seed = 0;
    double std_floor = 1e-8;
    int threads = 0;           // 0 = hardware concurrency, capped at group_size
    int max_new_tokens = 128;  // rollout sampling; temperature/top-p stay 1.0
};

struct AdvantageSet {
    std::vector<double> values; // one scalar per trajectory, broadcast to its tokens
    bool degenerate = false;    // group std below the floor; update is skipped
};

// A_i = (r_i - mean(r)) / std(r), population standard deviation. G >= 2.
AdvantageSet compute_advantages(const std::vector<double>& rewards, double std_floor = 1e-8);

// min(ratio*A, clip(ratio, 1-eps, 1+eps)*A)
double clipped_token_objective(double ratio, double advantage, double eps);

// exp(d) - d - 1 with d = logp_ref - logp_current; nonnegative, zero iff equal.
double kl_token_term(double logp_current, double logp_ref);

// One scored action: the recorded generation-time context with the action
// tokens masked true, and the old log-probs the snapshot assigned them.
struct ActionSample {
    MaterializedContext ctx;
    std::vector<double> old_logprobs;
};

struct TrajectorySample {
    std::vector<ActionSample> actions;
    double reward = 0.0;
    int interactions = 0;
    int64_t agent_tokens = 0;
};

struct GroupBatch {
    std::string task_id;
    std::vector<TrajectorySample> trajectories;
};

struct MgrpoStats {
    double loss = 0.0;
    double mean_ratio = 0.0;
    double clip_fraction = 0.0; // tokens with ratio outside [1-eps, 1+eps]
    double mean_kl = 0.0;
    int64_t tokens = 0;
    bool degenerate = false;
};

// L = -(1/G) sum_i (1/|tau_i|) sum_j (1/|a_ij|) sum_t [A~ - beta*KL], with
// per-token ratios recomputed against the recorded generation-time contexts.
// The gradient is accumulated into grad. Degenerate groups (uniform rewards)
// return stats.degenerate without touching grad. Trajectories may be scored
// in parallel; the reduction order is fixed by trajectory index.
MgrpoStats mgrpo_loss(const GroupBatch& batch, const PolicyParams& params, const PolicySnapshot& ref,
                      const MGRPOConfig& cfg, std::vector<double>& grad);

struct RlResult {
    PolicyParams params;
    MetricsTable metrics; // update mean_reward mean_traj_tokens mean_interactions mean_kl clip_fraction degenerate loss
};

// On-policy loop: snapshot pi_old, roll out one group for the next task,
// update once. ref stays frozen for the whole run. Deterministic in cfg.seed.
// When traj_dump_path is nonempty every rollout episode is appended there in
// the trajectory persistence format.
RlResult train_rl(const std::vector<TaskSpec>& suite, const PolicyParams& init, const PolicySnapshot& ref,
                  const MGRPOConfig& cfg, const PromptConfig& prompt_cfg, const std::string& traj_dump_path = "");

} // namespace webgym
