#pragma once

#include "webgym/metrics.hpp"
#include "webgym/optim.hpp"
#include "webgym/policy.hpp"
#include "webgym/protocol.hpp"
#include "webgym/sitegen.hpp"

#include <optional>
#include <string>
#include <vector>

namespace webgym {

struct DemoTurn {
    std::string observation;
    std::optional<std::string> remark; // think text; present in CoT-bearing sets
    Action action;
    std::string agent_text; // exactly what the agent is trained to emit
};

struct Demonstration {
    std::string task_id;
    std::string instruction;
    std::vector<DemoTurn> turns;
};

// Expert demonstrations from the scripted solvers, replayed through the
// environment and validated to reward 1. think mode wraps each action in
// <think>remark</think><answer>...</answer>; extended_cot swaps the one-line
// remark for a longer reasoning paragraph (the long-CoT training variant).
std::vector<Demonstration> synthesize_demos(const std::vector<TaskSpec>& suite, const PromptConfig& cfg,
                                            bool extended_cot = false, int max_interactions = 10);

// Demonstration files share the trajectory persistence layout.
void save_demos(const std::string& path, const std::vector<Demonstration>& demos);
std::vector<Demonstration> load_demos(const std::string& path, const std::vector<TaskSpec>& suite);

// One (compressed context, action tokens) example per demonstration turn.
MaterializedContext make_step_example(const std::string& instruction, const std::vector<Turn>& completed,
                                      const std::string& current_observation, const std::string& agent_text,
                                      const PromptConfig& cfg);
std::vector<MaterializedContext> make_bc_examples(const std::vector<Demonstration>& demos, const PromptConfig& cfg);

// Mean NLL over masked action tokens; the gradient (accumulated into grad)
// uses weights -1/N on those tokens. Throws when the batch has no masked
// token.
double bc_loss(const PolicyParams& params, const std::vector<const MaterializedContext*>& batch,
               std::vector<double>& grad);
double bc_loss_value(const PolicyParams& params, const std::vector<const MaterializedContext*>& batch);

struct BcConfig {
    PolicyConfig policy;
    double learning_rate = 3e-4;
    int batch_size = 8;
    int updates = 1200;
    uint64_t seed = 0;
    // Cosine learning-rate schedule with linear warmup over the first
    // warmup_frac of the run; warmup_frac 0 gives a constant rate.
    double warmup_frac = 0.05;
    bool cosine_schedule = true;
};

struct BcResult {
    PolicyParams params;
    MetricsTable metrics; // columns: update loss
};

// Single-threaded minibatch Adam over shuffled step examples; deterministic
// under the seed.
BcResult train_bc(const std::vector<Demonstration>& demos, const BcConfig& cfg, const PromptConfig& prompt_cfg);

} // namespace webgym
