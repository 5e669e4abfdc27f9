#pragma once

#include "webgym/tokenizer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace webgym {

// Placeholder substituted for every observation except the most recent one.
inline constexpr std::string_view kObservationPlaceholder = "Simplified HTML";

struct TokenSpan {
    size_t begin = 0;
    size_t end = 0; // half-open
    size_t size() const { return end - begin; }
    bool operator==(const TokenSpan&) const = default;
};

// One environment round. observation_text always stores the raw observation;
// compression happens at materialization time only.
struct Turn {
    std::string observation_text;
    std::string agent_text; // full response incl. think span; empty while pending
    TokenSpan action_token_span; // within the materialized sequence, filled by compress()
    std::optional<std::vector<double>> old_logprobs; // one per agent token, recorded at generation
};

// A token sequence ready for the policy. tokens carry the input role; targets
// carry the label role and are a copy of tokens at construction. Losses read
// targets only at loss_mask-true positions, so label identities elsewhere are
// ignored by construction.
struct MaterializedContext {
    std::vector<Token> tokens;
    std::vector<Token> targets;
    std::vector<uint8_t> loss_mask;
    std::vector<TokenSpan> turn_spans; // one span per non-empty agent text, in order
};

// Layout pieces shared by compression, prompt assembly and the rollout
// engine's incremental feeding. Changing these changes every recorded context.
std::string observation_section(std::string_view observation); // "Observation:\n<obs>\nAction:\n"
std::string completed_turn_section(std::string_view observation, std::string_view agent_text);

// Dynamic context compression: every observation except the last collapses to
// the placeholder; agent texts are kept verbatim. The result is a pure text
// materialization (no BOS/EOS), with loss_mask true exactly on agent spans so
// that detokenizing the masked positions reproduces the concatenated agent
// texts. history must be nonempty; the last turn may be pending.
MaterializedContext compress(const std::vector<Turn>& history,
                             std::string_view placeholder = kObservationPlaceholder);

// Recomputes the mask from turn_spans.
std::vector<uint8_t> build_loss_mask(const MaterializedContext& ctx);

// Builds a single training example: prompt tokens (mask false) followed by the
// scored action tokens (mask true). targets = tokens copy.
MaterializedContext make_training_context(const std::vector<Token>& prompt_tokens,
                                          const std::vector<Token>& action_tokens);

// Target ids at mask-true positions, i.e. the scored action tokens.
std::vector<Token> masked_targets(const MaterializedContext& ctx);

// ---------------------------------------------------------------------------
// Trajectory persistence (also the demonstration file format)
// ---------------------------------------------------------------------------

struct TurnRecord {
    int round = 0;
    std::string observation; // raw, never compressed on disk
    std::optional<std::string> remarks;
    std::string agent_text;
    std::string action; // canonical DSL; empty when the response failed to parse
    std::optional<std::vector<double>> old_logprobs;
};

struct EpisodeRecord {
    std::string task_id;
    int instance = 0;
    int reward = 0;
    int interactions = 0;
    int64_t agent_tokens = 0;
    std::vector<TurnRecord> turns;
};

std::string episodes_to_jsonl(const std::vector<EpisodeRecord>& episodes);
std::vector<EpisodeRecord> parse_episodes_jsonl(const std::string& text);
void save_episodes(const std::string& path, const std::vector<EpisodeRecord>& episodes);
std::vector<EpisodeRecord> load_episodes(const std::string& path);

} // namespace webgym
