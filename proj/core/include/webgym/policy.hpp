#pragma once

#include "webgym/context.hpp"
#include "webgym/rng.hpp"
#include "webgym/tokenizer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace webgym {

struct PolicyConfig {
    int vocab = kVocabSize;
    int embed_dim = 64;
    int hidden_dim = 128;
    int max_seq = 16384;

    bool operator==(const PolicyConfig&) const = default;
};

// Autoregressive byte policy: token embedding, one GRU layer, linear head.
// All parameters live in one contiguous double buffer; weight matrices are
// stored input-major so both the forward pass and the parameter-gradient pass
// run as blocked axpy loops with a fixed summation order.
struct PolicyParams {
    PolicyConfig cfg;
    std::vector<double> data;

    PolicyParams() = default;
    explicit PolicyParams(const PolicyConfig& config);

    size_t size() const { return data.size(); }

    // layout offsets
    size_t off_emb() const { return 0; }                                     // vocab x d
    size_t off_wx() const { return off_emb() + v() * d(); }                  // d x 3h (z,r,c)
    size_t off_uzr() const { return off_wx() + d() * 3 * h(); }              // h x 2h (z,r)
    size_t off_uc() const { return off_uzr() + h() * 2 * h(); }              // h x h
    size_t off_b() const { return off_uc() + h() * h(); }                    // 3h
    size_t off_wo() const { return off_b() + 3 * h(); }                      // h x vocab
    size_t off_bo() const { return off_wo() + h() * v(); }                   // vocab

    size_t v() const { return static_cast<size_t>(cfg.vocab); }
    size_t d() const { return static_cast<size_t>(cfg.embed_dim); }
    size_t h() const { return static_cast<size_t>(cfg.hidden_dim); }

    std::vector<double> zeros_like() const { return std::vector<double>(data.size(), 0.0); }
};

// Deterministic in the seed. Output projection and all biases start at zero,
// so every next-token distribution of a fresh policy is exactly uniform.
PolicyParams init_params(const PolicyConfig& cfg, uint64_t seed);

// Immutable frozen copy serving as pi_old or pi_ref.
struct PolicySnapshot {
    PolicyParams params;
    uint64_t version = 0;
};

struct GruState {
    std::vector<double> h;
};

GruState initial_state(const PolicyParams& params);
void advance_state(const PolicyParams& params, GruState& state, std::span<const Token> tokens);

// log softmax(logits(state)) for one target; logits() fills a vocab-sized buffer.
void logits_from_state(const PolicyParams& params, const GruState& state, double* logits_out);
double logprob_from_state(const PolicyParams& params, const GruState& state, Token target);

// Element t is log pi(continuation[t] | context, continuation[<t]). The
// context is taken verbatim (callers include BOS where appropriate).
std::vector<double> log_probs(const PolicyParams& params, const std::vector<Token>& context,
                              const std::vector<Token>& continuation);

// Per scored token of the materialized context, in position order.
std::vector<double> log_probs_masked(const PolicyParams& params, const MaterializedContext& ctx);

struct SampleConfig {
    double temperature = 1.0;
    double top_p = 1.0;
    int max_new_tokens = 128;
    uint64_t rng_seed = 0;
    bool greedy = false;
    // Generation never emits BOS/PAD (probability renormalized over the rest);
    // recorded log-probs stay full-softmax values at temperature 1, matching
    // what training recomputes.
    bool forbid_bos_pad = true;
};

struct SampledTokens {
    std::vector<Token> tokens;  // includes the terminating EOS when one was emitted
    std::vector<double> logprobs; // full-softmax log pi at temperature 1, per token
};

SampledTokens sample_from_state(const PolicyParams& params, GruState& state, const SampleConfig& cfg, Rng& rng);
std::vector<Token> sample(const PolicyParams& params, const std::vector<Token>& context, const SampleConfig& cfg);

// Exact gradient of sum_t weights[t] * log pi(target_t | prefix) over the
// scored positions of ctx, accumulated into grad (same layout as params.data).
// Returns the weighted log-prob sum. weights.size() must equal the number of
// mask-true positions.
double grad_weighted_log_probs(const PolicyParams& params, const MaterializedContext& ctx,
                               std::span<const double> weights, std::vector<double>& grad);

struct WeightedExample {
    const MaterializedContext* ctx = nullptr;
    std::vector<double> weights;
};

double grad_weighted_log_probs(const PolicyParams& params, const std::vector<WeightedExample>& batch,
                               std::vector<double>& grad);

// Fused variant: runs the forward pass once, hands the scored log-probs to
// weight_fn, then backpropagates with the weights it returns. Saves the extra
// forward pass when weights depend on the current log-probs (importance
// ratios). logps_out, when given, receives the scored log-probs.
using WeightFn = std::function<std::vector<double>(const std::vector<double>& logps)>;
double grad_weighted_log_probs_fused(const PolicyParams& params, const MaterializedContext& ctx,
                                     const WeightFn& weight_fn, std::vector<double>& grad,
                                     std::vector<double>* logps_out = nullptr);

// Versioned binary checkpoint: dims header, raw parameter block, fnv checksum.
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

} // namespace webgym
