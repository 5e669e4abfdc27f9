#include "webgym/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace webgym {

namespace {

// acc[0..n) += sum_j W[j*n + i] * x[j]; blocked over four input columns so the
// accumulator is loaded/stored once per block. Summation order is fixed.
void axpy_block(const double* W, const double* x, size_t m, size_t n, double* acc) {
    size_t j = 0;
    for (; j + 4 <= m; j += 4) {
        const double c0 = x[j], c1 = x[j + 1], c2 = x[j + 2], c3 = x[j + 3];
        const double* w0 = W + j * n;
        const double* w1 = w0 + n;
        const double* w2 = w1 + n;
        const double* w3 = w2 + n;
        for (size_t i = 0; i < n; ++i) acc[i] += w0[i] * c0 + w1[i] * c1 + w2[i] * c2 + w3[i] * c3;
    }
    for (; j < m; ++j) {
        const double c = x[j];
        const double* w = W + j * n;
        for (size_t i = 0; i < n; ++i) acc[i] += w[i] * c;
    }
}

// out[j] += sum_i W[j*n + i] * v[i]
void rowdot_acc(const double* W, const double* v, size_t m, size_t n, double* out) {
    for (size_t j = 0; j < m; ++j) {
        const double* w = W + j * n;
        double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        size_t i = 0;
        for (; i + 4 <= n; i += 4) {
            s0 += w[i] * v[i];
            s1 += w[i + 1] * v[i + 1];
            s2 += w[i + 2] * v[i + 2];
            s3 += w[i + 3] * v[i + 3];
        }
        double s = (s0 + s1) + (s2 + s3);
        for (; i < n; ++i) s += w[i] * v[i];
        out[j] += s;
    }
}

// dW[j*n + i] += x[j] * dv[i]
void outer_acc(double* dW, const double* x, const double* dv, size_t m, size_t n) {
    for (size_t j = 0; j < m; ++j) {
        const double c = x[j];
        double* w = dW + j * n;
        for (size_t i = 0; i < n; ++i) w[i] += c * dv[i];
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepBuffers {
    std::vector<double> acc; // 3h pre-activations
    std::vector<double> rh;  // r .* h_prev
    void resize(size_t h) {
        acc.resize(3 * h);
        rh.resize(h);
    }
};

// Recurrent half of the step: acc arrives holding bias + input projection and
// leaves holding the gate values. Saves gates to the tape when requested.
void gru_step_from_acc(const PolicyParams& p, const double* h_in, double* acc, double* rh, double* h_out,
                       double* tape_z, double* tape_r, double* tape_c) {
    const size_t h = p.h();
    const double* Uzr = p.data.data() + p.off_uzr();
    const double* Uc = p.data.data() + p.off_uc();
    axpy_block(Uzr, h_in, h, 2 * h, acc);
    for (size_t i = 0; i < h; ++i) {
        acc[i] = sigmoid(acc[i]);
        acc[h + i] = sigmoid(acc[h + i]);
    }
    for (size_t i = 0; i < h; ++i) rh[i] = acc[h + i] * h_in[i];
    axpy_block(Uc, rh, h, h, acc + 2 * h);
    for (size_t i = 0; i < h; ++i) {
        const double z = acc[i];
        const double c = std::tanh(acc[2 * h + i]);
        if (tape_c) tape_c[i] = c;
        h_out[i] = (1.0 - z) * h_in[i] + z * c;
    }
    if (tape_z) {
        std::memcpy(tape_z, acc, h * sizeof(double));
        std::memcpy(tape_r, acc + h, h * sizeof(double));
    }
}

// bias + Wx^T x for up to four tokens in one pass over Wx. Every token's
// accumulation uses exactly the arithmetic of axpy_block, so the result is
// bit-identical however steps are grouped into blocks.
void input_projection_block(const PolicyParams& p, const Token* tokens, size_t count, double* xacc) {
    const size_t d = p.d(), h3 = 3 * p.h();
    const double* Wx = p.data.data() + p.off_wx();
    const double* bias = p.data.data() + p.off_b();
    const double* emb = p.data.data() + p.off_emb();
    for (size_t b = 0; b < count; ++b) std::memcpy(xacc + b * h3, bias, h3 * sizeof(double));
    size_t j = 0;
    for (; j + 4 <= d; j += 4) {
        const double* w0 = Wx + j * h3;
        const double* w1 = w0 + h3;
        const double* w2 = w1 + h3;
        const double* w3 = w2 + h3;
        for (size_t b = 0; b < count; ++b) {
            const double* x = emb + static_cast<size_t>(tokens[b]) * d;
            const double c0 = x[j], c1 = x[j + 1], c2 = x[j + 2], c3 = x[j + 3];
            double* acc = xacc + b * h3;
            for (size_t i = 0; i < h3; ++i) acc[i] += w0[i] * c0 + w1[i] * c1 + w2[i] * c2 + w3[i] * c3;
        }
    }
    for (; j < d; ++j) {
        const double* w = Wx + j * h3;
        for (size_t b = 0; b < count; ++b) {
            const double c = emb[static_cast<size_t>(tokens[b]) * d + j];
            double* acc = xacc + b * h3;
            for (size_t i = 0; i < h3; ++i) acc[i] += w[i] * c;
        }
    }
}

// One GRU step. When tape pointers are given, the gate values are saved for
// the backward pass.
void gru_step(const PolicyParams& p, const double* h_in, Token token, double* h_out, StepBuffers& buf,
              double* tape_z, double* tape_r, double* tape_c) {
    input_projection_block(p, &token, 1, buf.acc.data());
    gru_step_from_acc(p, h_in, buf.acc.data(), buf.rh.data(), h_out, tape_z, tape_r, tape_c);
}

// Runs a known token sequence, four input projections per Wx pass.
void gru_run_sequence(const PolicyParams& p, std::span<const Token> tokens, double* h_state, StepBuffers& buf,
                      double* hstates_out, double* tape_z, double* tape_r, double* tape_c) {
    const size_t h = p.h(), h3 = 3 * p.h();
    std::vector<double> xacc(4 * h3);
    std::vector<double> next(h);
    size_t t = 0;
    while (t < tokens.size()) {
        const size_t block = std::min<size_t>(4, tokens.size() - t);
        input_projection_block(p, tokens.data() + t, block, xacc.data());
        for (size_t b = 0; b < block; ++b) {
            const size_t step = t + b;
            gru_step_from_acc(p, h_state, xacc.data() + b * h3, buf.rh.data(), next.data(),
                              tape_z ? tape_z + step * h : nullptr, tape_r ? tape_r + step * h : nullptr,
                              tape_c ? tape_c + step * h : nullptr);
            std::memcpy(h_state, next.data(), h * sizeof(double));
            if (hstates_out) std::memcpy(hstates_out + (step + 1) * h, h_state, h * sizeof(double));
        }
        t += block;
    }
}

void compute_logits(const PolicyParams& p, const double* hidden, double* logits) {
    const size_t h = p.h(), v = p.v();
    std::memcpy(logits, p.data.data() + p.off_bo(), v * sizeof(double));
    axpy_block(p.data.data() + p.off_wo(), hidden, h, v, logits);
}

double log_softmax_at(const double* logits, size_t v, Token target, double* probs_out) {
    double m = logits[0];
    for (size_t i = 1; i < v; ++i) m = std::max(m, logits[i]);
    double sum = 0.0;
    for (size_t i = 0; i < v; ++i) sum += std::exp(logits[i] - m);
    const double lse = m + std::log(sum);
    if (probs_out)
        for (size_t i = 0; i < v; ++i) probs_out[i] = std::exp(logits[i] - lse);
    return logits[static_cast<size_t>(target)] - lse;
}

void check_token_range(const PolicyParams& p, std::span<const Token> tokens) {
    for (Token t : tokens)
        if (t < 0 || t >= p.cfg.vocab) throw std::out_of_range("token outside vocabulary");
}

} // namespace

PolicyParams::PolicyParams(const PolicyConfig& config) : cfg(config) {
    const size_t total = v() * d() + d() * 3 * h() + h() * 2 * h() + h() * h() + 3 * h() + h() * v() + v();
    data.assign(total, 0.0);
}

PolicyParams init_params(const PolicyConfig& cfg, uint64_t seed) {
    if (cfg.vocab < 2 || cfg.embed_dim < 1 || cfg.hidden_dim < 1)
        throw std::invalid_argument("init_params: bad dimensions");
    PolicyParams p(cfg);
    Rng rng(substream(seed, "policy-init"));
    // Embedding and recurrent weights small random; biases and the output
    // projection zero, which makes the initial distribution exactly uniform.
    const size_t random_until = p.off_b();
    for (size_t i = 0; i < random_until; ++i) p.data[i] = rng.next_range(-0.08, 0.08);
    return p;
}

GruState initial_state(const PolicyParams& params) {
    GruState s;
    s.h.assign(params.h(), 0.0);
    return s;
}

void advance_state(const PolicyParams& params, GruState& state, std::span<const Token> tokens) {
    check_token_range(params, tokens);
    StepBuffers buf;
    buf.resize(params.h());
    gru_run_sequence(params, tokens, state.h.data(), buf, nullptr, nullptr, nullptr, nullptr);
}

void logits_from_state(const PolicyParams& params, const GruState& state, double* logits_out) {
    compute_logits(params, state.h.data(), logits_out);
}

double logprob_from_state(const PolicyParams& params, const GruState& state, Token target) {
    std::vector<double> logits(params.v());
    compute_logits(params, state.h.data(), logits.data());
    return log_softmax_at(logits.data(), params.v(), target, nullptr);
}

std::vector<double> log_probs(const PolicyParams& params, const std::vector<Token>& context,
                              const std::vector<Token>& continuation) {
    if (context.size() + continuation.size() > static_cast<size_t>(params.cfg.max_seq))
        throw std::length_error("log_probs: sequence exceeds max_seq");
    check_token_range(params, context);
    check_token_range(params, continuation);

    GruState state = initial_state(params);
    advance_state(params, state, context);

    StepBuffers buf;
    buf.resize(params.h());
    std::vector<double> next(params.h());
    std::vector<double> logits(params.v());
    std::vector<double> out;
    out.reserve(continuation.size());
    for (size_t t = 0; t < continuation.size(); ++t) {
        compute_logits(params, state.h.data(), logits.data());
        out.push_back(log_softmax_at(logits.data(), params.v(), continuation[t], nullptr));
        if (t + 1 < continuation.size()) {
            gru_step(params, state.h.data(), continuation[t], next.data(), buf, nullptr, nullptr, nullptr);
            state.h.swap(next);
        }
    }
    return out;
}

std::vector<double> log_probs_masked(const PolicyParams& params, const MaterializedContext& ctx) {
    if (ctx.tokens.size() > static_cast<size_t>(params.cfg.max_seq))
        throw std::length_error("log_probs_masked: sequence exceeds max_seq");
    check_token_range(params, ctx.tokens);

    GruState state = initial_state(params);
    StepBuffers buf;
    buf.resize(params.h());
    std::vector<double> next(params.h());
    std::vector<double> logits(params.v());
    std::vector<double> out;
    const size_t n = ctx.tokens.size();
    size_t first_scored = n, last_scored = 0;
    for (size_t p = 0; p < n; ++p)
        if (ctx.loss_mask[p]) {
            first_scored = std::min(first_scored, p);
            last_scored = p;
        }
    if (first_scored == n) return out;

    gru_run_sequence(params, std::span(ctx.tokens.data(), first_scored), state.h.data(), buf, nullptr, nullptr,
                     nullptr, nullptr);
    for (size_t p = first_scored; p <= last_scored; ++p) {
        if (ctx.loss_mask[p]) {
            compute_logits(params, state.h.data(), logits.data());
            out.push_back(log_softmax_at(logits.data(), params.v(), ctx.targets[p], nullptr));
            if (p == last_scored) break;
        }
        gru_step(params, state.h.data(), ctx.tokens[p], next.data(), buf, nullptr, nullptr, nullptr);
        state.h.swap(next);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

SampledTokens sample_from_state(const PolicyParams& params, GruState& state, const SampleConfig& cfg, Rng& rng) {
    if (cfg.temperature < 0.0 || (!cfg.greedy && cfg.temperature == 0.0))
        throw std::invalid_argument("sample: temperature must be positive (or greedy set)");
    if (cfg.top_p <= 0.0 || cfg.top_p > 1.0) throw std::invalid_argument("sample: top_p must be in (0,1]");

    const size_t v = params.v();
    SampledTokens out;
    StepBuffers buf;
    buf.resize(params.h());
    std::vector<double> next(params.h());
    std::vector<double> logits(v);
    std::vector<double> probs(v);
    std::vector<int> order;

    for (int step = 0; step < cfg.max_new_tokens; ++step) {
        compute_logits(params, state.h.data(), logits.data());

        auto allowed = [&](size_t i) {
            return !cfg.forbid_bos_pad || (i != static_cast<size_t>(kTokenBos) && i != static_cast<size_t>(kTokenPad));
        };

        Token chosen = 0;
        if (cfg.greedy) {
            double best = -1e300;
            for (size_t i = 0; i < v; ++i)
                if (allowed(i) && logits[i] > best) {
                    best = logits[i];
                    chosen = static_cast<Token>(i);
                }
        } else {
            // softmax over the allowed set at the sampling temperature
            double m = -1e300;
            for (size_t i = 0; i < v; ++i)
                if (allowed(i)) m = std::max(m, logits[i] / cfg.temperature);
            double total = 0.0;
            for (size_t i = 0; i < v; ++i) {
                probs[i] = allowed(i) ? std::exp(logits[i] / cfg.temperature - m) : 0.0;
                total += probs[i];
            }
            for (size_t i = 0; i < v; ++i) probs[i] /= total;

            if (cfg.top_p < 1.0) {
                order.clear();
                for (size_t i = 0; i < v; ++i)
                    if (probs[i] > 0.0) order.push_back(static_cast<int>(i));
                std::sort(order.begin(), order.end(), [&](int a, int b) {
                    if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)])
                        return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
                    return a < b;
                });
                double cum = 0.0;
                size_t keep = 0;
                while (keep < order.size()) {
                    cum += probs[static_cast<size_t>(order[keep])];
                    ++keep;
                    if (cum >= cfg.top_p) break;
                }
                const double u = rng.next_double() * cum;
                double walk = 0.0;
                chosen = static_cast<Token>(order[keep - 1]);
                for (size_t k = 0; k < keep; ++k) {
                    walk += probs[static_cast<size_t>(order[k])];
                    if (u < walk) {
                        chosen = static_cast<Token>(order[k]);
                        break;
                    }
                }
            } else {
                const double u = rng.next_double();
                double walk = 0.0;
                chosen = -1;
                for (size_t i = 0; i < v; ++i) {
                    walk += probs[i];
                    if (u < walk) {
                        chosen = static_cast<Token>(i);
                        break;
                    }
                }
                if (chosen < 0) { // floating-point residue: fall back to the last allowed token
                    for (size_t i = v; i-- > 0;)
                        if (allowed(i)) {
                            chosen = static_cast<Token>(i);
                            break;
                        }
                }
            }
        }

        out.tokens.push_back(chosen);
        out.logprobs.push_back(log_softmax_at(logits.data(), v, chosen, nullptr));
        if (chosen == kTokenEos) break;

        gru_step(params, state.h.data(), chosen, next.data(), buf, nullptr, nullptr, nullptr);
        state.h.swap(next);
    }
    return out;
}

std::vector<Token> sample(const PolicyParams& params, const std::vector<Token>& context, const SampleConfig& cfg) {
    if (context.size() + static_cast<size_t>(cfg.max_new_tokens) > static_cast<size_t>(params.cfg.max_seq))
        throw std::length_error("sample: sequence exceeds max_seq");
    GruState state = initial_state(params);
    advance_state(params, state, context);
    Rng rng(substream(cfg.rng_seed, "sample"));
    return sample_from_state(params, state, cfg, rng).tokens;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

double grad_weighted_log_probs_fused(const PolicyParams& params, const MaterializedContext& ctx,
                                     const WeightFn& weight_fn, std::vector<double>& grad,
                                     std::vector<double>* logps_out) {
    const size_t n = ctx.tokens.size();
    const size_t h = params.h(), d = params.d(), v = params.v();
    if (ctx.loss_mask.size() != n || ctx.targets.size() != n)
        throw std::invalid_argument("grad_weighted_log_probs: malformed context");
    if (n > static_cast<size_t>(params.cfg.max_seq))
        throw std::length_error("grad_weighted_log_probs: sequence exceeds max_seq");
    if (grad.size() != params.data.size()) throw std::invalid_argument("grad buffer size mismatch");
    check_token_range(params, ctx.tokens);

    std::vector<size_t> scored;
    for (size_t p = 0; p < n; ++p)
        if (ctx.loss_mask[p]) scored.push_back(p);
    if (scored.empty()) {
        if (logps_out) logps_out->clear();
        const std::vector<double> w = weight_fn({});
        if (!w.empty()) throw std::invalid_argument("grad_weighted_log_probs: weights without scored positions");
        return 0.0;
    }
    if (scored.front() == 0) throw std::invalid_argument("grad_weighted_log_probs: position 0 cannot be scored");

    const size_t steps = scored.back(); // feed tokens[0 .. steps), states h[0..steps]
    StepBuffers buf;
    buf.resize(h);

    // forward with tape
    std::vector<double> hstate((steps + 1) * h, 0.0);
    std::vector<double> tape_z(steps * h), tape_r(steps * h), tape_c(steps * h);
    {
        std::vector<double> work(h, 0.0);
        gru_run_sequence(params, std::span(ctx.tokens.data(), steps), work.data(), buf, hstate.data(),
                         tape_z.data(), tape_r.data(), tape_c.data());
    }

    // scored projections
    std::vector<double> logits(v);
    std::vector<double> probs(scored.size() * v);
    std::vector<double> logps(scored.size());
    for (size_t k = 0; k < scored.size(); ++k) {
        const size_t p = scored[k];
        compute_logits(params, &hstate[p * h], logits.data());
        logps[k] = log_softmax_at(logits.data(), v, ctx.targets[p], &probs[k * v]);
    }
    if (logps_out) *logps_out = logps;

    const std::vector<double> weights = weight_fn(logps);
    if (weights.size() != scored.size())
        throw std::invalid_argument("grad_weighted_log_probs: weights/mask length mismatch");

    double objective = 0.0;
    bool any_weight = false;
    for (size_t k = 0; k < scored.size(); ++k) {
        objective += weights[k] * logps[k];
        if (weights[k] != 0.0) any_weight = true;
    }
    if (!any_weight) return objective;

    // backward
    const double* Wx = params.data.data() + params.off_wx();
    const double* Uzr = params.data.data() + params.off_uzr();
    const double* Uc = params.data.data() + params.off_uc();
    const double* Wo = params.data.data() + params.off_wo();
    double* g_emb = grad.data() + params.off_emb();
    double* g_wx = grad.data() + params.off_wx();
    double* g_uzr = grad.data() + params.off_uzr();
    double* g_uc = grad.data() + params.off_uc();
    double* g_b = grad.data() + params.off_b();
    double* g_wo = grad.data() + params.off_wo();
    double* g_bo = grad.data() + params.off_bo();

    std::vector<double> dh(h, 0.0);
    std::vector<double> dlogits(v);
    std::vector<double> drh(h);

    // Phase 1 (sequential): walk backwards once, producing the per-step gate
    // pre-activation gradients. Only the small recurrent matrices take part
    // in the chain, so this pass stays cache-resident.
    std::vector<double> da_all(steps * 3 * h);
    size_t k = scored.size(); // scored positions pending, processed in descending order
    for (size_t t = steps; t-- > 0;) {
        // position p = t + 1 scored?
        while (k > 0 && scored[k - 1] == t + 1) {
            --k;
            const size_t p = scored[k];
            const double w = weights[k];
            const Token y = ctx.targets[p];
            const double* pr = &probs[k * v];
            for (size_t i = 0; i < v; ++i) dlogits[i] = -w * pr[i];
            dlogits[static_cast<size_t>(y)] += w;
            for (size_t i = 0; i < v; ++i) g_bo[i] += dlogits[i];
            outer_acc(g_wo, &hstate[p * h], dlogits.data(), h, v);
            rowdot_acc(Wo, dlogits.data(), h, v, dh.data());
        }

        const double* h_prev = &hstate[t * h];
        const double* z = &tape_z[t * h];
        const double* r = &tape_r[t * h];
        const double* c = &tape_c[t * h];
        double* da = &da_all[t * 3 * h];

        for (size_t i = 0; i < h; ++i) {
            const double dzi = dh[i] * (c[i] - h_prev[i]);
            const double dci = dh[i] * z[i];
            da[i] = dzi * z[i] * (1.0 - z[i]);
            da[2 * h + i] = dci * (1.0 - c[i] * c[i]);
        }
        std::fill(drh.begin(), drh.end(), 0.0);
        rowdot_acc(Uc, da + 2 * h, h, h, drh.data());
        for (size_t i = 0; i < h; ++i) {
            const double dri = drh[i] * h_prev[i];
            da[h + i] = dri * r[i] * (1.0 - r[i]);
        }
        for (size_t i = 0; i < 3 * h; ++i) g_b[i] += da[i];

        // gradient into h_prev: direct carry + reset-gate path + Uzr path
        for (size_t i = 0; i < h; ++i) {
            const double carry = dh[i] * (1.0 - z[i]);
            dh[i] = carry + drh[i] * r[i];
        }
        rowdot_acc(Uzr, da, h, 2 * h, dh.data());
    }

    // Phase 2 (blocked): the heavy weight-gradient outer products and the
    // embedding-gradient rowdots, four time steps per pass so every gradient
    // row is loaded once per block instead of once per step.
    std::vector<double> rh_block(4 * h);
    double dx4[4];
    size_t t0 = 0;
    for (; t0 + 4 <= steps; t0 += 4) {
        const double* da0 = &da_all[t0 * 3 * h];
        const double* da1 = da0 + 3 * h;
        const double* da2 = da1 + 3 * h;
        const double* da3 = da2 + 3 * h;
        const double* h0 = &hstate[t0 * h];
        const double* h1 = h0 + h;
        const double* h2 = h1 + h;
        const double* h3 = h2 + h;

        // dUzr[j][i] += sum_b h_b[j] * da_b[i], i < 2h
        for (size_t j = 0; j < h; ++j) {
            const double c0 = h0[j], c1 = h1[j], c2 = h2[j], c3 = h3[j];
            double* g = g_uzr + j * 2 * h;
            for (size_t i = 0; i < 2 * h; ++i)
                g[i] += c0 * da0[i] + c1 * da1[i] + c2 * da2[i] + c3 * da3[i];
        }
        // dUc[j][i] += sum_b rh_b[j] * da_c_b[i]
        for (size_t b = 0; b < 4; ++b) {
            const double* r = &tape_r[(t0 + b) * h];
            const double* hp = &hstate[(t0 + b) * h];
            for (size_t j = 0; j < h; ++j) rh_block[b * h + j] = r[j] * hp[j];
        }
        for (size_t j = 0; j < h; ++j) {
            const double c0 = rh_block[j], c1 = rh_block[h + j], c2 = rh_block[2 * h + j],
                         c3 = rh_block[3 * h + j];
            double* g = g_uc + j * h;
            const double* a0 = da0 + 2 * h;
            const double* a1 = da1 + 2 * h;
            const double* a2 = da2 + 2 * h;
            const double* a3 = da3 + 2 * h;
            for (size_t i = 0; i < h; ++i) g[i] += c0 * a0[i] + c1 * a1[i] + c2 * a2[i] + c3 * a3[i];
        }
        // dWx and embedding gradients share one pass over Wx rows.
        const Token tok0 = ctx.tokens[t0], tok1 = ctx.tokens[t0 + 1], tok2 = ctx.tokens[t0 + 2],
                    tok3 = ctx.tokens[t0 + 3];
        const double* x0 = params.data.data() + params.off_emb() + static_cast<size_t>(tok0) * d;
        const double* x1 = params.data.data() + params.off_emb() + static_cast<size_t>(tok1) * d;
        const double* x2 = params.data.data() + params.off_emb() + static_cast<size_t>(tok2) * d;
        const double* x3 = params.data.data() + params.off_emb() + static_cast<size_t>(tok3) * d;
        for (size_t j = 0; j < d; ++j) {
            const double c0 = x0[j], c1 = x1[j], c2 = x2[j], c3 = x3[j];
            double* g = g_wx + j * 3 * h;
            const double* w = Wx + j * 3 * h;
            double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (size_t i = 0; i < 3 * h; ++i) {
                g[i] += c0 * da0[i] + c1 * da1[i] + c2 * da2[i] + c3 * da3[i];
                s0 += w[i] * da0[i];
                s1 += w[i] * da1[i];
                s2 += w[i] * da2[i];
                s3 += w[i] * da3[i];
            }
            dx4[0] = s0;
            dx4[1] = s1;
            dx4[2] = s2;
            dx4[3] = s3;
            g_emb[static_cast<size_t>(tok0) * d + j] += dx4[0];
            g_emb[static_cast<size_t>(tok1) * d + j] += dx4[1];
            g_emb[static_cast<size_t>(tok2) * d + j] += dx4[2];
            g_emb[static_cast<size_t>(tok3) * d + j] += dx4[3];
        }
    }
    // remainder steps, one at a time
    for (size_t t = t0; t < steps; ++t) {
        const double* da = &da_all[t * 3 * h];
        const double* h_prev = &hstate[t * h];
        const double* r = &tape_r[t * h];
        const Token token = ctx.tokens[t];
        outer_acc(g_uzr, h_prev, da, h, 2 * h);
        for (size_t j = 0; j < h; ++j) rh_block[j] = r[j] * h_prev[j];
        outer_acc(g_uc, rh_block.data(), da + 2 * h, h, h);
        const double* x = params.data.data() + params.off_emb() + static_cast<size_t>(token) * d;
        outer_acc(g_wx, x, da, d, 3 * h);
        for (size_t j = 0; j < d; ++j) {
            const double* w = Wx + j * 3 * h;
            double s = 0;
            for (size_t i = 0; i < 3 * h; ++i) s += w[i] * da[i];
            g_emb[static_cast<size_t>(token) * d + j] += s;
        }
    }

    return objective;
}

double grad_weighted_log_probs(const PolicyParams& params, const MaterializedContext& ctx,
                               std::span<const double> weights, std::vector<double>& grad) {
    std::vector<double> fixed(weights.begin(), weights.end());
    return grad_weighted_log_probs_fused(
        params, ctx, [&fixed](const std::vector<double>&) { return fixed; }, grad);
}

double grad_weighted_log_probs(const PolicyParams& params, const std::vector<WeightedExample>& batch,
                               std::vector<double>& grad) {
    double total = 0.0;
    for (const WeightedExample& ex : batch) total += grad_weighted_log_probs(params, *ex.ctx, ex.weights, grad);
    return total;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[8] = {'W', 'G', 'Y', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;
} // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const uint32_t version = kCheckpointVersion;
    const int32_t dims[4] = {params.cfg.vocab, params.cfg.embed_dim, params.cfg.hidden_dim, params.cfg.max_seq};
    const uint64_t count = params.data.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(params.data.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    const uint64_t digest = fnv1a64(std::string_view(reinterpret_cast<const char*>(params.data.data()),
                                                     count * sizeof(double)));
    out.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    uint32_t version = 0;
    int32_t dims[4] = {};
    uint64_t count = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
    PolicyConfig cfg;
    cfg.vocab = dims[0];
    cfg.embed_dim = dims[1];
    cfg.hidden_dim = dims[2];
    cfg.max_seq = dims[3];
    PolicyParams params(cfg);
    if (params.data.size() != count) throw std::runtime_error("checkpoint parameter count mismatch");
    in.read(reinterpret_cast<char*>(params.data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    uint64_t digest = 0;
    in.read(reinterpret_cast<char*>(&digest), sizeof(digest));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    const uint64_t expect = fnv1a64(std::string_view(reinterpret_cast<const char*>(params.data.data()),
                                                     count * sizeof(double)));
    if (digest != expect) throw std::runtime_error("checkpoint checksum mismatch: " + path);
    return params;
}

} // namespace webgym
