#pragma once

#include "webgym/policy.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

// Shared test-only oracles. Everything here is deliberately written as a slow,
// straightforward re-derivation, independent of the library's kernels.

namespace testsupport {

// Reference forward pass: per-gate dot products, no blocking, no shared step
// function. Returns log pi(continuation[t] | context, continuation[<t]).
inline std::vector<double> reference_log_probs(const webgym::PolicyParams& p,
                                               const std::vector<webgym::Token>& context,
                                               const std::vector<webgym::Token>& continuation) {
    const size_t d = p.d(), h = p.h(), v = p.v();
    const double* data = p.data.data();
    auto emb = [&](webgym::Token t, size_t j) { return data[p.off_emb() + static_cast<size_t>(t) * d + j]; };
    auto wx = [&](size_t j, size_t i) { return data[p.off_wx() + j * 3 * h + i]; };
    auto uzr = [&](size_t j, size_t i) { return data[p.off_uzr() + j * 2 * h + i]; };
    auto uc = [&](size_t j, size_t i) { return data[p.off_uc() + j * h + i]; };
    auto bias = [&](size_t i) { return data[p.off_b() + i]; };
    auto wo = [&](size_t j, size_t i) { return data[p.off_wo() + j * v + i]; };
    auto bo = [&](size_t i) { return data[p.off_bo() + i]; };

    std::vector<double> hs(h, 0.0);
    auto step = [&](webgym::Token tok) {
        std::vector<double> z(h), r(h), c(h), hnew(h);
        for (size_t i = 0; i < h; ++i) {
            double az = bias(i), ar = bias(h + i);
            for (size_t j = 0; j < d; ++j) {
                az += wx(j, i) * emb(tok, j);
                ar += wx(j, h + i) * emb(tok, j);
            }
            for (size_t j = 0; j < h; ++j) {
                az += uzr(j, i) * hs[j];
                ar += uzr(j, h + i) * hs[j];
            }
            z[i] = 1.0 / (1.0 + std::exp(-az));
            r[i] = 1.0 / (1.0 + std::exp(-ar));
        }
        for (size_t i = 0; i < h; ++i) {
            double ac = bias(2 * h + i);
            for (size_t j = 0; j < d; ++j) ac += wx(j, 2 * h + i) * emb(tok, j);
            for (size_t j = 0; j < h; ++j) ac += uc(j, i) * (r[j] * hs[j]);
            c[i] = std::tanh(ac);
        }
        for (size_t i = 0; i < h; ++i) hnew[i] = (1.0 - z[i]) * hs[i] + z[i] * c[i];
        hs = hnew;
    };
    auto logprob_of = [&](webgym::Token target) {
        std::vector<double> logits(v);
        for (size_t i = 0; i < v; ++i) {
            double a = bo(i);
            for (size_t j = 0; j < h; ++j) a += wo(j, i) * hs[j];
            logits[i] = a;
        }
        double m = logits[0];
        for (double x : logits) m = std::max(m, x);
        double sum = 0.0;
        for (double x : logits) sum += std::exp(x - m);
        return logits[static_cast<size_t>(target)] - (m + std::log(sum));
    };

    for (webgym::Token t : context) step(t);
    std::vector<double> out;
    for (size_t k = 0; k < continuation.size(); ++k) {
        out.push_back(logprob_of(continuation[k]));
        if (k + 1 < continuation.size()) step(continuation[k]);
    }
    return out;
}

// Central finite differences of an arbitrary scalar function of the params.
template <typename F>
std::vector<double> finite_difference_grad(webgym::PolicyParams params, F&& f, double eps = 1e-5) {
    std::vector<double> grad(params.data.size());
    for (size_t i = 0; i < params.data.size(); ++i) {
        const double saved = params.data[i];
        params.data[i] = saved + eps;
        const double up = f(params);
        params.data[i] = saved - eps;
        const double down = f(params);
        params.data[i] = saved;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

inline double max_relative_error(const std::vector<double>& approx, const std::vector<double>& exact) {
    double worst = 0.0;
    for (size_t i = 0; i < approx.size(); ++i) {
        const double denom = std::max({1.0, std::fabs(approx[i]), std::fabs(exact[i])});
        worst = std::max(worst, std::fabs(approx[i] - exact[i]) / denom);
    }
    return worst;
}

// Scratch directory for file round-trip tests.
inline std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("webgym_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

} // namespace testsupport
