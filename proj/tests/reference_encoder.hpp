#pragma once

// Straight-line double-precision transformer forward pass used as a test
// oracle. Deliberately shares no code with src/encoder.cpp: plain loops,
// explicit per-head score matrices, erf-GELU, biased layer-norm variance.

#include <cmath>
#include <string>
#include <vector>

#include "spamdet/encoder.hpp"

namespace spamdet::testing {

inline std::vector<double> reference_cls(const EncoderWeights &w, const std::vector<int> &ids,
                                         const std::vector<std::uint8_t> &mask, bool pooled) {
    const auto &cfg = w.config();
    const int n = static_cast<int>(ids.size());
    const int d = cfg.d_model;
    const int heads = cfg.num_heads;
    const int hd = d / heads;
    const int ff = cfg.d_ff;
    auto T = [&](const std::string &name) -> const std::vector<float> & { return w.at(name).values; };

    auto norm_rows = [&](std::vector<std::vector<double>> &x, const std::string &prefix) {
        const auto &g = T(prefix + ".gamma");
        const auto &b = T(prefix + ".beta");
        for (auto &row : x) {
            double mean = 0;
            for (int j = 0; j < d; ++j) mean += row[j];
            mean /= d;
            double var = 0;
            for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= d;
            for (int j = 0; j < d; ++j) row[j] = (row[j] - mean) / std::sqrt(var + cfg.layer_norm_eps) * g[j] + b[j];
        }
    };
    auto dense = [&](const std::vector<std::vector<double>> &x, const std::string &prefix, int in, int out) {
        const auto &W = T(prefix + ".weight");
        const auto &B = T(prefix + ".bias");
        std::vector<std::vector<double>> y(x.size(), std::vector<double>(out));
        for (std::size_t i = 0; i < x.size(); ++i)
            for (int o = 0; o < out; ++o) {
                double acc = B[o];
                for (int k = 0; k < in; ++k) acc += x[i][k] * W[static_cast<std::size_t>(k) * out + o];
                y[i][o] = acc;
            }
        return y;
    };

    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    const auto &word = T("embeddings.word");
    const auto &pos = T("embeddings.position");
    const auto &seg = T("embeddings.segment");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            x[i][j] = double(word[static_cast<std::size_t>(ids[i]) * d + j]) + pos[static_cast<std::size_t>(i) * d + j] + seg[j];
    norm_rows(x, "embeddings.ln");

    for (int l = 0; l < cfg.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const auto q = dense(x, p + "attn.q", d, d);
        const auto k = dense(x, p + "attn.k", d, d);
        const auto v = dense(x, p + "attn.v", d, d);
        std::vector<std::vector<double>> ctx(n, std::vector<double>(d, 0.0));
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < n; ++i) {
                std::vector<double> s(n);
                double mx = -1e300;
                for (int j = 0; j < n; ++j) {
                    double dot = 0;
                    for (int t = 0; t < hd; ++t) dot += q[i][h * hd + t] * k[j][h * hd + t];
                    s[j] = dot / std::sqrt(double(hd)) + (mask[j] ? 0.0 : -1e9);
                    mx = std::max(mx, s[j]);
                }
                double z = 0;
                for (int j = 0; j < n; ++j) z += (s[j] = std::exp(s[j] - mx));
                for (int j = 0; j < n; ++j)
                    for (int t = 0; t < hd; ++t) ctx[i][h * hd + t] += s[j] / z * v[j][h * hd + t];
            }
        }
        auto a = dense(ctx, p + "attn.out", d, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) a[i][j] += x[i][j];
        norm_rows(a, p + "attn.ln");
        x = a;
        auto inner = dense(x, p + "ffn.in", d, ff);
        for (auto &row : inner)
            for (auto &u : row) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
        auto f = dense(inner, p + "ffn.out", ff, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) f[i][j] += x[i][j];
        norm_rows(f, p + "ffn.ln");
        x = f;
    }
    std::vector<std::vector<double>> cls = {x[0]};
    if (!pooled) return cls[0];
    auto out = dense(cls, "pooler", d, d)[0];
    for (auto &u : out) u = std::tanh(u);
    return out;
}

} // namespace spamdet::testing
