#pragma once

// Independent naive decoder-only forward pass used as an oracle. Plain
// double-precision loops with a materialized causal mask; shares no code with
// the library implementation beyond reading the same parameter tensors.

#include <cmath>
#include <vector>

#include "memseeker/model.hpp"

namespace naive {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(int r, int c) { return Mat(static_cast<size_t>(r), std::vector<double>(static_cast<size_t>(c), 0.0)); }

template <class S>
Mat to_mat(const memseeker::Tensor<S>& t) {
    Mat m = zeros(t.rows(), t.cols());
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) m[i][j] = static_cast<double>(t.at(i, j));
    return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
    const int m = static_cast<int>(a.size()), k = static_cast<int>(b.size()), n = static_cast<int>(b[0].size());
    Mat c = zeros(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += a[i][t] * b[t][j];
            c[i][j] = s;
        }
    return c;
}

inline void layernorm_inplace(Mat& x, const std::vector<double>& g, const std::vector<double>& b, double eps = 1e-5) {
    for (auto& row : x) {
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(row.size());
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(row.size());
        const double inv = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < row.size(); ++j) row[j] = g[j] * ((row[j] - mean) * inv) + b[j];
    }
}

inline double gelu1(double v) {
    const double c = std::sqrt(2.0 / 3.14159265358979323846);
    return 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
}

template <class S>
std::vector<double> vec_of(const memseeker::Tensor<S>& t) {
    std::vector<double> v(t.size());
    for (size_t i = 0; i < t.size(); ++i) v[i] = static_cast<double>(t.data()[i]);
    return v;
}

// Vanilla causal decoder forward over `tokens` starting at global position
// start_pos; returns logits. Matches the library's architecture contract:
// sinusoidal positions, pre-norm blocks, tanh GELU, shared scale 1/sqrt(dh).
template <class S>
Mat forward(memseeker::ModelParams<S>& params, const std::vector<int>& tokens, int start_pos = 0) {
    const auto& cfg = params.cfg;
    const int n = static_cast<int>(tokens.size());
    const int d = cfg.d_model;
    Mat h = zeros(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) h[i][j] = static_cast<double>(params.tok_embed.at(tokens[static_cast<size_t>(i)], j));
        for (int j = 0; j < d; j += 2) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(d));
            h[i][j] += std::sin(static_cast<double>(start_pos + i) * freq);
            if (j + 1 < d) h[i][j + 1] += std::cos(static_cast<double>(start_pos + i) * freq);
        }
    }

    const int dh = cfg.d_head();
    for (int l = 0; l < cfg.n_layers; ++l) {
        auto& lp = params.layers[static_cast<size_t>(l)];
        Mat x = h;
        layernorm_inplace(x, vec_of(lp.ln1_g), vec_of(lp.ln1_b));
        Mat q = mul(x, to_mat(lp.w_q)), k = mul(x, to_mat(lp.w_k)), v = mul(x, to_mat(lp.w_v));
        Mat ctx = zeros(n, d);
        for (int head = 0; head < cfg.n_heads; ++head) {
            const int off = head * dh;
            // materialized causal mask: row i sees columns j <= i
            for (int i = 0; i < n; ++i) {
                std::vector<double> scores(static_cast<size_t>(i) + 1);
                double mx = -1e300;
                for (int j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (int t = 0; t < dh; ++t) s += q[i][off + t] * k[j][off + t];
                    s /= std::sqrt(static_cast<double>(dh));
                    scores[static_cast<size_t>(j)] = s;
                    mx = std::max(mx, s);
                }
                double denom = 0.0;
                for (int j = 0; j <= i; ++j) {
                    scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
                    denom += scores[static_cast<size_t>(j)];
                }
                for (int j = 0; j <= i; ++j)
                    for (int t = 0; t < dh; ++t) ctx[i][off + t] += scores[static_cast<size_t>(j)] / denom * v[j][off + t];
            }
        }
        Mat attn = mul(ctx, to_mat(lp.w_o));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) h[i][j] += attn[i][j];

        Mat y = h;
        layernorm_inplace(y, vec_of(lp.ln2_g), vec_of(lp.ln2_b));
        Mat mid = mul(y, to_mat(lp.fc_w));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < cfg.mlp_hidden; ++j) mid[i][j] = gelu1(mid[i][j] + static_cast<double>(lp.fc_b.at(j)));
        Mat mlp = mul(mid, to_mat(lp.proj_w));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) h[i][j] += mlp[i][j] + static_cast<double>(lp.proj_b.at(j));
    }
    layernorm_inplace(h, vec_of(params.lnf_g), vec_of(params.lnf_b));
    Mat logits;
    if (params.cfg.tie_logits) {
        Mat et = to_mat(params.tok_embed);
        Mat ett = zeros(static_cast<int>(et[0].size()), static_cast<int>(et.size()));
        for (size_t i = 0; i < et.size(); ++i)
            for (size_t j = 0; j < et[0].size(); ++j) ett[j][i] = et[i][j];
        logits = mul(h, ett);
    } else {
        logits = mul(h, to_mat(params.logit_w));
    }
    return logits;
}

}  // namespace naive
