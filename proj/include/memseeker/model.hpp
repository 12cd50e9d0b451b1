#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memseeker/membank.hpp"
#include "memseeker/ops.hpp"
#include "memseeker/rng.hpp"
#include "memseeker/stats.hpp"
#include "memseeker/tensor.hpp"

namespace memseeker {

struct ModelConfig {
    int vocab_size = 128;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int mlp_hidden = 256;
    int k_max = 16;        // memory-slot capacity of the memory embedding table
    int max_position = 8192;
    int alpha = 16;        // compression ratio: tokens per memory token
    int seg_len = 32;      // tokens per segment
    bool tie_logits = false;

    int d_head() const { return d_model / n_heads; }

    void validate() const {
        auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelConfig: " + msg); };
        if (vocab_size < 1) fail("vocab_size must be >= 1");
        if (n_layers < 1) fail("n_layers must be >= 1");
        if (n_heads < 1 || d_model < 1 || d_model % n_heads != 0) fail("d_model must be a positive multiple of n_heads");
        if (mlp_hidden < 1) fail("mlp_hidden must be >= 1");
        if (k_max < 1) fail("k_max must be >= 1");
        if (alpha < 1) fail("alpha must be >= 1");
        if (seg_len < 1) fail("seg_len must be >= 1");
        if (max_position < 1) fail("max_position must be >= 1");
    }
};

// Attention visibility for one block of N regular rows followed by k memory
// rows, against P stored history columns. Regular queries see all history and
// their causal prefix of regular columns, never the block's memory columns.
// Memory queries see all history, every regular column, and their own causal
// prefix of memory columns.
struct AttnMask {
    int n_past = 0;
    int n_regular = 0;
    int n_mem = 0;
    std::vector<uint8_t> allowed;  // (N+k) x (P+N+k), row-major

    int rows() const { return n_regular + n_mem; }
    int cols() const { return n_past + n_regular + n_mem; }
    bool at(int i, int j) const { return allowed[static_cast<size_t>(i) * cols() + j] != 0; }
};

inline AttnMask build_mask(int n_past, int n_regular, int n_mem) {
    if (n_past < 0 || n_regular < 0 || n_mem < 0) throw std::invalid_argument("build_mask: negative count");
    if (n_regular + n_mem < 1) throw std::invalid_argument("build_mask: empty block");
    AttnMask m;
    m.n_past = n_past;
    m.n_regular = n_regular;
    m.n_mem = n_mem;
    m.allowed.assign(static_cast<size_t>(m.rows()) * m.cols(), 0);
    const int cols = m.cols();
    for (int i = 0; i < n_regular; ++i) {
        uint8_t* row = m.allowed.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < n_past; ++j) row[j] = 1;
        for (int j = 0; j <= i; ++j) row[n_past + j] = 1;
    }
    for (int i = 0; i < n_mem; ++i) {
        uint8_t* row = m.allowed.data() + static_cast<size_t>(n_regular + i) * cols;
        for (int j = 0; j < n_past + n_regular; ++j) row[j] = 1;
        for (int j = 0; j <= i; ++j) row[n_past + n_regular + j] = 1;
    }
    return m;
}

template <class S>
struct LayerParams {
    Tensor<S> w_q, w_k, w_v, w_o;
    Tensor<S> wm_q, wm_k, wm_v;  // memory-token projections
    Tensor<S> fc_w, fc_b, proj_w, proj_b;
    Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <class S>
struct ModelParams {
    ModelConfig cfg;
    Tensor<S> tok_embed;  // vocab x d
    Tensor<S> mem_embed;  // k_max x d
    std::vector<LayerParams<S>> layers;
    Tensor<S> lnf_g, lnf_b;
    Tensor<S> logit_w;  // d x vocab; absent when tied to tok_embed

    // Stable enumeration order; serialization, the optimizer and gradient
    // reduction all rely on it.
    void for_each_param(const std::function<void(const std::string&, Tensor<S>&)>& fn) {
        fn("tok_embed", tok_embed);
        fn("mem_embed", mem_embed);
        for (size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            auto& lp = layers[l];
            fn(p + "ln1_g", lp.ln1_g);
            fn(p + "ln1_b", lp.ln1_b);
            fn(p + "w_q", lp.w_q);
            fn(p + "w_k", lp.w_k);
            fn(p + "w_v", lp.w_v);
            fn(p + "w_o", lp.w_o);
            fn(p + "wm_q", lp.wm_q);
            fn(p + "wm_k", lp.wm_k);
            fn(p + "wm_v", lp.wm_v);
            fn(p + "ln2_g", lp.ln2_g);
            fn(p + "ln2_b", lp.ln2_b);
            fn(p + "fc_w", lp.fc_w);
            fn(p + "fc_b", lp.fc_b);
            fn(p + "proj_w", lp.proj_w);
            fn(p + "proj_b", lp.proj_b);
        }
        fn("final_norm.g", lnf_g);
        fn("final_norm.b", lnf_b);
        if (!cfg.tie_logits) fn("logit_w", logit_w);
    }

    static bool is_memory_param(const std::string& name) {
        if (name == "mem_embed") return true;
        auto pos = name.find(".wm_");
        return pos != std::string::npos;
    }

    // Grad buffers mark trainability: stage "memory_only" trains just the
    // memory embedding table and the memory projections.
    void set_trainable_all() {
        for_each_param([](const std::string&, Tensor<S>& t) { t.ensure_grad(); });
    }
    void set_trainable_memory_only() {
        for_each_param([](const std::string& name, Tensor<S>& t) {
            if (is_memory_param(name))
                t.ensure_grad();
            else
                t.drop_grad();
        });
    }
    void freeze_all() {
        for_each_param([](const std::string&, Tensor<S>& t) { t.drop_grad(); });
    }
    void zero_grads() {
        for_each_param([](const std::string&, Tensor<S>& t) { t.zero_grad(); });
    }

    size_t param_count() {
        size_t n = 0;
        for_each_param([&n](const std::string&, Tensor<S>& t) { n += t.size(); });
        return n;
    }

    static ModelParams init(const ModelConfig& cfg, uint64_t seed, int bos_id = 1);
};

template <class S>
ModelParams<S> ModelParams<S>::init(const ModelConfig& cfg, uint64_t seed, int bos_id) {
    cfg.validate();
    if (bos_id < 0 || bos_id >= cfg.vocab_size) throw std::invalid_argument("init: bos id out of range");
    ModelParams<S> p;
    p.cfg = cfg;
    const int d = cfg.d_model;
    p.tok_embed = Tensor<S>({cfg.vocab_size, d});
    p.mem_embed = Tensor<S>({cfg.k_max, d});
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& lp : p.layers) {
        for (auto* t : {&lp.w_q, &lp.w_k, &lp.w_v, &lp.w_o, &lp.wm_q, &lp.wm_k, &lp.wm_v}) *t = Tensor<S>({d, d});
        lp.fc_w = Tensor<S>({d, cfg.mlp_hidden});
        lp.fc_b = Tensor<S>({cfg.mlp_hidden});
        lp.proj_w = Tensor<S>({cfg.mlp_hidden, d});
        lp.proj_b = Tensor<S>({d});
        lp.ln1_g = Tensor<S>::full({d}, S(1));
        lp.ln1_b = Tensor<S>({d});
        lp.ln2_g = Tensor<S>::full({d}, S(1));
        lp.ln2_b = Tensor<S>({d});
    }
    p.lnf_g = Tensor<S>::full({d}, S(1));
    p.lnf_b = Tensor<S>({d});
    if (!cfg.tie_logits) p.logit_w = Tensor<S>({d, cfg.vocab_size});

    CounterRng root(seed);
    p.for_each_param([&root](const std::string& name, Tensor<S>& t) {
        // norms and biases stay at their constant init
        if (name.find("ln") != std::string::npos || name.find("norm") != std::string::npos ||
            name.find("_b") == name.size() - 2)
            return;
        CounterRng rng = root.child(CounterRng::mix64(std::hash<std::string>{}(name)));
        for (size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(rng.trunc_normal(0.02));
    });

    // Memory table rows start as copies of the bos embedding; memory
    // projections start as bitwise copies of the regular projections.
    for (int r = 0; r < cfg.k_max; ++r)
        for (int j = 0; j < d; ++j) p.mem_embed.at(r, j) = p.tok_embed.at(bos_id, j);
    for (auto& lp : p.layers) {
        std::copy(lp.w_q.data(), lp.w_q.data() + lp.w_q.size(), lp.wm_q.data());
        std::copy(lp.w_k.data(), lp.w_k.data() + lp.w_k.size(), lp.wm_k.data());
        std::copy(lp.w_v.data(), lp.w_v.data() + lp.w_v.size(), lp.wm_v.data());
    }
    return p;
}

// Sinusoidal absolute position row for a global position index.
template <class S>
void write_sinusoid(S* row, int pos, int d) {
    for (int j = 0; j < d; j += 2) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(d));
        const double angle = static_cast<double>(pos) * freq;
        row[j] = static_cast<S>(std::sin(angle));
        if (j + 1 < d) row[j + 1] = static_cast<S>(std::cos(angle));
    }
}

// Token rows first, then the first k memory-table rows, with consecutive
// global positions starting at start_pos added to every row.
template <class S>
Tensor<S> embed_block(ModelParams<S>& params, std::span<const int> tokens, int mem_count, int start_pos,
                      Tape<S>* tape = nullptr) {
    const ModelConfig& cfg = params.cfg;
    if (mem_count < 0 || mem_count > cfg.k_max)
        throw std::invalid_argument("embed_block: mem_count " + std::to_string(mem_count) + " exceeds capacity " +
                                    std::to_string(cfg.k_max));
    const int n_tok = static_cast<int>(tokens.size());
    if (start_pos < 0 || start_pos + n_tok + mem_count > cfg.max_position)
        throw std::out_of_range("embed_block: positions exceed max_position");

    std::vector<Tensor<S>> parts;
    if (n_tok > 0) parts.push_back(embedding_rows(params.tok_embed, tokens, tape));
    if (mem_count > 0) {
        std::vector<int> slots(static_cast<size_t>(mem_count));
        for (int i = 0; i < mem_count; ++i) slots[static_cast<size_t>(i)] = i;
        parts.push_back(embedding_rows(params.mem_embed, slots, tape));
    }
    Tensor<S> base = parts.size() == 1 ? parts[0] : concat_rows(std::span<const Tensor<S>>(parts), tape);

    Tensor<S> pe({base.rows(), cfg.d_model});
    for (int r = 0; r < base.rows(); ++r) write_sinusoid(pe.data() + static_cast<size_t>(r) * cfg.d_model, start_pos + r, cfg.d_model);
    return add(base, pe, tape);
}

template <class S>
struct AttnOut {
    Tensor<S> out;
    KV<S> mem_kv;  // empty tensors when k == 0
    KV<S> reg_kv;
};

// One attention layer over [regular rows | memory rows] with the bank's past
// keys/values prepended. Regular rows use w_{q,k,v}; memory rows use the
// dedicated wm_{q,k,v}; both share w_o.
template <class S>
AttnOut<S> attn_with_memory(const LayerParams<S>& lp, const Tensor<S>& h, std::span<const Tensor<S>> past_k,
                            std::span<const Tensor<S>> past_v, int mem_count, int n_heads, Tape<S>* tape = nullptr,
                            RunStats* stats = nullptr) {
    const int total = h.rows();
    const int n_reg = total - mem_count;
    if (n_reg < 0) throw std::invalid_argument("attn_with_memory: more memory rows than rows");
    const int d = h.cols();
    const int dh = d / n_heads;

    int n_past = 0;
    for (const auto& t : past_k) n_past += t.rows();

    AttnOut<S> result;
    Tensor<S> q_all, k_all, v_all;
    {
        std::vector<Tensor<S>> qs, ks, vs;
        ks.insert(ks.end(), past_k.begin(), past_k.end());
        vs.insert(vs.end(), past_v.begin(), past_v.end());
        if (n_reg > 0) {
            Tensor<S> hr = slice_rows(h, 0, n_reg, tape);
            qs.push_back(matmul(hr, lp.w_q, tape));
            Tensor<S> kr = matmul(hr, lp.w_k, tape);
            Tensor<S> vr = matmul(hr, lp.w_v, tape);
            ks.push_back(kr);
            vs.push_back(vr);
            result.reg_kv = {kr, vr};
        }
        if (mem_count > 0) {
            Tensor<S> hm = slice_rows(h, n_reg, total, tape);
            qs.push_back(matmul(hm, lp.wm_q, tape));
            Tensor<S> km = matmul(hm, lp.wm_k, tape);
            Tensor<S> vm = matmul(hm, lp.wm_v, tape);
            ks.push_back(km);
            vs.push_back(vm);
            result.mem_kv = {km, vm};
        }
        q_all = qs.size() == 1 ? qs[0] : concat_rows(std::span<const Tensor<S>>(qs), tape);
        k_all = ks.size() == 1 ? ks[0] : concat_rows(std::span<const Tensor<S>>(ks), tape);
        v_all = vs.size() == 1 ? vs[0] : concat_rows(std::span<const Tensor<S>>(vs), tape);
    }

    const AttnMask mask = build_mask(n_past, n_reg, mem_count);
    if (stats) stats->note_width(mask.cols());
    const S inv_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    std::vector<Tensor<S>> head_ctx;
    head_ctx.reserve(static_cast<size_t>(n_heads));
    for (int hh = 0; hh < n_heads; ++hh) {
        Tensor<S> qh = slice_cols(q_all, hh * dh, (hh + 1) * dh, tape);
        Tensor<S> kh = slice_cols(k_all, hh * dh, (hh + 1) * dh, tape);
        Tensor<S> vh = slice_cols(v_all, hh * dh, (hh + 1) * dh, tape);
        Tensor<S> scores = scale(matmul_nt(qh, kh, tape), inv_scale, tape);
        Tensor<S> probs = masked_softmax_rows(scores, mask.allowed, tape);
        head_ctx.push_back(matmul(probs, vh, tape));
    }
    Tensor<S> ctx = n_heads == 1 ? head_ctx[0] : concat_cols(std::span<const Tensor<S>>(head_ctx), tape);
    result.out = matmul(ctx, lp.w_o, tape);
    return result;
}

template <class S>
struct BlockOut {
    Tensor<S> logits;               // (N+k) x vocab
    std::vector<KV<S>> mem_kv;      // per layer; empty when k == 0
    std::vector<KV<S>> reg_kv;      // per layer; filled when requested
};

// Full pre-norm residual stack over one block, reading history from the bank.
template <class S>
BlockOut<S> forward_block(ModelParams<S>& params, const MemoryBank<S>& bank, std::span<const int> tokens, int mem_count,
                          int start_pos, Tape<S>* tape = nullptr, RunStats* stats = nullptr, bool want_reg_kv = false) {
    const ModelConfig& cfg = params.cfg;
    if (bank.n_layers() != cfg.n_layers) throw std::runtime_error("forward_block: bank layer count mismatch");

    BlockOut<S> out;
    Tensor<S> h = embed_block(params, tokens, mem_count, start_pos, tape);
    for (int l = 0; l < cfg.n_layers; ++l) {
        auto& lp = params.layers[static_cast<size_t>(l)];
        Tensor<S> normed = layer_norm(h, lp.ln1_g, lp.ln1_b, S(1e-5), tape);
        const auto& store = bank.layer(l);
        AttnOut<S> attn = attn_with_memory<S>(lp, normed, std::span<const Tensor<S>>(store.keys),
                                              std::span<const Tensor<S>>(store.values), mem_count, cfg.n_heads, tape, stats);
        h = add(h, attn.out, tape);
        Tensor<S> normed2 = layer_norm(h, lp.ln2_g, lp.ln2_b, S(1e-5), tape);
        Tensor<S> mid = gelu(add_row_bias(matmul(normed2, lp.fc_w, tape), lp.fc_b, tape), tape);
        Tensor<S> mlp = add_row_bias(matmul(mid, lp.proj_w, tape), lp.proj_b, tape);
        h = add(h, mlp, tape);
        if (mem_count > 0) out.mem_kv.push_back(attn.mem_kv);
        if (want_reg_kv) out.reg_kv.push_back(attn.reg_kv);
    }
    Tensor<S> top = layer_norm(h, params.lnf_g, params.lnf_b, S(1e-5), tape);
    out.logits = cfg.tie_logits ? matmul_nt(top, params.tok_embed, tape) : matmul(top, params.logit_w, tape);
    return out;
}

}  // namespace memseeker
