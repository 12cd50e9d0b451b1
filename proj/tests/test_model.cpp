#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "memseeker/gradcheck.hpp"
#include "memseeker/model.hpp"
#include "naive_reference.hpp"

using namespace memseeker;

namespace {

ModelConfig tiny_config(int layers = 1, int d = 16, int heads = 2) {
    ModelConfig cfg;
    cfg.vocab_size = 32;
    cfg.d_model = d;
    cfg.n_layers = layers;
    cfg.n_heads = heads;
    cfg.mlp_hidden = 2 * d;
    cfg.k_max = 4;
    cfg.max_position = 512;
    cfg.alpha = 4;
    cfg.seg_len = 8;
    return cfg;
}

std::vector<int> random_tokens(CounterRng& rng, int n, int vocab) {
    std::vector<int> out(static_cast<size_t>(n));
    for (auto& t : out) t = static_cast<int>(rng.below(static_cast<uint64_t>(vocab)));
    return out;
}

// The 0.02-sigma init leaves attention nearly uniform, which makes score-path
// gradients too small for finite differences to resolve. Boost the score
// projections so the checked configuration is well conditioned.
void sharpen_attention(ModelParams<double>& params, double factor = 25.0) {
    for (auto& lp : params.layers)
        for (auto* t : {&lp.w_q, &lp.w_k, &lp.wm_q, &lp.wm_k})
            for (size_t i = 0; i < t->size(); ++i) t->data()[i] *= factor;
}

// The spec's visibility rules, written as a direct predicate.
bool mask_rule(int P, int N, int k, int row, int col) {
    if (row < N) {  // regular query
        if (col < P) return true;
        if (col < P + N) return (col - P) <= row;
        return false;  // current memory columns are off limits
    }
    const int m = row - N;  // memory query
    if (col < P + N) return true;
    return (col - P - N) <= m;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.d_model = 17;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.alpha = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("initialization invariant: memory params copy base params bitwise") {
    auto params = ModelParams<double>::init(tiny_config(2), 99, /*bos=*/1);
    for (int r = 0; r < params.cfg.k_max; ++r)
        for (int j = 0; j < params.cfg.d_model; ++j) CHECK(params.mem_embed.at(r, j) == params.tok_embed.at(1, j));
    for (auto& lp : params.layers) {
        for (size_t i = 0; i < lp.w_q.size(); ++i) CHECK(lp.wm_q.data()[i] == lp.w_q.data()[i]);
        for (size_t i = 0; i < lp.w_k.size(); ++i) CHECK(lp.wm_k.data()[i] == lp.w_k.data()[i]);
        for (size_t i = 0; i < lp.w_v.size(); ++i) CHECK(lp.wm_v.data()[i] == lp.w_v.data()[i]);
    }
}

TEST_CASE("embed_block basics") {
    auto params = ModelParams<double>::init(tiny_config(), 7);
    const int d = params.cfg.d_model;

    // memory-only block: rows are the memory table plus positions 0,1
    TensorD only_mem = embed_block<double>(params, {}, 2, 0);
    CHECK(only_mem.rows() == 2);
    for (int r = 0; r < 2; ++r) {
        std::vector<double> pe(static_cast<size_t>(d));
        write_sinusoid(pe.data(), r, d);
        for (int j = 0; j < d; ++j) CHECK(only_mem.at(r, j) == doctest::Approx(params.mem_embed.at(r, j) + pe[static_cast<size_t>(j)]));
    }

    // same tokens at different start positions differ only by the positional term
    std::vector<int> toks{3, 5, 7};
    TensorD a = embed_block<double>(params, toks, 0, 0);
    TensorD b = embed_block<double>(params, toks, 0, 100);
    for (int r = 0; r < 3; ++r) {
        std::vector<double> p0(static_cast<size_t>(d)), p1(static_cast<size_t>(d));
        write_sinusoid(p0.data(), r, d);
        write_sinusoid(p1.data(), 100 + r, d);
        for (int j = 0; j < d; ++j)
            CHECK(b.at(r, j) - a.at(r, j) == doctest::Approx(p1[static_cast<size_t>(j)] - p0[static_cast<size_t>(j)]).epsilon(1e-12));
    }

    // k = 0 reduces to plain token embedding + positions
    TensorD plain = embed_block<double>(params, toks, 0, 4);
    CHECK(plain.rows() == 3);

    CHECK_THROWS_AS(embed_block<double>(params, toks, params.cfg.k_max + 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(embed_block<double>(params, toks, 0, params.cfg.max_position - 1), std::out_of_range);
}

TEST_CASE("build_mask worked examples") {
    // P=2, N=3, k=1
    AttnMask m = build_mask(2, 3, 1);
    CHECK(m.rows() == 4);
    CHECK(m.cols() == 6);
    // row 0: both past columns plus current column 0
    for (int j = 0; j < 6; ++j) CHECK(m.at(0, j) == (j == 0 || j == 1 || j == 2));
    // row 3 is the single memory row: every column visible
    for (int j = 0; j < 6; ++j) CHECK(m.at(3, j));

    // P=0, N=n, k=0: plain lower-triangular causal mask
    AttnMask causal = build_mask(0, 5, 0);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(causal.at(i, j) == (j <= i));

    // P=5, N=0, k=1: one memory row sees all past plus itself
    AttnMask mem_only = build_mask(5, 0, 1);
    CHECK(mem_only.rows() == 1);
    for (int j = 0; j < 6; ++j) CHECK(mem_only.at(0, j));

    CHECK_THROWS_AS(build_mask(0, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_mask(-1, 1, 0), std::invalid_argument);
}

TEST_CASE("build_mask equals brute-force predicate up to 5") {
    for (int P = 0; P <= 5; ++P)
        for (int N = 0; N <= 5; ++N)
            for (int k = 0; k <= 5; ++k) {
                if (N + k < 1) continue;
                AttnMask m = build_mask(P, N, k);
                for (int i = 0; i < m.rows(); ++i)
                    for (int j = 0; j < m.cols(); ++j) REQUIRE(m.at(i, j) == mask_rule(P, N, k, i, j));
            }
}

TEST_CASE("attention with P=0,k=0 matches an independent naive forward") {
    CounterRng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        ModelConfig cfg = tiny_config(2, 16, 2);
        auto params = ModelParams<double>::init(cfg, 1000 + static_cast<uint64_t>(trial));
        std::vector<int> toks = random_tokens(rng, 6, cfg.vocab_size);
        MemoryBank<double> bank(cfg.n_layers);
        BlockOut<double> out = forward_block(params, bank, toks, 0, 0);
        naive::Mat ref = naive::forward(params, toks, 0);
        for (int i = 0; i < out.logits.rows(); ++i)
            for (int j = 0; j < out.logits.cols(); ++j)
                CHECK(std::fabs(out.logits.at(i, j) - ref[static_cast<size_t>(i)][static_cast<size_t>(j)]) < 1e-10);
    }
}

TEST_CASE("regular rows are bitwise unchanged by memory rows") {
    CounterRng rng(77);
    ModelConfig cfg = tiny_config(2, 16, 2);
    auto params = ModelParams<double>::init(cfg, 5);
    std::vector<int> toks = random_tokens(rng, 7, cfg.vocab_size);
    MemoryBank<double> bank(cfg.n_layers);
    BlockOut<double> base = forward_block(params, bank, toks, 0, 0);
    for (int k = 1; k <= cfg.k_max; ++k) {
        BlockOut<double> with_mem = forward_block(params, bank, toks, k, 0);
        CHECK(with_mem.logits.rows() == static_cast<int>(toks.size()) + k);
        for (int i = 0; i < base.logits.rows(); ++i)
            for (int j = 0; j < base.logits.cols(); ++j) REQUIRE(with_mem.logits.at(i, j) == base.logits.at(i, j));
    }
}

TEST_CASE("with wm == w and P=0 memory rows act as ordinary suffix tokens") {
    CounterRng rng(13);
    ModelConfig cfg = tiny_config(1, 16, 2);
    auto params = ModelParams<double>::init(cfg, 21);  // init already sets wm := w
    const int n = 5, k = 3;
    TensorD h({n + k, cfg.d_model});
    for (size_t i = 0; i < h.size(); ++i) h.data()[i] = rng.uniform(-1, 1);

    auto& lp = params.layers[0];
    AttnOut<double> with_mem = attn_with_memory<double>(lp, h, {}, {}, k, cfg.n_heads);
    AttnOut<double> all_regular = attn_with_memory<double>(lp, h, {}, {}, 0, cfg.n_heads);
    for (size_t i = 0; i < with_mem.out.size(); ++i) REQUIRE(with_mem.out.data()[i] == all_regular.out.data()[i]);
}

TEST_CASE("forward_block shape and determinism") {
    ModelConfig cfg = tiny_config(2, 16, 2);
    auto params = ModelParams<double>::init(cfg, 3);
    CounterRng rng(2);
    std::vector<int> toks = random_tokens(rng, 6, cfg.vocab_size);
    MemoryBank<double> bank(cfg.n_layers);
    BlockOut<double> a = forward_block(params, bank, toks, 2, 0);
    BlockOut<double> b = forward_block(params, bank, toks, 2, 0);
    CHECK(a.logits.rows() == 8);
    CHECK(a.logits.cols() == cfg.vocab_size);
    for (size_t i = 0; i < a.logits.size(); ++i) REQUIRE(a.logits.data()[i] == b.logits.data()[i]);
    CHECK(a.mem_kv.size() == 2);
    CHECK(a.logits.all_finite());

    MemoryBank<double> wrong(cfg.n_layers + 1);
    CHECK_THROWS_AS(forward_block(params, wrong, toks, 2, 0), std::runtime_error);
}

TEST_CASE("tied logit head uses the token embedding") {
    ModelConfig cfg = tiny_config(1, 16, 2);
    cfg.tie_logits = true;
    auto params = ModelParams<double>::init(cfg, 11);
    MemoryBank<double> bank(cfg.n_layers);
    std::vector<int> toks{1, 2, 3};
    BlockOut<double> out = forward_block(params, bank, toks, 0, 0);
    naive::Mat ref = naive::forward(params, toks, 0);
    for (int i = 0; i < out.logits.rows(); ++i)
        for (int j = 0; j < out.logits.cols(); ++j)
            CHECK(std::fabs(out.logits.at(i, j) - ref[static_cast<size_t>(i)][static_cast<size_t>(j)]) < 1e-10);
}

TEST_CASE("gradients through a 2-layer block with history and memory rows") {
    ModelConfig cfg = tiny_config(2, 16, 2);
    auto params = ModelParams<double>::init(cfg, 17);
    sharpen_attention(params);
    params.set_trainable_all();
    CounterRng rng(4);
    std::vector<int> seg1 = random_tokens(rng, 5, cfg.vocab_size);
    std::vector<int> seg2 = random_tokens(rng, 4, cfg.vocab_size);
    std::vector<int> pos{5, 6};

    auto loss_fn = [&](bool with_grad) -> double {
        Tape<double> tape;
        Tape<double>* tp = with_grad ? &tape : nullptr;
        MemoryBank<double> bank(cfg.n_layers);
        BlockOut<double> first = forward_block(params, bank, seg1, 2, 0, tp);
        bank.append(first.mem_kv, pos);
        BlockOut<double> second = forward_block(params, bank, seg2, 2, 7, tp);
        TensorD loss = mean_all(second.logits, tp);
        if (with_grad) {
            loss.grad()[0] = 1.0;
            tape.backward();
        }
        return loss.at(0);
    };

    std::vector<std::pair<std::string, TensorD>> named;
    params.for_each_param([&](const std::string& n, TensorD& t) { named.emplace_back(n, t); });
    GradCheckReport rep = grad_check<double>(named, loss_fn, 1e-4, 24);
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("one-layer model gradient check with 64 sampled coords") {
    ModelConfig cfg = tiny_config(1, 16, 2);
    auto params = ModelParams<double>::init(cfg, 23);
    sharpen_attention(params);
    params.set_trainable_all();
    CounterRng rng(9);
    std::vector<int> toks = random_tokens(rng, 6, cfg.vocab_size);

    auto loss_fn = [&](bool with_grad) -> double {
        Tape<double> tape;
        Tape<double>* tp = with_grad ? &tape : nullptr;
        MemoryBank<double> bank(cfg.n_layers);
        BlockOut<double> out = forward_block(params, bank, toks, 2, 0, tp);
        TensorD loss = mean_all(out.logits, tp);
        if (with_grad) {
            loss.grad()[0] = 1.0;
            tape.backward();
        }
        return loss.at(0);
    };

    std::vector<std::pair<std::string, TensorD>> named;
    params.for_each_param([&](const std::string& n, TensorD& t) { named.emplace_back(n, t); });
    GradCheckReport rep = grad_check<double>(named, loss_fn, 1e-4, 64);
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("memory-only trainability selects E^m and wm projections") {
    auto params = ModelParams<float>::init(tiny_config(2), 1);
    params.set_trainable_memory_only();
    int trainable = 0, frozen = 0;
    params.for_each_param([&](const std::string& name, TensorF& t) {
        if (t.has_grad()) {
            ++trainable;
            CHECK(ModelParams<float>::is_memory_param(name));
        } else {
            ++frozen;
        }
    });
    CHECK(trainable == 1 + 3 * 2);  // mem_embed + wm_{q,k,v} per layer
    CHECK(frozen > 0);
}
