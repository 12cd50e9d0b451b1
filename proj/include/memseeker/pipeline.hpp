#pragma once

#include <chrono>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memseeker/container.hpp"
#include "memseeker/membank.hpp"
#include "memseeker/model.hpp"
#include "memseeker/tasks.hpp"
#include "memseeker/vocab.hpp"

namespace memseeker {

// One planned segment: its video tokens, the re-inserted question, the
// memory-token count, and the <split> that follows the segment's memory
// tokens in the organized sequence. start_pos is the global position of the
// first video token.
struct Segment {
    std::vector<int> video;
    std::vector<int> question;
    int mem_count = 0;
    int split_token = 0;
    int start_pos = 0;
};

struct FinalBlock {
    int split_token = 0;
    std::vector<int> question;
    int answer_start_pos = 0;
};

// The organized sequence {V_1,Q,M_1},<split>,...,{V_S,Q,M_S},<split>,Q laid
// out with exact cumulative positions. A segment's trailing <split> sits
// after its memory tokens; when processing, that split is fed as the leading
// regular token of the following block so that every block's rows keep
// consecutive positions with memory rows last.
struct SegmentedLayout {
    std::vector<Segment> segments;
    FinalBlock final_block;
    int organized_len = 0;  // positions consumed up to and including the final question

    int total_mem_tokens() const {
        int p = 0;
        for (const auto& s : segments) p += s.mem_count;
        return p;
    }
};

inline int mem_tokens_for(int segment_tokens, int alpha) {
    return std::max(1, (segment_tokens + alpha - 1) / alpha);
}

inline SegmentedLayout plan_layout(std::span<const int> frame_tokens, std::span<const int> question,
                                   const ModelConfig& cfg, int split_token) {
    if (frame_tokens.empty()) throw std::invalid_argument("plan_layout: empty frame stream");
    SegmentedLayout layout;
    const int total = static_cast<int>(frame_tokens.size());
    const int q = static_cast<int>(question.size());
    int pos = 0;
    for (int off = 0; off < total; off += cfg.seg_len) {
        Segment seg;
        const int n = std::min(cfg.seg_len, total - off);
        seg.video.assign(frame_tokens.begin() + off, frame_tokens.begin() + off + n);
        seg.question.assign(question.begin(), question.end());
        seg.mem_count = mem_tokens_for(n, cfg.alpha);
        if (seg.mem_count > cfg.k_max)
            throw std::invalid_argument("plan_layout: segment needs " + std::to_string(seg.mem_count) +
                                        " memory tokens, capacity is " + std::to_string(cfg.k_max));
        seg.split_token = split_token;
        seg.start_pos = pos;
        pos += n + q + seg.mem_count + 1;  // video, question, memory, split
        layout.segments.push_back(std::move(seg));
    }
    layout.final_block.split_token = split_token;
    layout.final_block.question.assign(question.begin(), question.end());
    layout.final_block.answer_start_pos = pos + q;
    layout.organized_len = pos + q;
    return layout;
}

// Eq-ordered token/marker stream; memory slots appear as `mem_marker`.
inline std::vector<int> organized_sequence(const SegmentedLayout& layout, int mem_marker = -1) {
    std::vector<int> out;
    for (const auto& seg : layout.segments) {
        out.insert(out.end(), seg.video.begin(), seg.video.end());
        out.insert(out.end(), seg.question.begin(), seg.question.end());
        for (int i = 0; i < seg.mem_count; ++i) out.push_back(mem_marker);
        out.push_back(seg.split_token);
    }
    out.insert(out.end(), layout.final_block.question.begin(), layout.final_block.question.end());
    return out;
}

// Regular tokens of processing block i: the previous segment's trailing
// split (for i > 0) followed by this segment's video and question.
inline std::vector<int> block_tokens(const SegmentedLayout& layout, int i) {
    const Segment& seg = layout.segments.at(static_cast<size_t>(i));
    std::vector<int> toks;
    if (i > 0) toks.push_back(layout.segments[static_cast<size_t>(i - 1)].split_token);
    toks.insert(toks.end(), seg.video.begin(), seg.video.end());
    toks.insert(toks.end(), seg.question.begin(), seg.question.end());
    return toks;
}

inline int block_start(const SegmentedLayout& layout, int i) {
    const Segment& seg = layout.segments.at(static_cast<size_t>(i));
    return i > 0 ? seg.start_pos - 1 : seg.start_pos;
}

// Global positions occupied by block i's memory tokens.
inline std::vector<int> block_mem_positions(const SegmentedLayout& layout, int i) {
    const Segment& seg = layout.segments.at(static_cast<size_t>(i));
    std::vector<int> pos(static_cast<size_t>(seg.mem_count));
    const int base = seg.start_pos + static_cast<int>(seg.video.size()) + static_cast<int>(seg.question.size());
    for (int j = 0; j < seg.mem_count; ++j) pos[static_cast<size_t>(j)] = base + j;
    return pos;
}

template <class S>
void process_block_into_bank(ModelParams<S>& params, MemoryBank<S>& bank, const SegmentedLayout& layout, int i,
                             Tape<S>* tape = nullptr, RunStats* stats = nullptr, bool detach = false) {
    const auto toks = block_tokens(layout, i);
    BlockOut<S> out = forward_block(params, bank, toks, layout.segments[static_cast<size_t>(i)].mem_count,
                                    block_start(layout, i), tape, stats);
    if (detach)
        for (auto& kv : out.mem_kv) kv = {kv.k.detached(), kv.v.detached()};
    const auto positions = block_mem_positions(layout, i);
    bank.append(out.mem_kv, positions);
}

// One recurrence step: forward the block, append its memory KV to the bank,
// discard the logits. The bank must hold exactly the preceding segments.
template <class S>
void process_segment(ModelParams<S>& params, MemoryBank<S>& bank, const SegmentedLayout& layout, int i,
                     Tape<S>* tape = nullptr, RunStats* stats = nullptr, bool detach = false) {
    if (bank.segments() != i) throw std::runtime_error("process_segment: bank history inconsistent with block index");
    int expected = 0;
    for (int j = 0; j < i; ++j) expected += layout.segments[static_cast<size_t>(j)].mem_count;
    if (bank.entries() != expected) throw std::runtime_error("process_segment: bank entry count inconsistent");
    process_block_into_bank(params, bank, layout, i, tape, stats, detach);
}

// Greedy decoding from the bank alone: the context starts as <split>,Q at
// their organized positions; generated tokens extend a transient regular
// cache. No video tokens are reachable from here.
template <class S>
std::vector<int> decode_answer(ModelParams<S>& params, const MemoryBank<S>& bank, std::span<const int> question,
                               int max_new, int split_token, int eos_token, RunStats* stats = nullptr) {
    if (bank.entries() < 1) throw std::runtime_error("decode_answer: empty memory bank");
    if (max_new <= 0) return {};

    const int split_pos = bank.positions().back() + 1;
    std::vector<int> context{split_token};
    context.insert(context.end(), question.begin(), question.end());

    MemoryBank<S> transient = bank;  // shares immutable entries; appends stay local
    std::vector<int> generated;

    auto append_reg = [&transient](const BlockOut<S>& out, int start, int rows) {
        std::vector<int> pos(static_cast<size_t>(rows));
        for (int i = 0; i < rows; ++i) pos[static_cast<size_t>(i)] = start + i;
        transient.append(out.reg_kv, pos);
    };
    auto argmax_last = [](const Tensor<S>& logits) {
        const int row = logits.rows() - 1;
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits.at(row, j) > logits.at(row, best)) best = j;
        return best;
    };

    BlockOut<S> out = forward_block(params, transient, context, 0, split_pos, nullptr, stats, /*want_reg_kv=*/true);
    append_reg(out, split_pos, static_cast<int>(context.size()));
    int next = argmax_last(out.logits);
    int pos = split_pos + static_cast<int>(context.size());
    while (static_cast<int>(generated.size()) < max_new) {
        if (next == eos_token) break;
        generated.push_back(next);
        if (static_cast<int>(generated.size()) == max_new) break;
        std::vector<int> one{next};
        BlockOut<S> step = forward_block(params, transient, one, 0, pos, nullptr, stats, /*want_reg_kv=*/true);
        append_reg(step, pos, 1);
        ++pos;
        next = argmax_last(step.logits);
    }
    return generated;
}

struct ProfileReport {
    long long peak_attention_width = 0;
    long long bank_entries = 0;
    long long peak_live_scalars = 0;
    double wall_ms = 0.0;
    int segments = 0;
};

struct EpisodeOptions {
    int max_new = 12;
    bool last_segment_only = false;  // history-disabled baseline
};

struct EpisodeResult {
    std::vector<int> answer;
    long long bank_entries = 0;
    ProfileReport profile;
};

// Exact key-list width of every attention call in an episode, from the
// layout alone.
inline long long predict_peak_attention_width(const SegmentedLayout& layout, int question_len, int max_new) {
    long long peak = 0;
    long long past = 0;
    for (size_t i = 0; i < layout.segments.size(); ++i) {
        const auto& seg = layout.segments[i];
        const long long rows = (i > 0 ? 1 : 0) + static_cast<long long>(seg.video.size()) + question_len + seg.mem_count;
        peak = std::max(peak, past + rows);
        past += seg.mem_count;
    }
    peak = std::max(peak, past + 1 + question_len);                       // final <split>,Q block
    if (max_new > 1) peak = std::max(peak, past + 1 + question_len + max_new - 1);  // last single-token decode step
    return peak;
}

template <class S>
EpisodeResult run_episode(ModelParams<S>& params, const TaskSample& sample, const Vocabulary& vocab,
                          const EpisodeOptions& opts = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    AllocStats::reset_peak();
    RunStats stats;

    SegmentedLayout layout = plan_layout(sample.frames, sample.question, params.cfg, vocab.split);
    MemoryBank<S> bank = bank_new<S>(params.cfg.n_layers);
    for (int i = 0; i < static_cast<int>(layout.segments.size()); ++i) {
        if (opts.last_segment_only) {
            bank.clear();
            process_block_into_bank(params, bank, layout, i, nullptr, &stats);
        } else {
            process_segment(params, bank, layout, i, nullptr, &stats);
        }
    }

    EpisodeResult result;
    result.answer = decode_answer(params, bank, sample.question, opts.max_new, vocab.split, vocab.eos, &stats);
    result.bank_entries = bank.entries();
    result.profile.peak_attention_width = stats.peak_attn_width;
    result.profile.bank_entries = bank.entries();
    result.profile.peak_live_scalars = AllocStats::peak_scalars();
    result.profile.segments = static_cast<int>(layout.segments.size());
    result.profile.wall_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---------------------------------------------------------------------------
// episode dump (debugging aid): layout + bank + answer in the container format

template <class S>
std::string serialize_bank(const MemoryBank<S>& bank) {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(bank.n_layers()));
    w.u8(sizeof(S) == 8 ? 1 : 0);
    const auto& off = bank.segment_offsets();
    w.u64(off.size());
    for (int o : off) w.u64(static_cast<uint64_t>(o));
    w.u64(bank.positions().size());
    for (int p : bank.positions()) w.u64(static_cast<uint64_t>(p));
    for (int l = 0; l < bank.n_layers(); ++l) {
        const auto& store = bank.layer(l);
        for (const auto* list : {&store.keys, &store.values}) {
            for (const auto& t : *list) {
                w.u64(static_cast<uint64_t>(t.rows()));
                w.u64(static_cast<uint64_t>(t.cols()));
                w.bytes(t.data(), t.size() * sizeof(S));
            }
        }
    }
    return w.take();
}

template <class S>
MemoryBank<S> deserialize_bank(const std::string& payload) {
    ByteReader r(payload);
    const int n_layers = static_cast<int>(r.u32());
    const uint8_t dtype = r.u8();
    if (dtype != (sizeof(S) == 8 ? 1 : 0)) throw ShapeError("bank dtype does not match build scalar");
    std::vector<int> offsets(r.u64());
    for (auto& o : offsets) o = static_cast<int>(r.u64());
    std::vector<int> positions(r.u64());
    for (auto& p : positions) p = static_cast<int>(r.u64());

    const int n_segs = static_cast<int>(offsets.size()) - 1;
    MemoryBank<S> bank(n_layers);
    std::vector<std::vector<KV<S>>> per_segment(static_cast<size_t>(n_segs), std::vector<KV<S>>(static_cast<size_t>(n_layers)));
    auto read_tensor = [&r]() {
        const int rows = static_cast<int>(r.u64());
        const int cols = static_cast<int>(r.u64());
        Tensor<S> t({rows, cols});
        const char* p = r.take(t.size() * sizeof(S));
        std::memcpy(t.data(), p, t.size() * sizeof(S));
        return t;
    };
    for (int l = 0; l < n_layers; ++l) {
        for (int s = 0; s < n_segs; ++s) per_segment[static_cast<size_t>(s)][static_cast<size_t>(l)].k = read_tensor();
        for (int s = 0; s < n_segs; ++s) per_segment[static_cast<size_t>(s)][static_cast<size_t>(l)].v = read_tensor();
    }
    for (int s = 0; s < n_segs; ++s) {
        const int lo = offsets[static_cast<size_t>(s)], hi = offsets[static_cast<size_t>(s) + 1];
        bank.append(per_segment[static_cast<size_t>(s)],
                    std::span<const int>(positions.data() + lo, static_cast<size_t>(hi - lo)));
    }
    return bank;
}

template <class S>
void write_episode_dump(const std::string& path, const SegmentedLayout& layout, const MemoryBank<S>& bank,
                        const std::vector<int>& answer) {
    ByteWriter lw;
    lw.u64(layout.segments.size());
    for (const auto& seg : layout.segments) {
        lw.u64(seg.video.size());
        for (int t : seg.video) lw.u32(static_cast<uint32_t>(t));
        lw.u64(seg.question.size());
        for (int t : seg.question) lw.u32(static_cast<uint32_t>(t));
        lw.u32(static_cast<uint32_t>(seg.mem_count));
        lw.u32(static_cast<uint32_t>(seg.split_token));
        lw.u32(static_cast<uint32_t>(seg.start_pos));
    }
    lw.u32(static_cast<uint32_t>(layout.final_block.split_token));
    lw.u64(layout.final_block.question.size());
    for (int t : layout.final_block.question) lw.u32(static_cast<uint32_t>(t));
    lw.u32(static_cast<uint32_t>(layout.final_block.answer_start_pos));
    lw.u32(static_cast<uint32_t>(layout.organized_len));

    ByteWriter aw;
    aw.u64(answer.size());
    for (int t : answer) aw.u32(static_cast<uint32_t>(t));

    std::vector<Section> sections{{kSecLayout, lw.take()}, {kSecBank, serialize_bank(bank)}, {kSecAnswer, aw.take()}};
    write_container(path, sections);
}

template <class S>
void read_episode_dump(const std::string& path, SegmentedLayout& layout, MemoryBank<S>& bank, std::vector<int>& answer) {
    auto sections = read_container(path);
    ByteReader lr(find_section(sections, kSecLayout).payload);
    layout = SegmentedLayout{};
    const uint64_t n_segs = lr.u64();
    for (uint64_t i = 0; i < n_segs; ++i) {
        Segment seg;
        seg.video.resize(lr.u64());
        for (auto& t : seg.video) t = static_cast<int>(lr.u32());
        seg.question.resize(lr.u64());
        for (auto& t : seg.question) t = static_cast<int>(lr.u32());
        seg.mem_count = static_cast<int>(lr.u32());
        seg.split_token = static_cast<int>(lr.u32());
        seg.start_pos = static_cast<int>(lr.u32());
        layout.segments.push_back(std::move(seg));
    }
    layout.final_block.split_token = static_cast<int>(lr.u32());
    layout.final_block.question.resize(lr.u64());
    for (auto& t : layout.final_block.question) t = static_cast<int>(lr.u32());
    layout.final_block.answer_start_pos = static_cast<int>(lr.u32());
    layout.organized_len = static_cast<int>(lr.u32());

    bank = deserialize_bank<S>(find_section(sections, kSecBank).payload);
    ByteReader ar(find_section(sections, kSecAnswer).payload);
    answer.resize(ar.u64());
    for (auto& t : answer) t = static_cast<int>(ar.u32());
}

}  // namespace memseeker
