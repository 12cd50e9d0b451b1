#include "memseeker/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "memseeker/container.hpp"
#include "memseeker/rng.hpp"

namespace memseeker {

std::string task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::summary: return "summary";
        case TaskKind::needle: return "needle";
        case TaskKind::multiclue: return "multiclue";
        case TaskKind::multiclue_grounded: return "multiclue_grounded";
    }
    throw std::logic_error("unknown task kind");
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "summary") return TaskKind::summary;
    if (name == "needle") return TaskKind::needle;
    if (name == "multiclue") return TaskKind::multiclue;
    if (name == "multiclue_grounded") return TaskKind::multiclue_grounded;
    throw std::invalid_argument("unknown task kind: " + name);
}

namespace {

void fill_filler_frame(const Vocabulary& vocab, CounterRng& rng, std::vector<int>& frames, int tpf) {
    for (int t = 0; t < tpf; ++t) frames.push_back(vocab.filler_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_fillers)))));
}

// Distinct frame indices in [0, T).
std::vector<int> distinct_frames(CounterRng& rng, int count, int total, const std::vector<int>& taken) {
    std::vector<int> used = taken;
    std::vector<int> out;
    int attempts = 0;
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > 64 * count + 1024) throw std::runtime_error("gen: infeasible clue placement");
        int f = static_cast<int>(rng.below(static_cast<uint64_t>(total)));
        if (std::find(used.begin(), used.end(), f) != used.end()) continue;
        used.push_back(f);
        out.push_back(f);
    }
    return out;
}

std::vector<int> grounded_answer(const Vocabulary& vocab, int value_token, const std::vector<double>& ts) {
    std::vector<int> ans{value_token};
    for (double t : ts) {
        ans.push_back(vocab.sep);
        for (int d : vocab.encode_number(static_cast<long long>(t))) ans.push_back(d);
    }
    return ans;
}

}  // namespace

TaskSample gen_needle(const Vocabulary& vocab, uint64_t seed, int haystack_len, double depth_fraction,
                      int tokens_per_frame) {
    if (haystack_len < 1) throw std::invalid_argument("gen_needle: haystack_len must be >= 1");
    if (depth_fraction < 0.0 || depth_fraction > 1.0) throw std::invalid_argument("gen_needle: depth must be in [0,1]");
    if (tokens_per_frame < 2) throw std::invalid_argument("gen_needle: needs tokens_per_frame >= 2 for the key/value pair");

    CounterRng rng = CounterRng(seed).child(0x6e656564);  // independent stream per task kind
    const int needle_at = static_cast<int>(std::floor(depth_fraction * static_cast<double>(haystack_len - 1)));
    const int key = vocab.key_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_keys))));
    const int value = vocab.value_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_values))));

    TaskSample s;
    s.kind = TaskKind::needle;
    s.seed = seed;
    s.tokens_per_frame = tokens_per_frame;
    s.n_frames = haystack_len;
    s.depth = depth_fraction;
    s.frames.reserve(static_cast<size_t>(haystack_len) * tokens_per_frame);
    for (int f = 0; f < haystack_len; ++f) {
        if (f == needle_at) {
            s.frames.push_back(key);
            s.frames.push_back(value);
            for (int t = 2; t < tokens_per_frame; ++t)
                s.frames.push_back(vocab.filler_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_fillers)))));
        } else {
            fill_filler_frame(vocab, rng, s.frames, tokens_per_frame);
        }
    }
    s.question = {vocab.query, key};
    s.answer = {value};
    s.clue_ts = {static_cast<double>(needle_at)};
    return s;
}

TaskSample gen_multiclue(const Vocabulary& vocab, uint64_t seed, int haystack_len, int n_clues, int n_distractors,
                         bool grounded, int tokens_per_frame) {
    if (n_clues < 2) throw std::invalid_argument("gen_multiclue: n_clues must be >= 2");
    if (haystack_len < n_clues + n_distractors) throw std::invalid_argument("gen_multiclue: haystack too short");
    if (n_distractors >= vocab.n_entities) throw std::invalid_argument("gen_multiclue: not enough entity ids");
    if (tokens_per_frame < 2) throw std::invalid_argument("gen_multiclue: needs tokens_per_frame >= 2");

    CounterRng rng = CounterRng(seed).child(0x636c7565);
    const int target_entity = vocab.entity_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_entities))));

    // distractor chains use distinct entities other than the target
    std::vector<int> others;
    for (int e = 0; e < vocab.n_entities; ++e)
        if (vocab.entity_token(e) != target_entity) others.push_back(vocab.entity_token(e));
    for (size_t i = others.size(); i > 1; --i) std::swap(others[i - 1], others[rng.below(i)]);

    struct Event {
        int frame, entity, value;
    };
    std::vector<Event> events;
    std::vector<int> taken;

    std::vector<int> target_frames = distinct_frames(rng, n_clues, haystack_len, taken);
    taken.insert(taken.end(), target_frames.begin(), target_frames.end());
    std::sort(target_frames.begin(), target_frames.end());
    // distinct values along the chain, so dropping the last event always
    // changes the final value
    std::vector<int> vals;
    while (static_cast<int>(vals.size()) < n_clues) {
        int v = vocab.value_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_values))));
        if (std::find(vals.begin(), vals.end(), v) == vals.end()) vals.push_back(v);
    }
    for (int i = 0; i < n_clues; ++i) events.push_back({target_frames[static_cast<size_t>(i)], target_entity, vals[static_cast<size_t>(i)]});

    for (int dchain = 0; dchain < n_distractors; ++dchain) {
        const int entity = others[static_cast<size_t>(dchain)];
        const int count = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(n_clues)));
        if (haystack_len - static_cast<int>(taken.size()) < count) break;  // keep placement feasible
        std::vector<int> fr = distinct_frames(rng, count, haystack_len, taken);
        taken.insert(taken.end(), fr.begin(), fr.end());
        for (int f : fr)
            events.push_back({f, entity, vocab.value_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_values))))});
    }

    TaskSample s;
    s.kind = grounded ? TaskKind::multiclue_grounded : TaskKind::multiclue;
    s.seed = seed;
    s.tokens_per_frame = tokens_per_frame;
    s.n_frames = haystack_len;
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.frame < b.frame; });
    size_t next_event = 0;
    for (int f = 0; f < haystack_len; ++f) {
        if (next_event < events.size() && events[next_event].frame == f) {
            s.frames.push_back(events[next_event].entity);
            s.frames.push_back(events[next_event].value);
            for (int t = 2; t < tokens_per_frame; ++t)
                s.frames.push_back(vocab.filler_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_fillers)))));
            ++next_event;
        } else {
            fill_filler_frame(vocab, rng, s.frames, tokens_per_frame);
        }
    }
    s.question = {vocab.query, target_entity};
    for (int f : target_frames) s.clue_ts.push_back(static_cast<double>(f));
    const int last_value = vals.back();
    s.answer = grounded ? grounded_answer(vocab, last_value, s.clue_ts) : std::vector<int>{last_value};

    // generator self-check: the clue-frame oracle must reproduce the stored
    // answer, and removing any single target clue must change the grounded
    // answer (value or timestamp list)
    if (oracle_solve(vocab, s) != s.answer) throw std::logic_error("gen_multiclue: oracle disagrees with stored answer");
    const std::vector<int> full = grounded_answer(vocab, last_value, s.clue_ts);
    for (size_t drop = 0; drop < s.clue_ts.size(); ++drop) {
        std::vector<double> rest;
        for (size_t i = 0; i < s.clue_ts.size(); ++i)
            if (i != drop) rest.push_back(s.clue_ts[i]);
        const int rest_last = vals[static_cast<size_t>(
            std::find(target_frames.begin(), target_frames.end(), static_cast<int>(rest.back())) - target_frames.begin())];
        if (grounded_answer(vocab, rest_last, rest) == full)
            throw std::logic_error("gen_multiclue: removing a clue left the answer unchanged");
    }
    return s;
}

TaskSample gen_summary(const Vocabulary& vocab, uint64_t seed, int haystack_len, int n_marks, int tokens_per_frame) {
    if (haystack_len < n_marks || n_marks < 1) throw std::invalid_argument("gen_summary: bad mark count");
    CounterRng rng = CounterRng(seed).child(0x73756d);
    TaskSample s;
    s.kind = TaskKind::summary;
    s.seed = seed;
    s.tokens_per_frame = tokens_per_frame;
    s.n_frames = haystack_len;
    std::vector<int> mark_frames = distinct_frames(rng, n_marks, haystack_len, {});
    std::sort(mark_frames.begin(), mark_frames.end());
    size_t next = 0;
    for (int f = 0; f < haystack_len; ++f) {
        if (next < mark_frames.size() && mark_frames[next] == f) {
            const int v = vocab.value_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_values))));
            s.frames.push_back(v);
            for (int t = 1; t < tokens_per_frame; ++t)
                s.frames.push_back(vocab.filler_token(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.n_fillers)))));
            s.answer.push_back(v);
            s.clue_ts.push_back(static_cast<double>(f));
            ++next;
        } else {
            fill_filler_frame(vocab, rng, s.frames, tokens_per_frame);
        }
    }
    s.question = {vocab.query, vocab.sep};
    return s;
}

std::vector<int> oracle_solve(const Vocabulary& vocab, const TaskSample& sample) {
    switch (sample.kind) {
        case TaskKind::needle: {
            const int f = static_cast<int>(sample.clue_ts.at(0));
            auto toks = sample.frame_tokens(f);
            if (toks.size() < 2 || toks[0] != sample.question.at(1)) throw std::logic_error("oracle: needle frame mismatch");
            return {toks[1]};
        }
        case TaskKind::multiclue:
        case TaskKind::multiclue_grounded: {
            const int entity = sample.question.at(1);
            int last_value = -1;
            for (double t : sample.clue_ts) {  // timestamps are sorted ascending
                auto toks = sample.frame_tokens(static_cast<int>(t));
                if (toks.size() < 2 || toks[0] != entity) throw std::logic_error("oracle: clue frame entity mismatch");
                last_value = toks[1];
            }
            if (sample.kind == TaskKind::multiclue) return {last_value};
            return grounded_answer(vocab, last_value, sample.clue_ts);
        }
        case TaskKind::summary: {
            std::vector<int> out;
            for (double t : sample.clue_ts) out.push_back(sample.frame_tokens(static_cast<int>(t)).at(0));
            return out;
        }
    }
    throw std::logic_error("oracle: unknown kind");
}

int DatasetSpec::effective_tpf() const {
    if (tokens_per_frame > 0) return tokens_per_frame;
    return kind == TaskKind::summary ? 1 : 2;
}

void DatasetSpec::validate() const {
    if (train_size < 0 || val_size < 0 || test_size < 0) throw std::invalid_argument("dataset: negative split size");
    if (t_min < 1 || t_max < t_min) throw std::invalid_argument("dataset: bad T range");
    struct Range {
        uint64_t lo, hi;
        const char* name;
    };
    const Range ranges[3] = {{seed, seed + static_cast<uint64_t>(train_size), "train"},
                             {effective_val_seed(), effective_val_seed() + static_cast<uint64_t>(val_size), "val"},
                             {effective_test_seed(), effective_test_seed() + static_cast<uint64_t>(test_size), "test"}};
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            const auto& a = ranges[i];
            const auto& b = ranges[j];
            if (a.lo < b.hi && b.lo < a.hi && a.hi > a.lo && b.hi > b.lo)
                throw std::invalid_argument(std::string("dataset: overlapping seed ranges for ") + a.name + " and " + b.name);
        }
}

TaskSample gen_sample(const Vocabulary& vocab, const DatasetSpec& spec, uint64_t sample_seed) {
    CounterRng meta = CounterRng(sample_seed).child(0x6d657461);
    const int T = static_cast<int>(meta.range(spec.t_min, spec.t_max));
    switch (spec.kind) {
        case TaskKind::needle: return gen_needle(vocab, sample_seed, T, meta.uniform(), spec.effective_tpf());
        case TaskKind::multiclue:
            return gen_multiclue(vocab, sample_seed, T, spec.n_clues, spec.n_distractors, false, spec.effective_tpf());
        case TaskKind::multiclue_grounded:
            return gen_multiclue(vocab, sample_seed, T, spec.n_clues, spec.n_distractors, true, spec.effective_tpf());
        case TaskKind::summary: return gen_summary(vocab, sample_seed, T, spec.n_clues, spec.effective_tpf());
    }
    throw std::logic_error("gen_sample: unknown kind");
}

Splits gen_split(const Vocabulary& vocab, const DatasetSpec& spec) {
    spec.validate();
    Splits out;
    auto fill = [&](std::vector<TaskSample>& dst, uint64_t base, int count) {
        dst.reserve(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i) dst.push_back(gen_sample(vocab, spec, base + static_cast<uint64_t>(i)));
    };
    fill(out.train, spec.seed, spec.train_size);
    fill(out.val, spec.effective_val_seed(), spec.val_size);
    fill(out.test, spec.effective_test_seed(), spec.test_size);
    return out;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    int v;
    while (in >> v) out.push_back(v);
    return out;
}

}  // namespace

void save_samples_text(const std::string& path, const std::vector<TaskSample>& samples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& s : samples) {
        std::string ts;
        for (size_t i = 0; i < s.clue_ts.size(); ++i) {
            if (i) ts += ' ';
            ts += std::to_string(static_cast<long long>(s.clue_ts[i]));
        }
        out << task_kind_name(s.kind) << ',' << s.seed << ',' << s.n_frames << ',' << join_ints(s.frames) << ','
            << join_ints(s.question) << ',' << join_ints(s.answer) << ',' << ts << '\n';
    }
}

std::vector<TaskSample> load_samples_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<TaskSample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        size_t start = 0;
        for (int c = 0; c < 6; ++c) {
            size_t comma = line.find(',', start);
            if (comma == std::string::npos) throw std::runtime_error("sample line with too few columns");
            cols.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        cols.push_back(line.substr(start));
        TaskSample s;
        s.kind = task_kind_from_name(cols[0]);
        s.seed = std::stoull(cols[1]);
        s.n_frames = std::stoi(cols[2]);
        s.frames = split_ints(cols[3]);
        s.question = split_ints(cols[4]);
        s.answer = split_ints(cols[5]);
        for (int v : split_ints(cols[6])) s.clue_ts.push_back(static_cast<double>(v));
        if (s.n_frames <= 0 || s.frames.size() % static_cast<size_t>(s.n_frames) != 0)
            throw std::runtime_error("sample frame list not divisible by frame count");
        s.tokens_per_frame = static_cast<int>(s.frames.size()) / s.n_frames;
        if (s.kind == TaskKind::needle && s.n_frames > 1 && !s.clue_ts.empty())
            s.depth = s.clue_ts[0] / static_cast<double>(s.n_frames - 1);
        out.push_back(std::move(s));
    }
    return out;
}

void save_samples_bin(const std::string& path, const std::vector<TaskSample>& samples) {
    ByteWriter w;
    w.u64(samples.size());
    for (const auto& s : samples) {
        w.str_lp(task_kind_name(s.kind));
        w.u64(s.seed);
        w.u32(static_cast<uint32_t>(s.tokens_per_frame));
        w.u32(static_cast<uint32_t>(s.n_frames));
        auto ints = [&w](const std::vector<int>& v) {
            w.u64(v.size());
            for (int x : v) w.u32(static_cast<uint32_t>(x));
        };
        ints(s.frames);
        ints(s.question);
        ints(s.answer);
        w.u64(s.clue_ts.size());
        for (double t : s.clue_ts) w.f64(t);
        w.f64(s.depth);
    }
    Section sec{kSecSamples, w.take()};
    write_container(path, std::span<const Section>(&sec, 1));
}

std::vector<TaskSample> load_samples_bin(const std::string& path) {
    auto sections = read_container(path);
    ByteReader r(find_section(sections, kSecSamples).payload);
    const uint64_t count = r.u64();
    std::vector<TaskSample> out;
    out.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        TaskSample s;
        s.kind = task_kind_from_name(r.str_lp());
        s.seed = r.u64();
        s.tokens_per_frame = static_cast<int>(r.u32());
        s.n_frames = static_cast<int>(r.u32());
        auto ints = [&r]() {
            std::vector<int> v(r.u64());
            for (auto& x : v) x = static_cast<int>(r.u32());
            return v;
        };
        s.frames = ints();
        s.question = ints();
        s.answer = ints();
        s.clue_ts.resize(r.u64());
        for (auto& t : s.clue_ts) t = r.f64();
        s.depth = r.f64();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace memseeker
