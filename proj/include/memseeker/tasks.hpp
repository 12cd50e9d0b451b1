#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memseeker/vocab.hpp"

namespace memseeker {

enum class TaskKind { summary, needle, multiclue, multiclue_grounded };

std::string task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

// One synthetic episode. Frames are stored flattened: tokens_per_frame tokens
// per frame, frame f occupying indices [f*tpf, (f+1)*tpf). Clue timestamps
// are frame indices; at 1 fps seconds and indices coincide.
struct TaskSample {
    TaskKind kind = TaskKind::needle;
    uint64_t seed = 0;
    int tokens_per_frame = 1;
    int n_frames = 0;
    std::vector<int> frames;
    std::vector<int> question;
    std::vector<int> answer;
    std::vector<double> clue_ts;
    double depth = -1.0;  // needle meta; -1 when not applicable

    std::vector<int> frame_tokens(int f) const {
        return std::vector<int>(frames.begin() + static_cast<long>(f) * tokens_per_frame,
                                frames.begin() + static_cast<long>(f + 1) * tokens_per_frame);
    }
};

// One key/value pair planted at floor(depth * (T-1)); the pair occupies a
// single frame, so the task requires tokens_per_frame >= 2.
TaskSample gen_needle(const Vocabulary& vocab, uint64_t seed, int haystack_len, double depth_fraction,
                      int tokens_per_frame = 2);

// A chain of (entity, value) overwrite events for one target entity, plus
// distractor chains for other entities. The question names the target entity;
// the answer is its last-written value, with the sorted clue timestamps
// appended when grounded.
TaskSample gen_multiclue(const Vocabulary& vocab, uint64_t seed, int haystack_len, int n_clues, int n_distractors,
                         bool grounded = false, int tokens_per_frame = 2);

// Warmup-style whole-stream summary: emit the marked (value-alphabet) tokens
// in stream order.
TaskSample gen_summary(const Vocabulary& vocab, uint64_t seed, int haystack_len, int n_marks, int tokens_per_frame = 1);

// Brute-force symbolic solver that reads only the clue frames.
std::vector<int> oracle_solve(const Vocabulary& vocab, const TaskSample& sample);

struct DatasetSpec {
    TaskKind kind = TaskKind::needle;
    int train_size = 1000;
    int val_size = 100;
    int test_size = 100;
    int t_min = 64;
    int t_max = 512;
    uint64_t seed = 1;
    uint64_t val_seed = 0;   // 0: auto (seed + train_size)
    uint64_t test_seed = 0;  // 0: auto (val_seed + val_size)
    int n_clues = 2;
    int n_distractors = 2;
    int tokens_per_frame = 0;  // 0: task default

    int effective_tpf() const;
    uint64_t effective_val_seed() const { return val_seed ? val_seed : seed + static_cast<uint64_t>(train_size); }
    uint64_t effective_test_seed() const {
        return test_seed ? test_seed : effective_val_seed() + static_cast<uint64_t>(val_size);
    }
    void validate() const;  // throws on overlapping per-split seed ranges
};

struct Splits {
    std::vector<TaskSample> train, val, test;
};

TaskSample gen_sample(const Vocabulary& vocab, const DatasetSpec& spec, uint64_t sample_seed);
Splits gen_split(const Vocabulary& vocab, const DatasetSpec& spec);

// Line format: kind,seed,T,frames,question,answer,clue_ts
// (integer lists space-separated inside their comma-separated column).
void save_samples_text(const std::string& path, const std::vector<TaskSample>& samples);
std::vector<TaskSample> load_samples_text(const std::string& path);

void save_samples_bin(const std::string& path, const std::vector<TaskSample>& samples);
std::vector<TaskSample> load_samples_bin(const std::string& path);

}  // namespace memseeker
