#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>

#include "memseeker/tasks.hpp"

using namespace memseeker;

namespace {
const Vocabulary vocab = Vocabulary::standard();
}

TEST_CASE("needle boundary depths") {
    TaskSample low = gen_needle(vocab, 1, 64, 0.0);
    CHECK(low.clue_ts == std::vector<double>{0.0});
    CHECK(vocab.is_key(low.frame_tokens(0)[0]));
    CHECK(vocab.is_value(low.frame_tokens(0)[1]));

    TaskSample high = gen_needle(vocab, 2, 512, 1.0);
    CHECK(high.clue_ts == std::vector<double>{511.0});
    CHECK(vocab.is_key(high.frame_tokens(511)[0]));

    TaskSample mid = gen_needle(vocab, 3, 101, 0.5);
    CHECK(mid.clue_ts == std::vector<double>{50.0});

    CHECK_THROWS_AS(gen_needle(vocab, 1, 0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(gen_needle(vocab, 1, 8, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(gen_needle(vocab, 1, 8, 0.5, 1), std::invalid_argument);
}

TEST_CASE("needle question and answer reference the planted pair") {
    for (uint64_t seed = 0; seed < 30; ++seed) {
        TaskSample s = gen_needle(vocab, seed, 40, 0.37);
        CHECK(s.question.size() == 2);
        CHECK(s.question[0] == vocab.query);
        CHECK(s.answer.size() == 1);
        CHECK(oracle_solve(vocab, s) == s.answer);
        // needle pair appears exactly once: no other frame starts with a key
        int hits = 0;
        for (int f = 0; f < s.n_frames; ++f)
            if (vocab.is_key(s.frame_tokens(f)[0])) ++hits;
        CHECK(hits == 1);
    }
}

TEST_CASE("same seed gives identical samples") {
    TaskSample a = gen_needle(vocab, 99, 128, 0.25);
    TaskSample b = gen_needle(vocab, 99, 128, 0.25);
    CHECK(a.frames == b.frames);
    CHECK(a.question == b.question);
    CHECK(a.answer == b.answer);

    TaskSample c = gen_multiclue(vocab, 5, 64, 3, 2);
    TaskSample d = gen_multiclue(vocab, 5, 64, 3, 2);
    CHECK(c.frames == d.frames);
    CHECK(c.answer == d.answer);
}

TEST_CASE("needle depth grid lattice coverage") {
    const std::vector<int> lengths{64, 128, 256};
    const std::vector<double> depths{0.0, 0.25, 0.5, 0.75, 1.0};
    for (int T : lengths)
        for (double depth : depths) {
            TaskSample s = gen_needle(vocab, 7, T, depth);
            CHECK(s.clue_ts[0] == std::floor(depth * (T - 1)));
        }
}

TEST_CASE("multiclue answers are the last-written value") {
    for (uint64_t seed = 0; seed < 40; ++seed) {
        TaskSample s = gen_multiclue(vocab, seed, 96, 3, 2);
        REQUIRE(s.clue_ts.size() == 3);
        const int entity = s.question[1];
        CHECK(vocab.is_entity(entity));
        // last clue frame holds the answer value
        const int last_frame = static_cast<int>(s.clue_ts.back());
        CHECK(s.frame_tokens(last_frame)[1] == s.answer[0]);
        CHECK(oracle_solve(vocab, s) == s.answer);
        // timestamps sorted and distinct
        for (size_t i = 1; i < s.clue_ts.size(); ++i) CHECK(s.clue_ts[i] > s.clue_ts[i - 1]);
    }
}

TEST_CASE("distractor chains never use the target entity") {
    for (uint64_t seed = 0; seed < 40; ++seed) {
        TaskSample s = gen_multiclue(vocab, seed, 80, 2, 3);
        const int entity = s.question[1];
        std::set<int> clue_frames(s.clue_ts.begin(), s.clue_ts.end());
        for (int f = 0; f < s.n_frames; ++f) {
            auto toks = s.frame_tokens(f);
            if (vocab.is_entity(toks[0]) && !clue_frames.count(f)) CHECK(toks[0] != entity);
        }
    }
}

TEST_CASE("grounded answers carry the timestamp list") {
    TaskSample s = gen_multiclue(vocab, 11, 64, 2, 1, /*grounded=*/true);
    CHECK(s.kind == TaskKind::multiclue_grounded);
    REQUIRE(s.answer.size() > 1);
    CHECK(vocab.is_value(s.answer[0]));
    CHECK(s.answer[1] == vocab.sep);
    CHECK(oracle_solve(vocab, s) == s.answer);
}

TEST_CASE("multiclue preconditions") {
    CHECK_THROWS_AS(gen_multiclue(vocab, 1, 64, 1, 2), std::invalid_argument);
    CHECK_THROWS_AS(gen_multiclue(vocab, 1, 3, 2, 2), std::invalid_argument);
    CHECK_THROWS_AS(gen_multiclue(vocab, 1, 64, 2, 8), std::invalid_argument);
}

TEST_CASE("summary emits marked tokens in stream order") {
    TaskSample s = gen_summary(vocab, 21, 48, 4);
    REQUIRE(s.answer.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(vocab.is_value(s.answer[i]));
        CHECK(s.frame_tokens(static_cast<int>(s.clue_ts[i]))[0] == s.answer[i]);
    }
    CHECK(oracle_solve(vocab, s) == s.answer);
}

TEST_CASE("oracle agrees with stored answers on generated batches") {
    DatasetSpec spec;
    spec.kind = TaskKind::multiclue;
    spec.train_size = 60;
    spec.val_size = 0;
    spec.test_size = 0;
    spec.t_min = 16;
    spec.t_max = 96;
    spec.seed = 500;
    Splits splits = gen_split(vocab, spec);
    for (const auto& s : splits.train) REQUIRE(oracle_solve(vocab, s) == s.answer);

    spec.kind = TaskKind::needle;
    for (const auto& s : gen_split(vocab, spec).train) REQUIRE(oracle_solve(vocab, s) == s.answer);
}

TEST_CASE("gen_split sizes, determinism and disjoint seed ranges") {
    DatasetSpec spec;
    spec.kind = TaskKind::needle;
    spec.train_size = 50;
    spec.val_size = 20;
    spec.test_size = 10;
    spec.seed = 100;
    Splits a = gen_split(vocab, spec);
    CHECK(a.train.size() == 50);
    CHECK(a.val.size() == 20);
    CHECK(a.test.size() == 10);

    Splits b = gen_split(vocab, spec);
    for (size_t i = 0; i < a.train.size(); ++i) REQUIRE(a.train[i].frames == b.train[i].frames);

    std::set<uint64_t> seeds;
    for (const auto* split : {&a.train, &a.val, &a.test})
        for (const auto& s : *split) CHECK(seeds.insert(s.seed).second);

    DatasetSpec overlap = spec;
    overlap.val_seed = spec.seed + 10;  // collides with the train range
    CHECK_THROWS_AS(overlap.validate(), std::invalid_argument);
}

TEST_CASE("text round trip") {
    DatasetSpec spec;
    spec.kind = TaskKind::multiclue_grounded;
    spec.train_size = 12;
    spec.val_size = 0;
    spec.test_size = 0;
    spec.t_min = 16;
    spec.t_max = 48;
    spec.seed = 77;
    auto samples = gen_split(vocab, spec).train;
    const std::string path = "/tmp/memseeker_samples_test.txt";
    save_samples_text(path, samples);
    auto loaded = load_samples_text(path);
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].kind == samples[i].kind);
        CHECK(loaded[i].seed == samples[i].seed);
        CHECK(loaded[i].n_frames == samples[i].n_frames);
        CHECK(loaded[i].tokens_per_frame == samples[i].tokens_per_frame);
        CHECK(loaded[i].frames == samples[i].frames);
        CHECK(loaded[i].question == samples[i].question);
        CHECK(loaded[i].answer == samples[i].answer);
        CHECK(loaded[i].clue_ts == samples[i].clue_ts);
    }
    std::remove(path.c_str());
}

TEST_CASE("binary round trip") {
    DatasetSpec spec;
    spec.kind = TaskKind::needle;
    spec.train_size = 8;
    spec.val_size = 0;
    spec.test_size = 0;
    spec.t_min = 8;
    spec.t_max = 32;
    spec.seed = 3;
    auto samples = gen_split(vocab, spec).train;
    const std::string path = "/tmp/memseeker_samples_test.bin";
    save_samples_bin(path, samples);
    auto loaded = load_samples_bin(path);
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].frames == samples[i].frames);
        CHECK(loaded[i].clue_ts == samples[i].clue_ts);
        CHECK(loaded[i].depth == samples[i].depth);
    }
    std::remove(path.c_str());
}
