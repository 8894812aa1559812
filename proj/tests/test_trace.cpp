#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "ccnn/trace.hpp"

using namespace ccnn;

namespace {

// Independent oracle: submaps as explicit position lists, subsampled by
// local row/column rank instead of offset arithmetic.
using PositionSet = std::vector<std::pair<int, int>>;

std::vector<PositionSet> oracle_step(const std::vector<PositionSet>& submaps,
                                     const std::vector<int>& assignment,
                                     const std::vector<Sampler>& samplers) {
    std::vector<PositionSet> children;
    for (size_t s = 0; s < submaps.size(); ++s) {
        const PositionSet& parent = submaps[s];
        const Sampler& sampler = samplers[static_cast<size_t>(assignment[s])];
        std::set<int> row_set, col_set;
        for (auto [r, c] : parent) {
            row_set.insert(r);
            col_set.insert(c);
        }
        std::map<int, int> row_rank, col_rank;
        int rank = 0;
        for (int r : row_set) row_rank[r] = rank++;
        rank = 0;
        for (int c : col_set) col_rank[c] = rank++;
        for (auto [dr, dc] : samples_of(sampler)) {
            PositionSet child;
            for (auto [r, c] : parent)
                if (row_rank[r] % sampler.k == dr && col_rank[c] % sampler.k == dc)
                    child.emplace_back(r, c);
            children.push_back(std::move(child));
        }
    }
    // canonical order: by topmost row, then leftmost column
    std::stable_sort(children.begin(), children.end(), [](const PositionSet& a, const PositionSet& b) {
        auto key = [](const PositionSet& p) {
            int top = 1 << 30, left = 1 << 30;
            for (auto [r, c] : p) {
                top = std::min(top, r);
                left = std::min(left, c);
            }
            return std::pair{top, left};
        };
        return key(a) < key(b);
    });
    return children;
}

PositionSet submap_positions(const SubmapMeta& meta, int height, int width) {
    PositionSet out;
    for (int i = 0; i < meta.height; ++i) {
        int r = meta.row_offset + i * meta.step_stride;
        if (r >= height) break;
        for (int j = 0; j < meta.width; ++j) {
            int c = meta.col_offset + j * meta.step_stride;
            if (c >= width) break;
            out.emplace_back(r, c);
        }
    }
    return out;
}

void check_against_oracle(int size, int k, const SamplerSequence& seq) {
    auto samplers = sampler_set(k);
    TraceState state = make_trace(size, size, k);
    std::vector<PositionSet> oracle_submaps = {PositionSet{}};
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) oracle_submaps[0].emplace_back(r, c);

    for (const auto& line : seq.lines) {
        state = subsample_step(state, line, samplers);
        oracle_submaps = oracle_step(oracle_submaps, line, samplers);
        REQUIRE(state.submaps.size() == oracle_submaps.size());
        for (size_t m = 0; m < state.submaps.size(); ++m) {
            PositionSet expected = oracle_submaps[m];
            std::sort(expected.begin(), expected.end());
            PositionSet actual = submap_positions(state.submaps[m], size, size);
            std::sort(actual.begin(), actual.end());
            REQUIRE(actual == expected);
        }
    }
}

}  // namespace

TEST_CASE("one checkered step on 16x16 yields two 8x8 submaps") {
    auto samplers = sampler_set(2);
    TraceState state = make_trace(16, 16, 2);
    state = subsample_step(state, std::vector<int>{0}, samplers);
    REQUIRE(state.submaps.size() == 2);
    CHECK(state.submaps[0] == SubmapMeta{0, 0, 2, 8, 8});
    CHECK(state.submaps[1] == SubmapMeta{1, 1, 2, 8, 8});
    CHECK(state.steps_applied == 1);
}

TEST_CASE("three all-checkered steps on 16x16 yield eight 2x2 submaps") {
    auto samplers = sampler_set(2);
    TraceState state = make_trace(16, 16, 2);
    for (int t = 0; t < 3; ++t)
        state = subsample_step(state, std::vector<int>(state.submaps.size(), 0), samplers);
    CHECK(state.submaps.size() == 8);
    for (const SubmapMeta& meta : state.submaps) {
        CHECK(meta.height == 2);
        CHECK(meta.width == 2);
        CHECK(meta.step_stride == 8);
    }
}

TEST_CASE("traditional sampler keeps the submap count and multiplies strides") {
    std::vector<Sampler> samplers = {traditional(2)};
    TraceState state = make_trace(16, 16, 2);
    state = subsample_step(state, std::vector<int>{0}, samplers);
    state = subsample_step(state, std::vector<int>{0}, samplers);
    REQUIRE(state.submaps.size() == 1);
    CHECK(state.submaps[0] == SubmapMeta{0, 0, 4, 4, 4});
}

TEST_CASE("subsample_step validates assignments") {
    auto samplers = sampler_set(2);
    TraceState state = make_trace(8, 8, 2);
    CHECK_THROWS_AS(subsample_step(state, std::vector<int>{0, 1}, samplers),
                    std::invalid_argument);
    CHECK_THROWS_AS(subsample_step(state, std::vector<int>{7}, samplers), std::invalid_argument);
    std::vector<Sampler> wrong_k = {traditional(3)};
    CHECK_THROWS_AS(subsample_step(state, std::vector<int>{0}, wrong_k), std::invalid_argument);
}

TEST_CASE("apply_sequence folds the lattice sequence to 32 1x1 submaps") {
    TraceState state = make_trace(32, 32, 2);
    state = apply_sequence(state, lattice_sequence(5), sampler_set(2));
    CHECK(state.submaps.size() == 32);
    for (const SubmapMeta& meta : state.submaps) {
        CHECK(meta.height == 1);
        CHECK(meta.width == 1);
    }
}

TEST_CASE("apply_sequence reports the failing step") {
    SamplerSequence bad;
    bad.lines = {{0}, {0, 1, 0}};
    TraceState state = make_trace(32, 32, 2);
    try {
        apply_sequence(state, bad, sampler_set(2));
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
}

TEST_CASE("empty sequence leaves the state unchanged") {
    TraceState state = make_trace(32, 32, 2);
    TraceState after = apply_sequence(state, SamplerSequence{}, sampler_set(2));
    CHECK(after.submaps == state.submaps);
    CHECK(after.steps_applied == 0);
}

TEST_CASE("naive all-zeros sequence keeps submaps on the diagonal") {
    auto samplers = sampler_set(2);
    TraceState state = make_trace(32, 32, 2);
    for (int t = 0; t < 4; ++t) {
        state = subsample_step(state, std::vector<int>(state.submaps.size(), 0), samplers);
        for (const SubmapMeta& meta : state.submaps) CHECK(meta.row_offset == meta.col_offset);
    }
}

TEST_CASE("trace geometry matches the rank-partition oracle") {
    check_against_oracle(16, 2, fixed_sequence(2, 3));
    check_against_oracle(32, 2, lattice_sequence(4));
    check_against_oracle(32, 2, random_sequence(2, 4, 99));
    check_against_oracle(27, 3, random_sequence(3, 2, 7));
    check_against_oracle(16, 2, fixed_sequence(2, 3, 1));
}

TEST_CASE("lattice offsets after three steps follow the 5r mod 8 rule") {
    TraceState state = make_trace(32, 32, 2);
    state = apply_sequence(state, lattice_sequence(3), sampler_set(2));
    std::vector<std::pair<int, int>> offsets;
    for (const SubmapMeta& meta : state.submaps)
        offsets.emplace_back(meta.row_offset, meta.col_offset);
    std::vector<std::pair<int, int>> expected = {{0, 0}, {1, 5}, {2, 2}, {3, 7},
                                                 {4, 4}, {5, 1}, {6, 6}, {7, 3}};
    CHECK(offsets == expected);
}

TEST_CASE("random_sequence is deterministic with canonical line lengths") {
    SamplerSequence a = random_sequence(2, 3, 7);
    SamplerSequence b = random_sequence(2, 3, 7);
    CHECK(a.lines == b.lines);
    REQUIRE(a.lines.size() == 3);
    CHECK(a.lines[0].size() == 1);
    CHECK(a.lines[1].size() == 2);
    CHECK(a.lines[2].size() == 4);

    SamplerSequence tri = random_sequence(3, 2, 5);
    CHECK(tri.lines[0].size() == 1);
    CHECK(tri.lines[1].size() == 3);
    for (const auto& line : tri.lines)
        for (int id : line) {
            CHECK(id >= 0);
            CHECK(id <= 2);
        }
}

TEST_CASE("lattice fixture lines") {
    SamplerSequence seq = lattice_sequence(4);
    CHECK(format_sequence(seq) == "0\n00\n0101\n01100011\n");
    CHECK(lattice_sequence(1).lines == std::vector<std::vector<int>>{{0}});

    SamplerSequence five = lattice_sequence(5);
    std::string line5;
    for (int id : five.lines[4]) line5 += static_cast<char>('0' + id);
    CHECK(line5 == "0010100101001010");

    SamplerSequence all = lattice_sequence(10);
    for (size_t t = 0; t < all.lines.size(); ++t)
        CHECK(all.lines[t].size() == static_cast<size_t>(1) << t);

    CHECK_THROWS_AS(lattice_sequence(0), std::out_of_range);
    CHECK_THROWS_AS(lattice_sequence(11), std::out_of_range);
}

TEST_CASE("tri sequence drives the stride-3 samplers to full coverage") {
    SamplerSequence seq = tri_sequence();
    REQUIRE(seq.lines.size() == 4);
    CHECK(seq.lines[0].size() == 1);
    CHECK(seq.lines[1].size() == 3);
    CHECK(seq.lines[2].size() == 9);
    CHECK(seq.lines[3].size() == 27);

    TraceState state = make_trace(81, 81, 3);
    state = apply_sequence(state, seq, sampler_set(3));
    CHECK(state.submaps.size() == 81);
    CoverageReport cover = coverage_stats(state);
    CHECK(cover.rows_covered == 81);
    CHECK(cover.cols_covered == 81);
    for (int64_t count : cover.per_row) CHECK(count == 1);
}

TEST_CASE("trace_positions counts and uniqueness") {
    TraceState fresh = make_trace(16, 16, 2);
    CHECK(trace_positions(fresh).size() == 256);

    TraceState checkered3 = apply_sequence(fresh, fixed_sequence(2, 3), sampler_set(2));
    auto positions = trace_positions(checkered3);
    CHECK(positions.size() == 32);
    CHECK(std::adjacent_find(positions.begin(), positions.end()) == positions.end());

    std::vector<Sampler> trad = {traditional(2)};
    TraceState t = fresh;
    for (int i = 0; i < 3; ++i) t = subsample_step(t, std::vector<int>{0}, trad);
    CHECK(trace_positions(t).size() == 4);
}

TEST_CASE("sample-count law r * (n/k^2)^s") {
    struct Case {
        const Sampler sampler;
        int steps;
    };
    for (const auto& [sampler, steps] :
         {Case{checkered(), 4}, Case{traditional(2), 3}, Case{complete(2), 3}}) {
        std::vector<Sampler> registry = {sampler};
        TraceState state = make_trace(32, 32, 2);
        double expected = 32.0 * 32.0;
        for (int t = 0; t < steps; ++t) {
            state = subsample_step(state, std::vector<int>(state.submaps.size(), 0), registry);
            expected *= sampler.n / 4.0;
            CHECK(static_cast<double>(trace_positions(state).size()) == expected);
        }
    }
}

TEST_CASE("offset residues form a bijection under n-rooks sequences") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        TraceState state = make_trace(32, 32, 2);
        state = apply_sequence(state, random_sequence(2, 5, seed), sampler_set(2));
        std::set<int> rows, cols;
        for (const SubmapMeta& meta : state.submaps) {
            CHECK(rows.insert(meta.row_offset).second);
            CHECK(cols.insert(meta.col_offset).second);
        }
        CHECK(rows.size() == 32);
        CHECK(cols.size() == 32);
    }
}

TEST_CASE("traditional positions are a subset of checkered positions") {
    TraceState base = make_trace(16, 16, 2);
    std::vector<Sampler> trad = {traditional(2)};
    TraceState t = base, c = base;
    for (int i = 0; i < 3; ++i) {
        t = subsample_step(t, std::vector<int>(t.submaps.size(), 0), trad);
        c = subsample_step(c, std::vector<int>(c.submaps.size(), 0), sampler_set(2));
    }
    auto tp = trace_positions(t);
    auto cp = trace_positions(c);
    CHECK(std::includes(cp.begin(), cp.end(), tp.begin(), tp.end()));
}

TEST_CASE("odd extents pad conceptually and never emit padded positions") {
    TraceState state = make_trace(5, 5, 2);
    state = subsample_step(state, std::vector<int>{0}, sampler_set(2));
    REQUIRE(state.submaps.size() == 2);
    CHECK(state.submaps[0].height == 3);  // ceil(5/2)
    auto positions = trace_positions(state);
    CHECK(positions.size() == 13);  // 3*3 from (0,0), 2*2 from (1,1)
    for (auto [r, c] : positions) {
        CHECK(r < 5);
        CHECK(c < 5);
    }
}

TEST_CASE("coverage stats for the lattice sequence on 32x32") {
    TraceState state = make_trace(32, 32, 2);
    SamplerSequence seq = lattice_sequence(5);
    auto samplers = sampler_set(2);
    int64_t expected_per_row = 32;
    for (const auto& line : seq.lines) {
        state = subsample_step(state, line, samplers);
        expected_per_row /= 2;
        CoverageReport cover = coverage_stats(state);
        CHECK(cover.rows_covered == 32);
        CHECK(cover.cols_covered == 32);
        CHECK(cover.block_discrepancy == 0.0);
        for (int64_t count : cover.per_row) CHECK(count == expected_per_row);
        for (int64_t count : cover.per_col) CHECK(count == expected_per_row);
    }
    CHECK(coverage_stats(state).samples == 32);
}

TEST_CASE("coverage stats for three traditional steps") {
    std::vector<Sampler> trad = {traditional(2)};
    TraceState state = make_trace(32, 32, 2);
    for (int i = 0; i < 3; ++i)
        state = subsample_step(state, std::vector<int>(state.submaps.size(), 0), trad);
    CoverageReport cover = coverage_stats(state);
    CHECK(cover.rows_covered == 4);
    CHECK(cover.cols_covered == 4);
    CHECK(cover.samples == 16);
}

TEST_CASE("sequence text round trip and parse errors") {
    SamplerSequence seq = lattice_sequence(4);
    SamplerSequence parsed = parse_sequence_text(format_sequence(seq));
    CHECK(parsed.lines == seq.lines);

    try {
        parse_sequence_text("01\n0a\n");
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("determinism: identical inputs give identical states") {
    TraceState a = apply_sequence(make_trace(32, 32, 2), random_sequence(2, 4, 42), sampler_set(2));
    TraceState b = apply_sequence(make_trace(32, 32, 2), random_sequence(2, 4, 42), sampler_set(2));
    CHECK(a.submaps == b.submaps);
}
