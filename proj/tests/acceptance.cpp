// Acceptance suite: runs every structural criterion end to end and prints
// one pass/fail line per criterion. Exits nonzero if any fail.
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "ccnn/analysis.hpp"
#include "ccnn/checks.hpp"
#include "ccnn/gradcheck.hpp"
#include "ccnn/graph.hpp"
#include "ccnn/trace.hpp"
#include "ccnn/train.hpp"

using namespace ccnn;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << index << ". " << name;
    if (!detail.empty()) std::cout << " — " << detail;
    std::cout << "\n";
    if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// 1. 16x16 through 1/2/3 all-checkered steps: 2x8x8, 4x4x4, 8x2x2, within 1 s.
void criterion_1() {
    auto start = std::chrono::steady_clock::now();
    auto samplers = sampler_set(2);
    TraceState state = make_trace(16, 16, 2);
    bool ok = true;
    std::ostringstream detail;
    const int expected_submaps[3] = {2, 4, 8};
    const int expected_side[3] = {8, 4, 2};
    for (int step = 0; step < 3; ++step) {
        state = subsample_step(state, std::vector<int>(state.submaps.size(), 0), samplers);
        ok = ok && static_cast<int>(state.submaps.size()) == expected_submaps[step];
        for (const SubmapMeta& meta : state.submaps)
            ok = ok && meta.height == expected_side[step] && meta.width == expected_side[step];
        detail << state.submaps.size() << "x" << state.submaps.front().height << "x"
               << state.submaps.front().width << (step < 2 ? ", " : "");
    }
    double elapsed = seconds_since(start);
    ok = ok && elapsed < 1.0;
    detail << " in " << elapsed << " s";
    report(1, "checkered trace geometry 2x8x8 / 4x4x4 / 8x2x2", ok, detail.str());
}

// 2. Submap (0,0,s) of every checkered layer equals the traditional layer,
//    evaluation mode, max abs diff < 1e-9, on >= 5 seeded random graphs.
void criterion_2() {
    bool ok = true;
    double worst = 0.0;
    int64_t compared = 0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        RandomGraphOptions options;
        options.subsample_layers = 2 + static_cast<int>(seed % 2);
        options.height = 16;
        options.gpool_classifier = seed % 2 == 0;
        LayerGraph g = random_toy_graph(seed * 31 + 7, options);
        std::mt19937_64 gen(seed * 17 + 3);
        Tensor input = Tensor::uniform({2, 2, 16, 16}, -1.0, 1.0, gen);
        SubsetCheck check = compare_subset(g, input);
        worst = std::max(worst, check.max_abs_diff);
        compared += check.compared;
        ok = ok && check.compared > 0 && check.max_abs_diff < 1e-9;
    }
    std::ostringstream detail;
    detail << "max abs diff " << worst << " over " << compared << " values, 5 graphs";
    report(2, "subset equivalence of the (0,0) submap", ok, detail.str());
}

// 3. Complete multisampling equals the stride-1+dilation network after
//    re-indexing, < 1e-9, on >= 3 graphs; n = k^2 keeps resolution.
void criterion_3() {
    bool ok = true;
    double worst = 0.0;
    int64_t compared = 0;
    for (uint64_t seed = 0; seed < 3; ++seed) {
        RandomGraphOptions options;
        options.subsample_layers = 2 + static_cast<int>(seed % 2);
        options.height = 64;
        options.gpool_classifier = true;
        LayerGraph g = random_toy_graph(seed * 131 + 11, options);
        std::mt19937_64 gen(seed * 37 + 5);
        Tensor input = Tensor::uniform({1, 2, 64, 64}, -1.0, 1.0, gen);
        DilationCheck check = compare_complete_vs_dilated(g, input);
        worst = std::max(worst, check.max_abs_diff);
        compared += check.compared;
        ok = ok && check.compared > 0 && check.max_abs_diff < 1e-9;
    }
    for (int k = 2; k <= 3; ++k)
        for (int steps = 0; steps <= 4; ++steps)
            ok = ok && resolution_after(1296, k, 2, k * k, steps) == 1296;
    std::ostringstream detail;
    detail << "max abs diff " << worst << " over " << compared
           << " values, 3 graphs; n=k^2 identity holds";
    report(3, "dilation equivalence of complete multisampling", ok, detail.str());
}

// 4. Every row and column represented after every step, equal per-row
//    counts, for fixed / lattice / 10 random seeds, s <= 5 on 32x32.
void criterion_4() {
    auto samplers = sampler_set(2);
    bool ok = true;
    std::vector<SamplerSequence> sequences = {fixed_sequence(2, 5), lattice_sequence(5)};
    for (uint64_t seed = 0; seed < 10; ++seed) sequences.push_back(random_sequence(2, 5, seed));
    for (const SamplerSequence& seq : sequences) {
        TraceState state = make_trace(32, 32, 2);
        for (const auto& line : seq.lines) {
            state = subsample_step(state, line, samplers);
            CoverageReport cover = coverage_stats(state);
            ok = ok && cover.rows_covered == 32 && cover.cols_covered == 32;
            for (int64_t count : cover.per_row) ok = ok && count == cover.per_row[0];
            for (int64_t count : cover.per_col) ok = ok && count == cover.per_col[0];
        }
    }
    report(4, "n-rooks coverage for fixed, lattice and 10 random sequences", ok,
           "12 sequences, every step s <= 5");
}

// 5. Lattice sequence: one sample per row/column at step 5 and zero block
//    discrepancy at every step s <= 5 (block 2^s), exact.
void criterion_5() {
    auto samplers = sampler_set(2);
    TraceState state = make_trace(32, 32, 2);
    SamplerSequence seq = lattice_sequence(5);
    bool ok = true;
    for (const auto& line : seq.lines) {
        state = subsample_step(state, line, samplers);
        ok = ok && coverage_stats(state).block_discrepancy == 0.0;
    }
    CoverageReport final_cover = coverage_stats(state);
    for (int64_t count : final_cover.per_row) ok = ok && count == 1;
    for (int64_t count : final_cover.per_col) ok = ok && count == 1;
    ok = ok && final_cover.samples == 32;
    report(5, "lattice regularity: one sample per row/column, zero block discrepancy", ok,
           "5 steps on 32x32");
}

// 6. Central finite differences vs reverse-mode on checkered_conv,
//    conv3d_submap, batchnorm, mean_over_submaps; rel err < 1e-4; < 30 s.
void criterion_6() {
    auto start = std::chrono::steady_clock::now();
    SuiteReport suite = run_gradient_suite(12345);
    double elapsed = seconds_since(start);
    bool ok = suite.failed() == 0 && elapsed < 30.0;
    std::ostringstream detail;
    detail << suite.checks.size() << " ops checked in " << elapsed << " s";
    for (const CheckResult& check : suite.checks)
        if (!check.ok) detail << "; FAILED " << check.name << " (" << check.detail << ")";
    report(6, "gradients match central finite differences (rel err < 1e-4)", ok, detail.str());
}

// 7. Complexity tables exact for s in [0,6] plus measured dry-run ratios.
void criterion_7() {
    bool ok = true;
    for (int s = 0; s <= 6; ++s) {
        auto p = [&](Scheme scheme, ChannelRule rule) {
            return complexity_profile(scheme, rule, s);
        };
        ok = ok &&
             p(Scheme::traditional, ChannelRule::double_channels).memory_factor ==
                 make_factor(1, -2 * s) &&
             p(Scheme::traditional, ChannelRule::double_channels).compute_factor ==
                 make_factor(1, 0) &&
             p(Scheme::checkered, ChannelRule::double_channels).memory_factor ==
                 make_factor(1, 0) &&
             p(Scheme::checkered, ChannelRule::double_channels).compute_factor ==
                 make_factor(1, 2 * s) &&
             p(Scheme::dilated, ChannelRule::double_channels).memory_factor ==
                 make_factor(1, 2 * s) &&
             p(Scheme::dilated, ChannelRule::double_channels).compute_factor ==
                 make_factor(1, 4 * s) &&
             p(Scheme::traditional, ChannelRule::constant).memory_factor ==
                 make_factor(1, -4 * s) &&
             p(Scheme::traditional, ChannelRule::constant).compute_factor ==
                 make_factor(1, -4 * s) &&
             p(Scheme::checkered, ChannelRule::constant).memory_factor ==
                 make_factor(1, -2 * s) &&
             p(Scheme::checkered, ChannelRule::constant).compute_factor ==
                 make_factor(1, -2 * s) &&
             p(Scheme::dilated, ChannelRule::constant).memory_factor == make_factor(1, 0) &&
             p(Scheme::dilated, ChannelRule::constant).compute_factor == make_factor(1, 0) &&
             p(Scheme::checkered, ChannelRule::sqrt2).memory_factor == make_factor(1, -s) &&
             p(Scheme::checkered, ChannelRule::sqrt2).compute_factor == make_factor(1, 0);
    }
    SuiteReport measured = run_complexity_suite();
    ok = ok && measured.failed() == 0;
    report(7, "complexity tables exact for s in [0,6], measured ratios match", ok,
           measured.failed() == 0 ? "all cells and dry-run ratios exact" : "ratio mismatch");
}

// 8. Parameter counts and values bit-identical across conversion.
void criterion_8() {
    bool ok = true;
    for (uint64_t seed = 0; seed < 4; ++seed) {
        RandomGraphOptions options;
        options.subsample_layers = 2 + static_cast<int>(seed % 2);
        LayerGraph g = random_toy_graph(seed * 61 + 1, options);
        LayerGraph converted = convert_to_ccnn(g);
        ok = ok && parameter_count(g) == parameter_count(converted);
        size_t j = 0;
        for (size_t i = 0; i < g.layers.size(); ++i, ++j) {
            while (j < converted.layers.size() &&
                   converted.layers[j].kind == LayerKind::mean_submaps &&
                   g.layers[i].kind != LayerKind::mean_submaps)
                ++j;
            auto same = [&](const Tensor& a, const Tensor& b) {
                if (!a.defined() && !b.defined()) return true;
                if (!a.defined() || !b.defined()) return false;
                return a.shape() == b.shape() &&
                       std::memcmp(a.data(), b.data(),
                                   sizeof(double) * static_cast<size_t>(a.numel())) == 0;
            };
            ok = ok && same(g.layers[i].weight, converted.layers[j].weight) &&
                 same(g.layers[i].bias, converted.layers[j].bias) &&
                 same(g.layers[i].gamma, converted.layers[j].gamma) &&
                 same(g.layers[i].beta, converted.layers[j].beta);
        }
    }
    report(8, "conversion conserves parameter counts and values bit-exactly", ok, "4 graphs");
}

// 9. CNN and CCNN both exceed 95% training accuracy within 50 epochs in
//    under 5 minutes; the comparison itself is reported, not asserted.
void criterion_9() {
    auto start = std::chrono::steady_clock::now();
    SgdOptions options;
    TrainResult result = train_toy_pair(50, 2024, options);
    double elapsed = seconds_since(start);
    double best_cnn = 0, best_ccnn = 0;
    for (const EpochLog& log : result.epochs) {
        best_cnn = std::max(best_cnn, log.cnn_acc);
        best_ccnn = std::max(best_ccnn, log.ccnn_acc);
    }
    bool ok = !result.diverged && best_cnn > 0.95 && best_ccnn > 0.95 &&
              static_cast<int>(result.epochs.size()) <= 50 && elapsed < 300.0 &&
              result.cnn_param_count == result.ccnn_param_count;
    std::ostringstream detail;
    detail << "cnn acc " << best_cnn << ", ccnn acc " << best_ccnn << ", "
           << result.epochs.size() << " epochs, " << elapsed << " s, params "
           << result.cnn_param_count << "=" << result.ccnn_param_count;
    report(9, "training demo reaches > 95% for both variants", ok, detail.str());
}

// 10. All-zeros sequence: every submap has row_offset == col_offset, exact.
void criterion_10() {
    auto samplers = sampler_set(2);
    TraceState state = make_trace(64, 64, 2);
    bool ok = true;
    for (int step = 0; step < 6; ++step) {
        state = subsample_step(state, std::vector<int>(state.submaps.size(), 0), samplers);
        for (const SubmapMeta& meta : state.submaps)
            ok = ok && meta.row_offset == meta.col_offset;
    }
    report(10, "naive all-zeros sequence stays diagonal", ok, "6 steps, 64 submaps");
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    std::cout << (failures == 0 ? "ACCEPTANCE: all criteria passed"
                                : "ACCEPTANCE: " + std::to_string(failures) + " criteria FAILED")
              << "\n";
    return failures == 0 ? 0 : 1;
}
