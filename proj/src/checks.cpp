#include "ccnn/checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ccnn/analysis.hpp"
#include "ccnn/gradcheck.hpp"
#include "ccnn/trace.hpp"

namespace ccnn {

int SuiteReport::failed() const {
    int count = 0;
    for (const CheckResult& check : checks) count += !check.ok;
    return count;
}

std::string suite_json(const SuiteReport& report) {
    nlohmann::json j;
    j["suite"] = report.suite;
    j["passed"] = static_cast<int>(report.checks.size()) - report.failed();
    j["failed"] = report.failed();
    j["checks"] = nlohmann::json::array();
    for (const CheckResult& check : report.checks)
        j["checks"].push_back({{"name", check.name}, {"ok", check.ok}, {"detail", check.detail}});
    return j.dump(2);
}

LayerGraph random_toy_graph(uint64_t seed, const RandomGraphOptions& options) {
    std::mt19937_64 gen(seed);
    auto pick = [&](int bound) { return static_cast<int>(gen() % static_cast<uint64_t>(bound)); };

    LayerGraph g = make_graph(2);
    int channels = 4 + 2 * pick(3);
    add_conv(g, channels, 3, 1, 1);
    if (pick(2)) add_batchnorm(g);
    add_relu(g);
    for (int t = 0; t < options.subsample_layers; ++t) {
        if (pick(3) == 0) {
            add_maxpool(g, 2, 2);
        } else {
            channels += 2;
            int kernel = pick(2) ? 3 : 1;
            add_conv(g, channels, kernel, 2, kernel == 3 ? 1 : 0);
        }
        if (pick(2)) add_batchnorm(g);
        add_relu(g);
    }
    if (options.gpool_classifier) {
        add_global_pool(g, PoolMode::avg);
        add_linear(g, channels, 3);
    } else {
        int side = options.height;
        for (int t = 0; t < options.subsample_layers; ++t) side /= 2;
        add_linear(g, channels * side * side, 3);
    }
    init_params(g, seed);

    // exercised in evaluation mode, so give the running stats some texture
    for (Layer& layer : g.layers) {
        if (layer.kind != LayerKind::batchnorm) continue;
        for (int64_t i = 0; i < layer.running_mean.numel(); ++i) {
            layer.running_mean.data()[i] = next_uniform(gen) - 0.5;
            layer.running_var.data()[i] = 0.5 + next_uniform(gen);
        }
    }
    return g;
}

SubsetCheck compare_subset(LayerGraph& cnn, const Tensor& input_bchw) {
    LayerGraph ccnn = convert_to_ccnn(cnn);
    FeatureMap input = make_feature_map(input_bchw);

    ForwardTrace cnn_trace, ccnn_trace;
    forward(cnn, input, false, 0, &cnn_trace);
    forward(ccnn, input, false, 0, &ccnn_trace);

    SubsetCheck result;
    // the inserted mean_submaps (if any) sits right before the first linear,
    // so earlier indices align one-to-one
    for (size_t i = 0; i < cnn.layers.size(); ++i) {
        LayerKind kind = cnn.layers[i].kind;
        if (kind == LayerKind::linear || kind == LayerKind::global_pool ||
            kind == LayerKind::mean_submaps)
            break;
        const FeatureMap& reference = cnn_trace.activations[i];
        const FeatureMap& checkered = ccnn_trace.activations[i];

        int anchor = -1;
        for (size_t m = 0; m < checkered.metas.size(); ++m)
            if (checkered.metas[m].row_offset == 0 && checkered.metas[m].col_offset == 0)
                anchor = static_cast<int>(m);
        if (anchor < 0) continue;

        int batch = reference.batch(), channels = reference.channels();
        int h = reference.height(), w = reference.width();
        int64_t plane = static_cast<int64_t>(h) * w;
        for (int b = 0; b < batch; ++b)
            for (int c = 0; c < channels; ++c) {
                const double* ref = reference.tensor.data() +
                                    (static_cast<int64_t>(b) * channels + c) * plane;
                const double* chk =
                    checkered.tensor.data() +
                    ((static_cast<int64_t>(b) * channels + c) * checkered.submaps() + anchor) *
                        plane;
                for (int64_t p = 0; p < plane; ++p) {
                    result.max_abs_diff = std::max(result.max_abs_diff, std::abs(ref[p] - chk[p]));
                    ++result.compared;
                }
            }
    }
    return result;
}

DilationCheck compare_complete_vs_dilated(LayerGraph& cnn, const Tensor& input_bchw) {
    LayerGraph complete = convert_to_complete(cnn);
    LayerGraph dilated = dilation_equivalent(cnn);
    FeatureMap input = make_feature_map(input_bchw);

    ForwardTrace complete_trace, dilated_trace;
    forward(complete, input, false, 0, &complete_trace);
    forward(dilated, input, false, 0, &dilated_trace);

    DilationCheck result;
    // validity margins: positions whose receptive history avoids every edge
    int lo_r = 0, hi_r = input_bchw.dim(2) - 1;
    int lo_c = 0, hi_c = input_bchw.dim(3) - 1;
    int factor = 1;

    for (size_t i = 0; i < cnn.layers.size(); ++i) {
        const Layer& layer = cnn.layers[i];
        if (layer.kind == LayerKind::linear || layer.kind == LayerKind::global_pool ||
            layer.kind == LayerKind::mean_submaps)
            break;
        bool subsamples = false;
        if (layer.kind == LayerKind::conv) {
            lo_r += layer.padding * factor;
            lo_c += layer.padding * factor;
            hi_r -= (layer.kernel - 1 - layer.padding) * factor;
            hi_c -= (layer.kernel - 1 - layer.padding) * factor;
            subsamples = layer.stride == 2;
        } else if (layer.kind == LayerKind::maxpool) {
            hi_r -= (layer.kernel - 1) * factor;
            hi_c -= (layer.kernel - 1) * factor;
            subsamples = layer.stride == 2;
        }
        if (subsamples) {
            // shifted children drop the last row/column and add an edge child
            lo_r += factor;
            lo_c += factor;
            hi_r -= 2 * factor;
            hi_c -= 2 * factor;
            factor *= 2;
        }

        const FeatureMap& multi = complete_trace.activations[i];
        const FeatureMap& ref = dilated_trace.activations[i];
        int batch = multi.batch(), channels = multi.channels();
        int ref_h = ref.height(), ref_w = ref.width();
        for (int m = 0; m < multi.submaps(); ++m) {
            int stride = multi.metas[static_cast<size_t>(m)].step_stride;
            int origin_r = multi.origins[static_cast<size_t>(m)][0];
            int origin_c = multi.origins[static_cast<size_t>(m)][1];
            for (int y = 0; y < multi.height(); ++y) {
                int pos_r = origin_r + stride * y;
                if (pos_r < lo_r || pos_r > hi_r || pos_r >= ref_h) continue;
                for (int x = 0; x < multi.width(); ++x) {
                    int pos_c = origin_c + stride * x;
                    if (pos_c < lo_c || pos_c > hi_c || pos_c >= ref_w) continue;
                    for (int b = 0; b < batch; ++b)
                        for (int c = 0; c < channels; ++c) {
                            double lhs = multi.tensor.data()[(((static_cast<int64_t>(b) * channels +
                                                                c) *
                                                                   multi.submaps() +
                                                               m) *
                                                                  multi.height() +
                                                              y) *
                                                                 multi.width() +
                                                             x];
                            double rhs =
                                ref.tensor.data()[(((static_cast<int64_t>(b) * channels + c) * 1 +
                                                    0) *
                                                       ref_h +
                                                   pos_r) *
                                                      ref_w +
                                                  pos_c];
                            result.max_abs_diff =
                                std::max(result.max_abs_diff, std::abs(lhs - rhs));
                            ++result.compared;
                        }
                }
            }
        }
    }
    return result;
}

SuiteReport run_subset_suite(uint64_t seed, int instances) {
    SuiteReport report;
    report.suite = "subset";
    for (int i = 0; i < instances; ++i) {
        uint64_t instance_seed = seed + static_cast<uint64_t>(i) * 101;
        RandomGraphOptions options;
        options.subsample_layers = 2 + i % 2;
        options.height = 16;
        options.gpool_classifier = i % 2 == 0;
        LayerGraph g = random_toy_graph(instance_seed, options);
        std::mt19937_64 gen(instance_seed ^ 0xABCDEF);
        Tensor input = Tensor::uniform({2, 2, options.height, options.height}, -1.0, 1.0, gen);
        SubsetCheck check = compare_subset(g, input);
        std::ostringstream detail;
        detail << "max_abs_diff=" << check.max_abs_diff << " compared=" << check.compared;
        report.checks.push_back({"subset/graph" + std::to_string(i),
                                 check.compared > 0 && check.max_abs_diff < 1e-9, detail.str()});
    }
    return report;
}

SuiteReport run_dilation_suite(uint64_t seed, int instances) {
    SuiteReport report;
    report.suite = "dilation";
    for (int i = 0; i < instances; ++i) {
        uint64_t instance_seed = seed + static_cast<uint64_t>(i) * 211;
        RandomGraphOptions options;
        options.subsample_layers = 2 + i % 2;
        options.height = 64;
        options.gpool_classifier = true;
        LayerGraph g = random_toy_graph(instance_seed, options);
        std::mt19937_64 gen(instance_seed ^ 0x123457);
        Tensor input = Tensor::uniform({1, 2, options.height, options.height}, -1.0, 1.0, gen);
        DilationCheck check = compare_complete_vs_dilated(g, input);
        std::ostringstream detail;
        detail << "max_abs_diff=" << check.max_abs_diff << " compared=" << check.compared;
        report.checks.push_back({"dilation/graph" + std::to_string(i),
                                 check.compared > 0 && check.max_abs_diff < 1e-9, detail.str()});
    }
    // complete sampling loses no resolution
    bool identity_ok = true;
    for (int k = 2; k <= 3; ++k)
        for (int steps = 0; steps <= 3; ++steps)
            identity_ok = identity_ok && resolution_after(1024, k, 2, k * k, steps) == 1024;
    report.checks.push_back({"dilation/complete-identity", identity_ok, "n=k^2 keeps resolution"});
    return report;
}

SuiteReport run_gradient_suite(uint64_t seed) {
    SuiteReport report;
    report.suite = "gradients";
    std::mt19937_64 gen(seed);
    auto projection = [&](int64_t count) {
        std::vector<double> proj(static_cast<size_t>(count));
        for (double& v : proj) v = next_uniform(gen) * 2.0 - 1.0;
        return proj;
    };
    auto record = [&](const std::string& name, const GradCheckReport& check) {
        std::ostringstream detail;
        detail << "max_rel_err=" << check.max_rel_err << " checked=" << check.checked;
        report.checks.push_back({name, check.max_rel_err < 1e-4, detail.str()});
    };

    {
        Tensor x = Tensor::uniform({1, 2, 1, 6, 6}, -1.0, 1.0, gen, true);
        Tensor w = Tensor::uniform({2, 2, 3, 3}, -0.5, 0.5, gen, true);
        Tensor b = Tensor::uniform({2}, -0.5, 0.5, gen, true);
        auto proj = projection(1 * 2 * 2 * 3 * 3);
        std::vector<Tensor> inputs = {x, w, b};
        record("gradients/checkered_conv", check_gradients(
            [&]() {
                FeatureMap fm{x, {SubmapMeta{0, 0, 1, 6, 6}}, {{0, 0}}};
                return weighted_sum(checkered_conv(fm, w, b, 1).tensor, proj);
            },
            inputs));
    }
    {
        Tensor x = Tensor::uniform({1, 2, 3, 4, 4}, -1.0, 1.0, gen, true);
        Tensor w = Tensor::uniform({2, 2, 2, 3, 3}, -0.5, 0.5, gen, true);
        Tensor b = Tensor::uniform({2}, -0.5, 0.5, gen, true);
        auto proj = projection(1 * 2 * 2 * 4 * 4);
        std::vector<Tensor> inputs = {x, w, b};
        record("gradients/conv3d_submap", check_gradients(
            [&]() {
                FeatureMap fm{x,
                              {SubmapMeta{0, 0, 2, 4, 4}, SubmapMeta{1, 1, 2, 4, 4},
                               SubmapMeta{0, 1, 2, 4, 4}},
                              {{0, 0}, {1, 1}, {0, 1}}};
                return weighted_sum(conv3d_submap(fm, w, b, 1).tensor, proj);
            },
            inputs));
    }
    {
        Tensor x = Tensor::uniform({2, 3, 2, 4, 4}, -1.0, 1.0, gen, true);
        Tensor gamma = Tensor::uniform({3}, 0.5, 1.5, gen, true);
        Tensor beta = Tensor::uniform({3}, -0.5, 0.5, gen, true);
        auto proj = projection(2 * 3 * 2 * 4 * 4);
        std::vector<Tensor> inputs = {x, gamma, beta};
        record("gradients/batchnorm", check_gradients(
            [&]() {
                Tensor rm = Tensor::zeros({3});
                Tensor rv = Tensor::full({3}, 1.0);
                FeatureMap fm{x, {SubmapMeta{0, 0, 2, 4, 4}, SubmapMeta{1, 1, 2, 4, 4}},
                              {{0, 0}, {1, 1}}};
                return weighted_sum(
                    batchnorm(fm, gamma, beta, 1e-5, 0.1, true, rm, rv).tensor, proj);
            },
            inputs));
    }
    {
        Tensor x = Tensor::uniform({2, 2, 4, 3, 3}, -1.0, 1.0, gen, true);
        auto proj = projection(2 * 2 * 1 * 3 * 3);
        std::vector<Tensor> inputs = {x};
        record("gradients/mean_over_submaps", check_gradients(
            [&]() {
                FeatureMap fm{x,
                              {SubmapMeta{0, 0, 2, 3, 3}, SubmapMeta{0, 1, 2, 3, 3},
                               SubmapMeta{1, 0, 2, 3, 3}, SubmapMeta{1, 1, 2, 3, 3}},
                              {{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
                return weighted_sum(mean_over_submaps(fm).tensor, proj);
            },
            inputs));
    }
    {
        Tensor x = Tensor::uniform({1, 2, 1, 6, 6}, -1.0, 1.0, gen, true);
        auto proj = projection(1 * 2 * 2 * 3 * 3);
        std::vector<Tensor> inputs = {x};
        record("gradients/checkered_maxpool", check_gradients(
            [&]() {
                FeatureMap fm{x, {SubmapMeta{0, 0, 1, 6, 6}}, {{0, 0}}};
                return weighted_sum(checkered_maxpool(fm).tensor, proj);
            },
            inputs));
    }
    return report;
}

SuiteReport run_coverage_suite() {
    SuiteReport report;
    report.suite = "coverage";
    auto samplers = sampler_set(2);

    auto check_sequence = [&](const std::string& name, const SamplerSequence& seq) {
        TraceState state = make_trace(32, 32, 2);
        bool ok = true;
        std::ostringstream detail;
        for (size_t t = 0; t < seq.lines.size(); ++t) {
            state = subsample_step(state, seq.lines[t], samplers);
            CoverageReport cover = coverage_stats(state);
            bool rows_full = cover.rows_covered == 32 && cover.cols_covered == 32;
            bool uniform = std::all_of(cover.per_row.begin(), cover.per_row.end(),
                                       [&](int64_t n) { return n == cover.per_row[0]; }) &&
                           std::all_of(cover.per_col.begin(), cover.per_col.end(),
                                       [&](int64_t n) { return n == cover.per_col[0]; });
            if (!rows_full || !uniform) {
                ok = false;
                detail << "step " << t + 1 << " rows=" << cover.rows_covered
                       << " cols=" << cover.cols_covered << " uniform=" << uniform << "; ";
            }
        }
        if (ok) detail << "rows and columns fully represented at every step";
        report.checks.push_back({name, ok, detail.str()});
    };

    check_sequence("coverage/fixed", fixed_sequence(2, 5));
    check_sequence("coverage/lattice", lattice_sequence(5));
    for (uint64_t seed = 0; seed < 10; ++seed)
        check_sequence("coverage/random-seed" + std::to_string(seed), random_sequence(2, 5, seed));

    // all-zeros sequence keeps submaps on the diagonal
    {
        TraceState state = make_trace(32, 32, 2);
        bool ok = true;
        for (int t = 0; t < 5; ++t) {
            state = subsample_step(state, std::vector<int>(state.submaps.size(), 0), samplers);
            for (const SubmapMeta& meta : state.submaps)
                ok = ok && meta.row_offset == meta.col_offset;
        }
        report.checks.push_back({"coverage/naive-diagonal", ok, "row_offset == col_offset"});
    }
    return report;
}

SuiteReport run_complexity_suite() {
    SuiteReport report;
    report.suite = "complexity";

    // profile cells against the closed forms, exactly (squared factors stay
    // in integer-exponent space)
    bool cells_ok = true;
    for (int s = 0; s <= 6 && cells_ok; ++s) {
        auto cell = [&](Scheme scheme, ChannelRule rule) {
            return complexity_profile(scheme, rule, s);
        };
        auto sq = [](const Factor& f) { return make_factor(f.mantissa * f.mantissa, 2 * f.half_exponent); };
        cells_ok =
            cell(Scheme::traditional, ChannelRule::double_channels).memory_factor ==
                make_factor(1, -2 * s) &&
            cell(Scheme::traditional, ChannelRule::double_channels).compute_factor ==
                make_factor(1, 0) &&
            cell(Scheme::checkered, ChannelRule::double_channels).memory_factor ==
                make_factor(1, 0) &&
            cell(Scheme::checkered, ChannelRule::double_channels).compute_factor ==
                make_factor(1, 2 * s) &&
            cell(Scheme::dilated, ChannelRule::double_channels).memory_factor ==
                make_factor(1, 2 * s) &&
            cell(Scheme::dilated, ChannelRule::double_channels).compute_factor ==
                make_factor(1, 4 * s) &&
            cell(Scheme::traditional, ChannelRule::constant).memory_factor ==
                make_factor(1, -4 * s) &&
            cell(Scheme::checkered, ChannelRule::constant).memory_factor ==
                make_factor(1, -2 * s) &&
            cell(Scheme::dilated, ChannelRule::constant).memory_factor == make_factor(1, 0) &&
            sq(cell(Scheme::checkered, ChannelRule::sqrt2).memory_factor) ==
                make_factor(1, -2 * s) &&
            cell(Scheme::checkered, ChannelRule::sqrt2).compute_factor == make_factor(1, 0);
    }
    report.checks.push_back({"complexity/profile-cells", cells_ok, "s in [0,6]"});

    // measured MAC/activation ratios against the analytic factors
    auto reference_cnn = [](ChannelRule rule, int s) {
        LayerGraph g = make_graph(4);
        int channels = 4;
        for (int t = 1; t <= s; ++t) {
            int next = channels;
            if (rule == ChannelRule::double_channels) next = 4 << t;
            if (rule == ChannelRule::sqrt2) next = t % 2 == 0 ? 4 << (t / 2) : 6 << (t / 2);
            add_conv(g, next, 3, 2, 1);
            channels = next;
        }
        int probe_out = rule == ChannelRule::double_channels ? channels * 2 : channels;
        add_conv(g, probe_out, 3, 1, 1);
        return g;
    };
    auto ratio_matches = [&](int64_t measured_s, int64_t measured_0, const Factor& factor) {
        if (factor.half_exponent % 2 != 0) return false;
        int exp = factor.half_exponent / 2;
        int64_t num = factor.mantissa, den = 1;
        if (exp >= 0)
            num <<= exp;
        else
            den <<= -exp;
        return measured_s * den == measured_0 * num;
    };
    bool measured_ok = true;
    std::ostringstream measured_detail;
    for (ChannelRule rule : {ChannelRule::double_channels, ChannelRule::constant}) {
        for (int s = 0; s <= 4; ++s) {
            LayerGraph base0 = reference_cnn(rule, 0);
            LayerGraph base = reference_cnn(rule, s);
            auto cost_for = [&](Scheme scheme, LayerGraph& g) {
                if (scheme == Scheme::checkered) {
                    LayerGraph converted = convert_to_ccnn(g);
                    return measured_cost(converted, 1, 64, 64).back();
                }
                if (scheme == Scheme::dilated) {
                    LayerGraph converted = dilation_equivalent(g);
                    return measured_cost(converted, 1, 64, 64).back();
                }
                return measured_cost(g, 1, 64, 64).back();
            };
            for (Scheme scheme : {Scheme::traditional, Scheme::checkered, Scheme::dilated}) {
                LayerCost at_s = cost_for(scheme, base);
                LayerCost at_0 = cost_for(scheme, base0);
                ComplexityProfile profile = complexity_profile(scheme, rule, s);
                bool ok = ratio_matches(at_s.macs, at_0.macs, profile.compute_factor) &&
                          ratio_matches(at_s.activations, at_0.activations, profile.memory_factor);
                if (!ok) {
                    measured_ok = false;
                    measured_detail << scheme_name(scheme) << "/" << channel_rule_name(rule)
                                    << " s=" << s << " mismatch; ";
                }
            }
        }
    }
    // sqrt2 rule at even depths (integral channel counts)
    for (int s = 0; s <= 6; s += 2) {
        LayerGraph base0 = reference_cnn(ChannelRule::sqrt2, 0);
        LayerGraph base = reference_cnn(ChannelRule::sqrt2, s);
        LayerGraph conv0 = convert_to_ccnn(base0);
        LayerGraph convs = convert_to_ccnn(base);
        LayerCost at_0 = measured_cost(conv0, 1, 64, 64).back();
        LayerCost at_s = measured_cost(convs, 1, 64, 64).back();
        ComplexityProfile profile = complexity_profile(Scheme::checkered, ChannelRule::sqrt2, s);
        bool ok = ratio_matches(at_s.macs, at_0.macs, profile.compute_factor) &&
                  ratio_matches(at_s.activations, at_0.activations, profile.memory_factor);
        if (!ok) {
            measured_ok = false;
            measured_detail << "checkered/sqrt2 s=" << s << " mismatch; ";
        }
    }
    if (measured_ok) measured_detail << "dry-run ratios equal analytic factors";
    report.checks.push_back({"complexity/measured-ratios", measured_ok, measured_detail.str()});
    return report;
}

}  // namespace ccnn
