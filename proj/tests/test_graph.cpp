#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "ccnn/checks.hpp"
#include "ccnn/graph.hpp"

using namespace ccnn;

namespace {

LayerGraph small_cnn(uint64_t seed, int subsample_layers = 2) {
    LayerGraph g = make_graph(2);
    add_conv(g, 4, 3, 1, 1);
    add_batchnorm(g);
    add_relu(g);
    for (int i = 0; i < subsample_layers; ++i) {
        add_conv(g, 4 + 2 * i, 3, 2, 1);
        add_relu(g);
    }
    int side = 16 >> subsample_layers;
    add_linear(g, (4 + 2 * (subsample_layers - 1)) * side * side, 3);
    init_params(g, seed);
    return g;
}

bool same_values(const Tensor& a, const Tensor& b) {
    if (!a.defined() != !b.defined()) return false;
    if (!a.defined()) return true;
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.numel())) == 0;
}

}  // namespace

TEST_CASE("init_params is deterministic and counts are descriptor-pure") {
    LayerGraph a = small_cnn(5);
    LayerGraph b = small_cnn(5);
    CHECK(parameter_count(a) == parameter_count(b));
    CHECK(same_values(a.layers[0].weight, b.layers[0].weight));
    CHECK(same_values(a.layers[1].gamma, b.layers[1].gamma));

    LayerGraph c = small_cnn(6);
    CHECK_FALSE(same_values(a.layers[0].weight, c.layers[0].weight));
    CHECK(parameter_count(a) == parameter_count(c));
}

TEST_CASE("single linear layer graph is a matrix product plus bias") {
    LayerGraph g = make_graph(3);
    add_linear(g, 3, 2);
    init_params(g, 1);
    Tensor x = Tensor::from_data({1, 3, 1, 1}, {1.0, 2.0, 3.0});
    Tensor out = forward(g, make_feature_map(x), false);
    const Tensor& w = g.layers[0].weight;
    const Tensor& b = g.layers[0].bias;
    for (int o = 0; o < 2; ++o) {
        double expected = b.data()[o];
        for (int f = 0; f < 3; ++f) expected += w.data()[o * 3 + f] * x.data()[f];
        CHECK(out.data()[o] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("forward is deterministic given seeds") {
    LayerGraph g = small_cnn(7);
    add_dropout(g, 0.3);
    std::mt19937_64 gen(3);
    Tensor x = Tensor::uniform({2, 2, 16, 16}, -1, 1, gen);
    Tensor a = forward(g, make_feature_map(x), true, 99);
    Tensor b = forward(g, make_feature_map(x), true, 99);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("forward names the offending layer on shape mismatch") {
    LayerGraph g = make_graph(2);
    add_conv(g, 4, 3, 1, 1);
    add_linear(g, 999, 3);
    init_params(g, 1);
    std::mt19937_64 gen(4);
    Tensor x = Tensor::uniform({1, 2, 8, 8}, -1, 1, gen);
    try {
        forward(g, make_feature_map(x), false);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
    Tensor wrong_channels = Tensor::zeros({1, 3, 8, 8});
    CHECK_THROWS_AS(forward(g, make_feature_map(wrong_channels), false), std::invalid_argument);
}

TEST_CASE("convert_to_ccnn with no stride-2 layers only inserts a no-op mean") {
    LayerGraph g = make_graph(2);
    add_conv(g, 4, 3, 1, 1);
    add_relu(g);
    add_linear(g, 4 * 8 * 8, 3);
    init_params(g, 11);
    LayerGraph converted = convert_to_ccnn(g);
    REQUIRE(converted.layers.size() == g.layers.size() + 1);
    CHECK(converted.layers[2].kind == LayerKind::mean_submaps);

    std::mt19937_64 gen(5);
    Tensor x = Tensor::uniform({2, 2, 8, 8}, -1, 1, gen);
    Tensor original = forward(g, make_feature_map(x), false);
    Tensor after = forward(converted, make_feature_map(x), false);
    for (int64_t i = 0; i < original.numel(); ++i) CHECK(original.data()[i] == after.data()[i]);
}

TEST_CASE("converted graph grows 2^s submaps of the halved extent") {
    for (int subs : {2, 3}) {
        LayerGraph g = make_graph(2);
        add_conv(g, 4, 3, 1, 1);
        for (int i = 0; i < subs; ++i) add_conv(g, 4, 3, 2, 1);
        add_global_pool(g, PoolMode::avg);
        add_linear(g, 4, 2);
        init_params(g, 21);
        LayerGraph converted = convert_to_ccnn(g);

        std::mt19937_64 gen(6);
        int side = 32;
        Tensor x = Tensor::uniform({1, 2, side, side}, -1, 1, gen);
        ForwardTrace trace;
        forward(converted, make_feature_map(x), false, 0, &trace);
        // layers: stem conv, then `subs` checkered convs, then the head
        const FeatureMap& last_spatial = trace.activations[static_cast<size_t>(subs)];
        CHECK(last_spatial.submaps() == 1 << subs);
        CHECK(last_spatial.height() == side >> subs);
        CHECK(last_spatial.width() == side >> subs);

        // resolution law: each checkered layer keeps n/k^2 = 1/2 of the samples
        for (int t = 1; t <= subs; ++t) {
            const FeatureMap& before = trace.activations[static_cast<size_t>(t - 1)];
            const FeatureMap& after = trace.activations[static_cast<size_t>(t)];
            int64_t before_samples =
                static_cast<int64_t>(before.submaps()) * before.height() * before.width();
            int64_t after_samples =
                static_cast<int64_t>(after.submaps()) * after.height() * after.width();
            CHECK(after_samples * 2 == before_samples);
        }
    }
}

TEST_CASE("conversion conserves parameter count and values bit-exactly") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        RandomGraphOptions options;
        options.subsample_layers = 2 + static_cast<int>(seed % 2);
        LayerGraph g = random_toy_graph(seed, options);
        LayerGraph converted = convert_to_ccnn(g);
        CHECK(parameter_count(g) == parameter_count(converted));
        for (size_t i = 0, j = 0; i < g.layers.size(); ++i, ++j) {
            if (converted.layers[j].kind == LayerKind::mean_submaps &&
                g.layers[i].kind != LayerKind::mean_submaps)
                ++j;
            CHECK(same_values(g.layers[i].weight, converted.layers[j].weight));
            CHECK(same_values(g.layers[i].bias, converted.layers[j].bias));
            CHECK(same_values(g.layers[i].gamma, converted.layers[j].gamma));
            CHECK(same_values(g.layers[i].beta, converted.layers[j].beta));
            CHECK(same_values(g.layers[i].running_mean, converted.layers[j].running_mean));
        }
        // deep copies: training one graph must not touch the other
        converted.layers[0].weight.data()[0] += 1.0;
        CHECK_FALSE(same_values(g.layers[0].weight, converted.layers[0].weight));
    }
}

TEST_CASE("convert rejects unsupported strides with the layer index") {
    LayerGraph g = make_graph(2);
    add_conv(g, 4, 3, 1, 1);
    add_conv(g, 4, 3, 3, 1);
    init_params(g, 2);
    try {
        convert_to_ccnn(g);
        FAIL("expected runtime_error");
    } catch (const std::runtime_error& e) {
        std::string message = e.what();
        CHECK(message.find("stride 3") != std::string::npos);
        CHECK(message.find("layer 1") != std::string::npos);
    }
    CHECK_THROWS_AS(dilation_equivalent(g), std::runtime_error);
    CHECK_THROWS_AS(convert_to_complete(g), std::runtime_error);
}

TEST_CASE("convert_to_complete quadruples submaps per subsampling layer") {
    LayerGraph g = make_graph(1);
    add_conv(g, 2, 3, 2, 1);
    add_conv(g, 2, 3, 2, 1);
    add_global_pool(g, PoolMode::avg);
    init_params(g, 3);
    LayerGraph complete = convert_to_complete(g);
    std::mt19937_64 gen(7);
    Tensor x = Tensor::uniform({1, 1, 16, 16}, -1, 1, gen);
    ForwardTrace trace;
    forward(complete, make_feature_map(x), false, 0, &trace);
    CHECK(trace.activations[0].submaps() == 4);
    CHECK(trace.activations[1].submaps() == 16);
}

TEST_CASE("dilation_equivalent leaves stride-1 graphs unchanged") {
    LayerGraph g = make_graph(2);
    add_conv(g, 4, 3, 1, 1);
    add_relu(g);
    add_global_pool(g, PoolMode::avg);
    init_params(g, 4);
    LayerGraph dilated = dilation_equivalent(g);
    CHECK(dilated.layers[0].dilation == 1);
    CHECK(dilated.layers[0].padding == 1);
    CHECK(dilated.layers.size() == g.layers.size());
}

TEST_CASE("dilation_equivalent doubles dilation and padding after a stride-2 layer") {
    LayerGraph g = make_graph(2);
    add_conv(g, 4, 3, 2, 1);
    add_conv(g, 4, 3, 1, 1);
    add_conv(g, 4, 3, 2, 1);
    add_conv(g, 4, 3, 1, 1);
    init_params(g, 5);
    LayerGraph dilated = dilation_equivalent(g);
    CHECK(dilated.layers[0].stride == 1);
    CHECK(dilated.layers[0].dilation == 1);
    CHECK(dilated.layers[1].dilation == 2);
    CHECK(dilated.layers[1].padding == 2);
    CHECK(dilated.layers[2].stride == 1);
    CHECK(dilated.layers[2].dilation == 2);
    CHECK(dilated.layers[3].dilation == 4);
    CHECK(dilated.layers[3].padding == 4);
}

TEST_CASE("complete multisampling equals the dilated network through a pooling graph") {
    LayerGraph g = make_graph(1);
    add_conv(g, 3, 3, 1, 1);
    add_relu(g);
    add_maxpool(g, 2, 2);
    add_conv(g, 4, 3, 2, 1);
    add_relu(g);
    add_global_pool(g, PoolMode::avg);
    add_linear(g, 4, 2);
    init_params(g, 55);

    std::mt19937_64 gen(56);
    Tensor x = Tensor::uniform({1, 1, 32, 32}, -1, 1, gen);
    DilationCheck check = compare_complete_vs_dilated(g, x);
    CHECK(check.compared > 1000);
    CHECK(check.max_abs_diff < 1e-9);
}

TEST_CASE("zeroing all but the anchor submap reproduces the traditional output") {
    LayerGraph g = small_cnn(31);
    LayerGraph converted = convert_to_ccnn(g);
    std::mt19937_64 gen(8);
    Tensor x = Tensor::uniform({2, 2, 16, 16}, -1, 1, gen);

    Tensor traditional_out = forward(g, make_feature_map(x), false);

    ForwardTrace trace;
    forward(converted, make_feature_map(x), false, 0, &trace);
    size_t mean_index = 0;
    while (converted.layers[mean_index].kind != LayerKind::mean_submaps) ++mean_index;
    const FeatureMap& before_mean = trace.activations[mean_index - 1];

    int anchor = -1;
    for (size_t m = 0; m < before_mean.metas.size(); ++m)
        if (before_mean.metas[m].row_offset == 0 && before_mean.metas[m].col_offset == 0)
            anchor = static_cast<int>(m);
    REQUIRE(anchor >= 0);

    // zero out all other submaps, rescale by M, and push through the rest
    int submaps = before_mean.submaps();
    Tensor masked = before_mean.tensor.clone();
    int batch = before_mean.batch(), channels = before_mean.channels();
    int64_t plane = static_cast<int64_t>(before_mean.height()) * before_mean.width();
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            for (int m = 0; m < submaps; ++m) {
                double* dst = masked.data() +
                              ((static_cast<int64_t>(b) * channels + c) * submaps + m) * plane;
                for (int64_t p = 0; p < plane; ++p)
                    dst[p] = m == anchor ? dst[p] * submaps : 0.0;
            }
    FeatureMap masked_map{masked, before_mean.metas, before_mean.origins};
    FeatureMap averaged = mean_over_submaps(masked_map);

    // remaining layers after mean_submaps ought to be the classifier
    Tensor flat = reshape(averaged.tensor,
                          {batch, channels * averaged.height() * averaged.width()});
    const Layer& classifier = converted.layers.back();
    REQUIRE(classifier.kind == LayerKind::linear);
    Tensor out = linear(flat, classifier.weight, classifier.bias);

    for (int64_t i = 0; i < out.numel(); ++i)
        CHECK(out.data()[i] == doctest::Approx(traditional_out.data()[i]).epsilon(1e-9));
}

TEST_CASE("graph text serialization round-trips") {
    LayerGraph g = make_graph(3);
    add_conv(g, 8, 3, 2, 1);
    add_batchnorm(g, 2e-5, 0.2);
    add_relu(g);
    add_maxpool(g, 2, 2);
    add_conv(g, 8, 3, 1, 1, 1, 2);
    add_dropout(g, 0.25);
    add_mean_submaps(g);
    add_global_pool(g, PoolMode::max);
    add_linear(g, 8, 10);

    std::string text = save_graph_text(g);
    CHECK(text.find("conv out=8 k=3 stride=2 pad=1 dil=1\n") != std::string::npos);
    CHECK(text.find("maxpool k=2 stride=2\n") != std::string::npos);
    CHECK(text.find("linear in=8 out=10\n") != std::string::npos);
    CHECK(text.find("dropout p=0.25\n") != std::string::npos);
    CHECK(text.find("gpool3d mode=max\n") != std::string::npos);
    CHECK(text.find("km=2") != std::string::npos);

    LayerGraph parsed = load_graph_text(text);
    CHECK(save_graph_text(parsed) == text);
    CHECK(parsed.in_channels == 3);
    CHECK(parsed.layers[1].eps == 2e-5);
    CHECK(parsed.layers[1].momentum == 0.2);

    LayerGraph ccnn_graph = convert_to_ccnn(small_cnn(1));
    std::string ccnn_text = save_graph_text(ccnn_graph);
    CHECK(ccnn_text.find("cconv") != std::string::npos);
    CHECK(save_graph_text(load_graph_text(ccnn_text)) == ccnn_text);
}

TEST_CASE("graph text parse errors carry line numbers") {
    CHECK_THROWS_AS(load_graph_text("input c=2\nwarp out=4\n"), std::invalid_argument);
    CHECK_THROWS_AS(load_graph_text("conv out=4 k=3\n"), std::invalid_argument);  // missing input
    try {
        load_graph_text("input c=2\nconv out 4\n");
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("parameter blob round-trips bit-exactly through a parsed graph") {
    LayerGraph g = small_cnn(77);
    std::mt19937_64 gen(9);
    Tensor x = Tensor::uniform({1, 2, 16, 16}, -1, 1, gen);
    Tensor expected = forward(g, make_feature_map(x), false);

    std::stringstream blob(std::ios::in | std::ios::out | std::ios::binary);
    save_params(g, blob);
    std::string magic = blob.str().substr(0, 8);
    CHECK(magic == "CCNNPRM1");

    LayerGraph loaded = load_graph_text(save_graph_text(g));
    load_params(loaded, blob);
    for (size_t i = 0; i < g.layers.size(); ++i) {
        CHECK(same_values(g.layers[i].weight, loaded.layers[i].weight));
        CHECK(same_values(g.layers[i].running_var, loaded.layers[i].running_var));
    }
    Tensor reloaded_out = forward(loaded, make_feature_map(x), false);
    for (int64_t i = 0; i < expected.numel(); ++i)
        CHECK(expected.data()[i] == reloaded_out.data()[i]);

    // truncated stream fails loudly
    std::stringstream truncated(blob.str().substr(0, 40),
                                std::ios::in | std::ios::out | std::ios::binary);
    LayerGraph target = load_graph_text(save_graph_text(g));
    CHECK_THROWS_AS(load_params(target, truncated), std::runtime_error);

    // mismatched descriptor table fails loudly
    LayerGraph other = make_graph(2);
    add_linear(other, 4, 2);
    std::stringstream blob2(blob.str(), std::ios::in | std::ios::out | std::ios::binary);
    CHECK_THROWS_AS(load_params(other, blob2), std::runtime_error);
}

TEST_CASE("forward trace records one activation per layer") {
    LayerGraph g = small_cnn(13);
    std::mt19937_64 gen(10);
    Tensor x = Tensor::uniform({1, 2, 16, 16}, -1, 1, gen);
    ForwardTrace trace;
    forward(g, make_feature_map(x), false, 0, &trace);
    CHECK(trace.activations.size() == g.layers.size());
    CHECK(trace.activations[0].channels() == 4);
}
