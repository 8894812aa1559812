#include "ccnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace ccnn {

Sgd::Sgd(std::vector<Tensor> params, SgdOptions options)
    : params_(std::move(params)), options_(options) {
    velocity_.reserve(params_.size());
    for (const Tensor& p : params_)
        velocity_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
}

void Sgd::step() {
    for (size_t t = 0; t < params_.size(); ++t) {
        Tensor& p = params_[t];
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.grad();
        std::vector<double>& v = velocity_[t];
        for (int64_t i = 0; i < p.numel(); ++i) {
            size_t idx = static_cast<size_t>(i);
            v[idx] = options_.momentum * v[idx] + g[idx];
            double update = options_.nesterov ? g[idx] + options_.momentum * v[idx] : v[idx];
            p.data()[i] -= options_.lr * update;
        }
    }
}

ToyDataset make_stripe_dataset(int count, uint64_t seed) {
    const int side = 32;
    std::mt19937_64 gen(seed);
    ToyDataset set;
    set.images = Tensor::zeros({count, 1, side, side});
    set.labels.resize(static_cast<size_t>(count));
    double* data = set.images.data();
    for (int n = 0; n < count; ++n) {
        int label = n % 2;  // balanced
        double amplitude = 0.8 + 0.4 * next_uniform(gen);
        double sign = next_uniform(gen) < 0.5 ? -1.0 : 1.0;
        for (int i = 0; i < side; ++i)
            for (int j = 0; j < side; ++j) {
                int phase = label == 0 ? i : j;  // horizontal vs vertical stripes
                double stripe = (phase % 2 == 0 ? 1.0 : -1.0) * sign * amplitude;
                double noise = 0.2 * (next_uniform(gen) - 0.5);
                data[(static_cast<int64_t>(n) * side + i) * side + j] = stripe + noise;
            }
        set.labels[static_cast<size_t>(n)] = label;
    }
    return set;
}

LayerGraph make_toy_cnn(uint64_t seed) {
    LayerGraph g = make_graph(1);
    add_conv(g, 8, 3, 1, 1);
    add_batchnorm(g);
    add_relu(g);
    add_conv(g, 8, 3, 2, 1);
    add_batchnorm(g);
    add_relu(g);
    add_conv(g, 8, 3, 2, 1);
    add_batchnorm(g);
    add_relu(g);
    add_conv(g, 8, 3, 2, 1);
    add_batchnorm(g);
    add_relu(g);
    add_linear(g, 8 * 4 * 4, 2);
    init_params(g, seed);
    return g;
}

namespace {

struct EpochStats {
    double loss = 0;
    double accuracy = 0;
};

Tensor batch_slice(const Tensor& images, const std::vector<int>& order, int start, int count) {
    int channels = images.dim(1), h = images.dim(2), w = images.dim(3);
    int64_t plane = static_cast<int64_t>(channels) * h * w;
    std::vector<double> data(static_cast<size_t>(count) * plane);
    for (int i = 0; i < count; ++i) {
        int src = order[static_cast<size_t>(start + i)];
        std::copy(images.data() + src * plane, images.data() + (src + 1) * plane,
                  data.begin() + static_cast<int64_t>(i) * plane);
    }
    return Tensor::from_data({count, channels, h, w}, std::move(data));
}

EpochStats run_epoch(LayerGraph& g, Sgd& opt, const ToyDataset& set,
                     const std::vector<int>& order, int batch_size, uint64_t seed) {
    EpochStats stats;
    int total = static_cast<int>(set.labels.size());
    int correct = 0;
    int batches = 0;
    for (int start = 0; start < total; start += batch_size, ++batches) {
        int count = std::min(batch_size, total - start);
        Tensor images = batch_slice(set.images, order, start, count);
        std::vector<int> labels(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i)
            labels[static_cast<size_t>(i)] = set.labels[static_cast<size_t>(order[static_cast<size_t>(start + i)])];

        Tensor logits = forward(g, make_feature_map(images), true, seed + static_cast<uint64_t>(start));
        Tensor loss = softmax_cross_entropy(logits, labels);
        backward(loss);
        opt.step();

        stats.loss += loss.item() * count;
        std::vector<int> predicted = argmax_rows(logits);
        for (int i = 0; i < count; ++i)
            correct += predicted[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)];
    }
    stats.loss /= total;
    stats.accuracy = static_cast<double>(correct) / total;
    return stats;
}

}  // namespace

TrainResult train_toy_pair(int max_epochs, uint64_t seed, SgdOptions options, int dataset_size,
                           int batch_size) {
    ToyDataset set = make_stripe_dataset(dataset_size, seed);

    LayerGraph cnn = make_toy_cnn(seed);
    LayerGraph ccnn = convert_to_ccnn(cnn);

    TrainResult result;
    result.cnn_param_count = parameter_count(cnn);
    result.ccnn_param_count = parameter_count(ccnn);
    if (result.cnn_param_count != result.ccnn_param_count)
        throw std::runtime_error("train: conversion changed the parameter count");

    Sgd cnn_opt(parameters(cnn), options);
    Sgd ccnn_opt(parameters(ccnn), options);

    std::vector<int> order(static_cast<size_t>(dataset_size));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        std::mt19937_64 shuffle_gen(seed + static_cast<uint64_t>(epoch) * 7919);
        for (int i = dataset_size - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle_gen() % static_cast<uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        uint64_t epoch_seed = seed * 1000003 + static_cast<uint64_t>(epoch);
        EpochStats cnn_stats = run_epoch(cnn, cnn_opt, set, order, batch_size, epoch_seed);
        EpochStats ccnn_stats = run_epoch(ccnn, ccnn_opt, set, order, batch_size, epoch_seed);

        result.epochs.push_back(EpochLog{epoch, cnn_stats.loss, cnn_stats.accuracy,
                                         ccnn_stats.loss, ccnn_stats.accuracy});
        result.cnn_final_acc = cnn_stats.accuracy;
        result.ccnn_final_acc = ccnn_stats.accuracy;
        if (std::isnan(cnn_stats.loss) || std::isnan(ccnn_stats.loss)) {
            result.diverged = true;
            break;
        }
        if (cnn_stats.accuracy >= 0.999 && ccnn_stats.accuracy >= 0.999) break;
    }
    return result;
}

std::string train_json(const TrainResult& result) {
    nlohmann::json j;
    j["cnn_param_count"] = result.cnn_param_count;
    j["ccnn_param_count"] = result.ccnn_param_count;
    j["cnn_final_acc"] = result.cnn_final_acc;
    j["ccnn_final_acc"] = result.ccnn_final_acc;
    j["diverged"] = result.diverged;
    j["epochs"] = nlohmann::json::array();
    for (const EpochLog& log : result.epochs) {
        j["epochs"].push_back({{"epoch", log.epoch},
                               {"cnn_loss", log.cnn_loss},
                               {"cnn_acc", log.cnn_acc},
                               {"ccnn_loss", log.ccnn_loss},
                               {"ccnn_acc", log.ccnn_acc}});
    }
    return j.dump(2);
}

}  // namespace ccnn
