#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccnn/graph.hpp"

namespace ccnn {

/// SGD with momentum; optional Nesterov lookahead.
struct SgdOptions {
    double lr = 0.05;
    double momentum = 0.9;
    bool nesterov = false;
};

class Sgd {
public:
    Sgd(std::vector<Tensor> params, SgdOptions options);
    /// Applies one update from the gradients currently on the parameters.
    void step();

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> velocity_;
    SgdOptions options_;
};

/// Two-class 32x32 single-channel images whose label is the orientation of a
/// fine period-2 stripe texture (horizontal vs vertical), with random sign,
/// amplitude and additive noise. Discriminative information lives entirely
/// at the finest spatial scale.
struct ToyDataset {
    Tensor images;  // (N, 1, 32, 32)
    std::vector<int> labels;
};

ToyDataset make_stripe_dataset(int count, uint64_t seed);

/// The training demo's network: 32x32 input, three stride-2 layers, linear
/// classifier on the flattened 4x4 map.
LayerGraph make_toy_cnn(uint64_t seed);

struct EpochLog {
    int epoch = 0;
    double cnn_loss = 0, cnn_acc = 0;
    double ccnn_loss = 0, ccnn_acc = 0;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    int64_t cnn_param_count = 0;
    int64_t ccnn_param_count = 0;
    double cnn_final_acc = 0;
    double ccnn_final_acc = 0;
    bool diverged = false;
};

/// Trains the toy graph as a CNN and as its converted CCNN with identical
/// seeds, data order and hyperparameters; stops early once both fit the
/// training set. Parameter counts are asserted equal.
TrainResult train_toy_pair(int max_epochs, uint64_t seed, SgdOptions options,
                           int dataset_size = 256, int batch_size = 16);

std::string train_json(const TrainResult& result);

}  // namespace ccnn
