#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace ccnn {

/// Binary element-selector matrix over a k x k sampling window.
/// mask is row-major, 1 = take a sample; n is the number of samples.
struct Sampler {
    int k = 1;
    std::vector<uint8_t> mask;  // k*k entries, each 0 or 1
    int n = 1;

    uint8_t at(int row, int col) const { return mask[static_cast<size_t>(row) * k + col]; }

    bool operator==(const Sampler& other) const = default;
};

/// Builds a sampler from an explicit mask, validating the invariants
/// (square mask, at least one sample). Throws std::invalid_argument.
Sampler make_sampler(int k, std::vector<uint8_t> mask);

/// 2x2 sampler selecting the top-left and bottom-right window elements.
Sampler checkered();

/// Mirrors the mask across the vertical axis (column reversal).
/// For checkered() this yields the top-right / bottom-left sampler.
Sampler complement_of(const Sampler& s);

/// Single sample at the window's top-left corner; equivalent to a plain
/// stride-k layer.
Sampler traditional(int k);

/// All-ones sampler, n = k*k; keeps every element.
Sampler complete(int k);

/// The three 3x3 n-rooks samplers whose sample sets partition the window.
/// Sampler id m selects the cells with (row + col) % 3 == m.
std::array<Sampler, 3> stride3_set();

/// True iff every row and every column of the mask holds exactly one sample.
bool is_n_rooks(const Sampler& s);

/// (row, col) positions of the samples in row-major order; size() == n.
std::vector<std::pair<int, int>> samples_of(const Sampler& s);

/// Default sampler registry for sequences: for k=2 ids are
/// {0: checkered, 1: complement}; for k=3 the stride-3 set.
/// Other window sizes are not registered and throw.
std::vector<Sampler> sampler_set(int k);

}  // namespace ccnn
