#include "ccnn/sampler.hpp"

#include <numeric>
#include <stdexcept>

namespace ccnn {

Sampler make_sampler(int k, std::vector<uint8_t> mask) {
    if (k < 1) throw std::invalid_argument("sampler: window size must be >= 1");
    if (mask.size() != static_cast<size_t>(k) * k)
        throw std::invalid_argument("sampler: mask must have k*k entries");
    int n = 0;
    for (uint8_t v : mask) {
        if (v > 1) throw std::invalid_argument("sampler: mask entries must be 0 or 1");
        n += v;
    }
    if (n == 0) throw std::invalid_argument("sampler: mask needs at least one sample");
    return Sampler{k, std::move(mask), n};
}

Sampler checkered() { return make_sampler(2, {1, 0, 0, 1}); }

Sampler complement_of(const Sampler& s) {
    std::vector<uint8_t> mirrored(s.mask.size());
    for (int r = 0; r < s.k; ++r)
        for (int c = 0; c < s.k; ++c)
            mirrored[static_cast<size_t>(r) * s.k + c] = s.at(r, s.k - 1 - c);
    return make_sampler(s.k, std::move(mirrored));
}

Sampler traditional(int k) {
    if (k < 1) throw std::invalid_argument("traditional: k must be >= 1");
    std::vector<uint8_t> mask(static_cast<size_t>(k) * k, 0);
    mask[0] = 1;
    return make_sampler(k, std::move(mask));
}

Sampler complete(int k) {
    if (k < 1) throw std::invalid_argument("complete: k must be >= 1");
    return make_sampler(k, std::vector<uint8_t>(static_cast<size_t>(k) * k, 1));
}

std::array<Sampler, 3> stride3_set() {
    std::array<Sampler, 3> out = {traditional(1), traditional(1), traditional(1)};
    for (int id = 0; id < 3; ++id) {
        std::vector<uint8_t> mask(9, 0);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                if ((r + c) % 3 == id) mask[static_cast<size_t>(r) * 3 + c] = 1;
        out[static_cast<size_t>(id)] = make_sampler(3, std::move(mask));
    }
    return out;
}

bool is_n_rooks(const Sampler& s) {
    for (int r = 0; r < s.k; ++r) {
        int count = 0;
        for (int c = 0; c < s.k; ++c) count += s.at(r, c);
        if (count != 1) return false;
    }
    for (int c = 0; c < s.k; ++c) {
        int count = 0;
        for (int r = 0; r < s.k; ++r) count += s.at(r, c);
        if (count != 1) return false;
    }
    return true;
}

std::vector<std::pair<int, int>> samples_of(const Sampler& s) {
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<size_t>(s.n));
    for (int r = 0; r < s.k; ++r)
        for (int c = 0; c < s.k; ++c)
            if (s.at(r, c)) out.emplace_back(r, c);
    return out;
}

std::vector<Sampler> sampler_set(int k) {
    if (k == 2) return {checkered(), complement_of(checkered())};
    if (k == 3) {
        auto set = stride3_set();
        return {set[0], set[1], set[2]};
    }
    throw std::invalid_argument("sampler_set: no registry for window size " + std::to_string(k));
}

}  // namespace ccnn
