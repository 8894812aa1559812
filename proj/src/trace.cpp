#include "ccnn/trace.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ccnn {

TraceState make_trace(int height, int width, int k) {
    if (height < 1 || width < 1) throw std::invalid_argument("trace: extent must be >= 1");
    if (k < 1) throw std::invalid_argument("trace: window size must be >= 1");
    TraceState state;
    state.original_height = height;
    state.original_width = width;
    state.k = k;
    state.steps_applied = 0;
    state.submaps = {SubmapMeta{0, 0, 1, height, width}};
    return state;
}

static void canonical_sort(std::vector<SubmapMeta>& submaps) {
    std::stable_sort(submaps.begin(), submaps.end(), [](const SubmapMeta& a, const SubmapMeta& b) {
        return std::pair{a.row_offset, a.col_offset} < std::pair{b.row_offset, b.col_offset};
    });
}

TraceState subsample_step(const TraceState& state, std::span<const int> assignment,
                          std::span<const Sampler> samplers) {
    if (assignment.size() != state.submaps.size())
        throw std::invalid_argument("subsample_step: assignment length " +
                                    std::to_string(assignment.size()) + " != submap count " +
                                    std::to_string(state.submaps.size()));
    TraceState next = state;
    next.submaps.clear();
    for (size_t i = 0; i < state.submaps.size(); ++i) {
        int id = assignment[i];
        if (id < 0 || static_cast<size_t>(id) >= samplers.size())
            throw std::invalid_argument("subsample_step: unknown sampler id " + std::to_string(id));
        const Sampler& s = samplers[static_cast<size_t>(id)];
        if (s.k != state.k)
            throw std::invalid_argument("subsample_step: sampler window size " +
                                        std::to_string(s.k) + " != trace window size " +
                                        std::to_string(state.k));
        const SubmapMeta& parent = state.submaps[i];
        // conceptual bottom/right padding: extents round up
        int child_h = (parent.height + state.k - 1) / state.k;
        int child_w = (parent.width + state.k - 1) / state.k;
        for (auto [dr, dc] : samples_of(s)) {
            next.submaps.push_back(SubmapMeta{parent.row_offset + parent.step_stride * dr,
                                              parent.col_offset + parent.step_stride * dc,
                                              parent.step_stride * state.k, child_h, child_w});
        }
    }
    canonical_sort(next.submaps);
    next.steps_applied = state.steps_applied + 1;
    return next;
}

TraceState apply_sequence(const TraceState& state, const SamplerSequence& seq,
                          std::span<const Sampler> samplers) {
    TraceState current = state;
    for (size_t t = 0; t < seq.lines.size(); ++t) {
        if (seq.lines[t].size() != current.submaps.size())
            throw std::invalid_argument("apply_sequence: step " + std::to_string(t + 1) +
                                        " has " + std::to_string(seq.lines[t].size()) +
                                        " ids for " + std::to_string(current.submaps.size()) +
                                        " submaps");
        current = subsample_step(current, seq.lines[t], samplers);
    }
    return current;
}

SamplerSequence random_sequence(int k, int steps, uint64_t seed) {
    if (steps < 0) throw std::invalid_argument("random_sequence: steps must be >= 0");
    SamplerSequence seq;
    std::mt19937_64 gen(seed);
    size_t count = 1;
    for (int t = 0; t < steps; ++t) {
        std::vector<int> line(count);
        for (auto& id : line) id = static_cast<int>(gen() % static_cast<uint64_t>(k));
        seq.lines.push_back(std::move(line));
        count *= static_cast<size_t>(k);
    }
    return seq;
}

namespace {

// Lines (2)-(9) follow the run-length structure below; line 1 is "0" and
// line 10 alternates 01 throughout its 512 entries.
std::string lattice_line(int t) {
    switch (t) {
        case 1: return "0";
        case 2: return "00";
        case 3: return "0101";
        case 4: return "01100011";
        case 5: return "0010100101001010";
        case 6: return "00011000110001100011000110001100";
        case 7:
            return "0000011111000001111100000111110000011111000001111100000111110000";
        case 8:
            return "0000000000111111111100000000001111111111000000000011111111110000"
                   "0000011111111110000000000111111111100000000001111111111000000000";
        case 9:
            return "0000000000000000000011111111111111111111000000000000000000001111"
                   "1111111111111110000000000000000000011111111111111111111000000000"
                   "0000000000111111111111111111110000000000000000000011111111111111"
                   "1111100000000000000000000111111111111111111110000000000000000000";
        case 10: {
            std::string line;
            line.reserve(512);
            for (int i = 0; i < 256; ++i) line += "01";
            return line;
        }
        default: throw std::out_of_range("lattice_sequence: steps must be in [1, 10]");
    }
}

}  // namespace

SamplerSequence lattice_sequence(int steps) {
    if (steps < 1 || steps > 10)
        throw std::out_of_range("lattice_sequence: steps must be in [1, 10]");
    SamplerSequence seq;
    for (int t = 1; t <= steps; ++t) {
        const std::string line = lattice_line(t);
        std::vector<int> ids(line.size());
        for (size_t i = 0; i < line.size(); ++i) ids[i] = line[i] - '0';
        seq.lines.push_back(std::move(ids));
    }
    return seq;
}

SamplerSequence tri_sequence() {
    SamplerSequence seq;
    seq.lines = {
        {0},
        {0, 2, 2},
        {0, 2, 2, 1, 0, 0, 1, 0, 2},
        {1, 1, 0, 0, 2, 1, 1, 1, 2, 1, 2, 1, 1, 1,
         2, 0, 2, 0, 1, 2, 0, 0, 0, 0, 0, 1, 2},
    };
    return seq;
}

SamplerSequence fixed_sequence(int k, int steps, int id) {
    if (steps < 0) throw std::invalid_argument("fixed_sequence: steps must be >= 0");
    SamplerSequence seq;
    size_t count = 1;
    for (int t = 0; t < steps; ++t) {
        seq.lines.emplace_back(count, id);
        count *= static_cast<size_t>(k);
    }
    return seq;
}

std::vector<std::pair<int, int>> trace_positions(const TraceState& state) {
    std::vector<std::pair<int, int>> positions;
    for (const SubmapMeta& meta : state.submaps) {
        for (int i = 0; i < meta.height; ++i) {
            int row = meta.row_offset + i * meta.step_stride;
            if (row >= state.original_height) break;
            for (int j = 0; j < meta.width; ++j) {
                int col = meta.col_offset + j * meta.step_stride;
                if (col >= state.original_width) break;
                positions.emplace_back(row, col);
            }
        }
    }
    std::sort(positions.begin(), positions.end());
    return positions;
}

CoverageReport coverage_stats(const TraceState& state) {
    CoverageReport report;
    report.per_row.assign(static_cast<size_t>(state.original_height), 0);
    report.per_col.assign(static_cast<size_t>(state.original_width), 0);
    auto positions = trace_positions(state);
    report.samples = static_cast<int64_t>(positions.size());
    for (auto [r, c] : positions) {
        ++report.per_row[static_cast<size_t>(r)];
        ++report.per_col[static_cast<size_t>(c)];
    }
    for (int64_t count : report.per_row) report.rows_covered += count > 0;
    for (int64_t count : report.per_col) report.cols_covered += count > 0;

    int block = state.submaps.empty() ? 1 : state.submaps.front().step_stride;
    if (block > 0 && report.samples > 0) {
        int block_rows = (state.original_height + block - 1) / block;
        int block_cols = (state.original_width + block - 1) / block;
        std::vector<int64_t> bins(static_cast<size_t>(block_rows) * block_cols, 0);
        for (auto [r, c] : positions)
            ++bins[static_cast<size_t>(r / block) * block_cols + c / block];
        double expected = static_cast<double>(report.samples) * block * block /
                          (static_cast<double>(state.original_height) * state.original_width);
        double worst = 0.0;
        for (int64_t count : bins)
            worst = std::max(worst, std::abs(static_cast<double>(count) - expected) / expected);
        report.block_discrepancy = worst;
    }
    return report;
}

std::string coverage_json(const CoverageReport& report) {
    nlohmann::json j;
    j["rows_covered"] = report.rows_covered;
    j["cols_covered"] = report.cols_covered;
    j["samples"] = report.samples;
    j["block_discrepancy"] = report.block_discrepancy;
    j["per_row"] = report.per_row;
    j["per_col"] = report.per_col;
    return j.dump();
}

SamplerSequence parse_sequence(std::istream& in) {
    SamplerSequence seq;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<int> ids;
        ids.reserve(line.size());
        for (char ch : line) {
            if (ch < '0' || ch > '9')
                throw std::invalid_argument("sequence parse error at line " +
                                            std::to_string(line_number) +
                                            ": invalid character '" + std::string(1, ch) + "'");
            ids.push_back(ch - '0');
        }
        seq.lines.push_back(std::move(ids));
    }
    return seq;
}

SamplerSequence parse_sequence_text(const std::string& text) {
    std::istringstream in(text);
    return parse_sequence(in);
}

std::string format_sequence(const SamplerSequence& seq) {
    std::string out;
    for (const auto& line : seq.lines) {
        for (int id : line) out += static_cast<char>('0' + id);
        out += '\n';
    }
    return out;
}

}  // namespace ccnn
