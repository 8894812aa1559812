#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccnn/sampler.hpp"

namespace ccnn {

/// Provenance of one submap in original-image coordinates: its samples sit
/// at (row_offset + i * step_stride, col_offset + j * step_stride).
struct SubmapMeta {
    int row_offset = 0;
    int col_offset = 0;
    int step_stride = 1;
    int height = 0;
    int width = 0;

    bool operator==(const SubmapMeta&) const = default;
};

/// Geometry-only subsampling state: which original positions survive after
/// a number of subsampling steps. Submaps are kept in canonical order,
/// sorted ascending by (row_offset, col_offset).
struct TraceState {
    int original_height = 0;
    int original_width = 0;
    int k = 2;
    int steps_applied = 0;
    std::vector<SubmapMeta> submaps;
};

/// Per-step sampler-id assignments; line t lists one id per submap present
/// before step t, in canonical submap order.
struct SamplerSequence {
    std::vector<std::vector<int>> lines;
};

TraceState make_trace(int height, int width, int k);

/// Applies one subsampling step: submap (r, c, s, h, w) with sampler samples
/// {(dr, dc)} yields one child (r + s*dr, c + s*dc, s*k, ceil(h/k), ceil(w/k))
/// per sample. Children are merged and re-sorted into canonical order.
/// assignment[i] is the sampler id for the i-th submap in canonical order.
TraceState subsample_step(const TraceState& state, std::span<const int> assignment,
                          std::span<const Sampler> samplers);

/// Folds subsample_step over every line of the sequence.
TraceState apply_sequence(const TraceState& state, const SamplerSequence& seq,
                          std::span<const Sampler> samplers);

/// Seeded uniform sampler-id sequence with the canonical line lengths
/// (k-rooks growth: line t has k^(t-1) entries, ids in [0, k)).
SamplerSequence random_sequence(int k, int steps, uint64_t seed);

/// Built-in low-discrepancy lattice sequence for k=2, 1 <= steps <= 10.
SamplerSequence lattice_sequence(int steps);

/// Built-in stride-3 sequence (4 steps, ids in {0,1,2}) paired with
/// stride3_set().
SamplerSequence tri_sequence();

/// Constant sequence applying sampler `id` to every submap at every step.
SamplerSequence fixed_sequence(int k, int steps, int id = 0);

/// All surviving original-image positions, sorted, duplicates impossible.
/// Positions that fall outside the original extent (padding of odd sizes)
/// are dropped.
std::vector<std::pair<int, int>> trace_positions(const TraceState& state);

struct CoverageReport {
    int rows_covered = 0;
    int cols_covered = 0;
    int64_t samples = 0;
    std::vector<int64_t> per_row;
    std::vector<int64_t> per_col;
    /// max over aligned b x b blocks of |count - expected| / expected,
    /// with b = current step_stride.
    double block_discrepancy = 0.0;
};

CoverageReport coverage_stats(const TraceState& state);

/// Single JSON object with keys rows_covered, cols_covered, samples,
/// block_discrepancy, per_row, per_col.
std::string coverage_json(const CoverageReport& report);

/// Sequence file format: one line per step, one digit per submap, no
/// separators. Parse errors carry the 1-based line number.
SamplerSequence parse_sequence(std::istream& in);
SamplerSequence parse_sequence_text(const std::string& text);
std::string format_sequence(const SamplerSequence& seq);

}  // namespace ccnn
