#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cluegain/matrix.hpp"
#include "cluegain/rng.hpp"

namespace cluegain {

enum class ColumnKind : std::uint8_t { continuous = 0, binary = 1 };

const char* column_kind_name(ColumnKind k);

// Declares feature-column kinds and the optional label column of a CSV.
// Columns not mentioned default to continuous.
struct Schema {
    std::vector<std::pair<std::string, ColumnKind>> kinds;
    std::optional<std::string> label_column;

    std::optional<ColumnKind> kind_of(const std::string& column) const;
};

// Text format, one entry per line: "<column> = continuous|binary" or
// "label = <column>". '#' starts a comment.
Schema load_schema(const std::string& path);

struct LabelColumn {
    std::string name;
    std::vector<int> ids;                  // per row, index into classes
    std::vector<std::string> classes;      // distinct labels in first-seen order
};

// Numeric table plus per-cell observation mask (1 = observed). Missing
// cells hold the placeholder value 0.
struct DataTable {
    Matrix values;                         // n x d
    Matrix mask;                           // n x d of {0,1}
    std::vector<ColumnKind> column_kinds;  // d
    std::vector<std::string> column_names; // d
    std::optional<LabelColumn> labels;

    std::size_t n_rows() const { return values.rows(); }
    std::size_t n_cols() const { return values.cols(); }
    bool is_complete() const;
    // (row, col) of the first missing cell, if any.
    std::optional<std::pair<std::size_t, std::size_t>> first_missing() const;
};

// Digest over column count and kinds; identifies compatible schemas across
// serialization boundaries.
std::uint64_t schema_digest(const DataTable& table);
std::uint64_t schema_digest(std::size_t n_cols, const std::vector<ColumnKind>& kinds);

// Empty cells and "NA" become missing (mask 0, value 0). The label column,
// if declared, is split off into `labels`.
DataTable load_csv(const std::string& path, const Schema& schema);

// Schema inferred from content: observed values all in {0,1} -> binary,
// anything else continuous, no label column.
DataTable load_csv(const std::string& path);

void write_csv(const DataTable& table, const std::string& path);

// Per-column min/max for continuous columns; binary columns pass through.
struct NormalizationParams {
    std::vector<double> col_min;
    std::vector<double> col_max;
    std::vector<ColumnKind> kinds;
};

// Observed continuous entries map to [0,1] by (v-min)/(max-min); a constant
// column maps to 0. Placeholders in masked cells stay 0.
std::pair<DataTable, NormalizationParams> normalize(const DataTable& table);

Matrix denormalize(const Matrix& values, const NormalizationParams& params);

// Inverse transform applied to a whole table copy (observed cells only are
// meaningful, same as normalize).
DataTable denormalize(const DataTable& table, const NormalizationParams& params);

// Each cell is independently missing (0) with probability miss_rate.
Matrix generate_mcar_mask(std::size_t n_rows, std::size_t n_cols, double miss_rate,
                          RngStream& stream);

// X-tilde: observed values where mask is 1, placeholder 0 elsewhere.
Matrix make_observed(const Matrix& values, const Matrix& mask);

// Uniform row sample without replacement; batch_size above n clamps to n.
std::vector<std::size_t> sample_batch(std::size_t n_rows, std::size_t batch_size,
                                      RngStream& stream);

// i.i.d. Uniform(0, high) noise matrix.
Matrix sample_noise(std::size_t n_rows, std::size_t n_cols, double high, RngStream& stream);

struct HintSample {
    Matrix hint;      // B .* M + 0.5 (1 - B)
    Matrix revealed;  // B
};

HintSample sample_hint(const Matrix& mask_batch, double hint_rate, RngStream& stream);

// Drops feature columns whose missing fraction exceeds the threshold.
DataTable drop_missing_above(const DataTable& table, double max_missing_fraction);

}  // namespace cluegain
