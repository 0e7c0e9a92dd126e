#include "cluegain/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cluegain/errors.hpp"

namespace cluegain {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

bool is_missing_token(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan";
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

const char* column_kind_name(ColumnKind k) {
    return k == ColumnKind::binary ? "binary" : "continuous";
}

std::optional<ColumnKind> Schema::kind_of(const std::string& column) const {
    for (const auto& [name, kind] : kinds) {
        if (name == column) return kind;
    }
    return std::nullopt;
}

Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file '" + path + "'");
    Schema schema;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("schema '" + path + "' line " + std::to_string(line_no) +
                            ": expected '<column> = <kind>'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "label") {
            schema.label_column = value;
        } else if (value == "continuous") {
            schema.kinds.emplace_back(key, ColumnKind::continuous);
        } else if (value == "binary") {
            schema.kinds.emplace_back(key, ColumnKind::binary);
        } else {
            throw DataError("schema '" + path + "' line " + std::to_string(line_no) +
                            ": unknown kind '" + value + "'");
        }
    }
    return schema;
}

bool DataTable::is_complete() const { return !first_missing().has_value(); }

std::optional<std::pair<std::size_t, std::size_t>> DataTable::first_missing() const {
    for (std::size_t i = 0; i < mask.rows(); ++i) {
        for (std::size_t j = 0; j < mask.cols(); ++j) {
            if (mask.at(i, j) == 0.0) return std::make_pair(i, j);
        }
    }
    return std::nullopt;
}

std::uint64_t schema_digest(std::size_t n_cols, const std::vector<ColumnKind>& kinds) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const std::uint64_t cols = n_cols;
    h = fnv1a(h, &cols, sizeof(cols));
    for (ColumnKind k : kinds) {
        const std::uint8_t byte = static_cast<std::uint8_t>(k);
        h = fnv1a(h, &byte, 1);
    }
    return h;
}

std::uint64_t schema_digest(const DataTable& table) {
    return schema_digest(table.n_cols(), table.column_kinds);
}

namespace {
bool is_comment_or_blank(const std::string& line) {
    const std::string trimmed = trim(line);
    return trimmed.empty() || trimmed.front() == '#';
}
}  // namespace

DataTable load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    do {
        if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
        ++line_no;
    } while (is_comment_or_blank(line));
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty()) throw DataError("'" + path + "' has an empty header row");

    std::size_t label_idx = header.size();
    if (schema.label_column) {
        const auto it = std::find(header.begin(), header.end(), *schema.label_column);
        if (it == header.end()) {
            throw DataError("'" + path + "' has no column named '" + *schema.label_column + "'");
        }
        label_idx = static_cast<std::size_t>(it - header.begin());
    }

    DataTable table;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j == label_idx) continue;
        table.column_names.push_back(header[j]);
        table.column_kinds.push_back(schema.kind_of(header[j]).value_or(ColumnKind::continuous));
    }
    if (table.column_names.empty()) throw DataError("'" + path + "' has no feature columns");

    std::vector<double> values;
    std::vector<double> mask;
    std::vector<std::string> raw_labels;
    std::size_t n_rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_comment_or_blank(line)) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError("'" + path + "' row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
        }
        std::size_t feature = 0;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j == label_idx) {
                raw_labels.push_back(cells[j]);
                continue;
            }
            if (is_missing_token(cells[j])) {
                values.push_back(0.0);
                mask.push_back(0.0);
            } else {
                double v = 0.0;
                try {
                    std::size_t consumed = 0;
                    v = std::stod(cells[j], &consumed);
                    if (consumed != cells[j].size()) throw std::invalid_argument("trailing text");
                } catch (const std::exception&) {
                    throw DataError("'" + path + "' row " + std::to_string(line_no) +
                                    ", column '" + header[j] + "': cannot parse '" + cells[j] +
                                    "' as a number");
                }
                if (table.column_kinds[feature] == ColumnKind::binary && v != 0.0 && v != 1.0) {
                    throw DataError("'" + path + "' row " + std::to_string(line_no) +
                                    ", column '" + header[j] + "': binary column holds " +
                                    cells[j]);
                }
                values.push_back(v);
                mask.push_back(1.0);
            }
            ++feature;
        }
        ++n_rows;
    }

    const std::size_t d = table.column_names.size();
    table.values = Matrix(n_rows, d);
    table.mask = Matrix(n_rows, d);
    std::copy(values.begin(), values.end(), table.values.storage().begin());
    std::copy(mask.begin(), mask.end(), table.mask.storage().begin());

    if (label_idx < header.size()) {
        LabelColumn labels;
        labels.name = header[label_idx];
        labels.ids.reserve(raw_labels.size());
        for (const std::string& raw : raw_labels) {
            if (is_missing_token(raw)) {
                throw DataError("'" + path + "' label column '" + labels.name +
                                "' has a missing entry");
            }
            auto it = std::find(labels.classes.begin(), labels.classes.end(), raw);
            if (it == labels.classes.end()) {
                labels.classes.push_back(raw);
                it = labels.classes.end() - 1;
            }
            labels.ids.push_back(static_cast<int>(it - labels.classes.begin()));
        }
        table.labels = std::move(labels);
    }
    return table;
}

DataTable load_csv(const std::string& path) {
    DataTable table = load_csv(path, Schema{});
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
        bool binary = false;
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            if (table.mask.at(i, j) == 0.0) continue;
            const double v = table.values.at(i, j);
            if (v != 0.0 && v != 1.0) {
                binary = false;
                break;
            }
            binary = true;
        }
        table.column_kinds[j] = binary ? ColumnKind::binary : ColumnKind::continuous;
    }
    return table;
}

void write_csv(const DataTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (std::size_t j = 0; j < table.column_names.size(); ++j) {
        out << (j ? "," : "") << table.column_names[j];
    }
    if (table.labels) out << "," << table.labels->name;
    out << "\n";
    std::ostringstream cell;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        for (std::size_t j = 0; j < table.n_cols(); ++j) {
            if (j) out << ",";
            if (table.mask.at(i, j) == 0.0) continue;
            cell.str("");
            cell.precision(17);
            cell << table.values.at(i, j);
            out << cell.str();
        }
        if (table.labels) out << "," << table.labels->classes[table.labels->ids[i]];
        out << "\n";
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

std::pair<DataTable, NormalizationParams> normalize(const DataTable& table) {
    NormalizationParams params;
    params.kinds = table.column_kinds;
    params.col_min.assign(table.n_cols(), 0.0);
    params.col_max.assign(table.n_cols(), 1.0);

    DataTable out = table;
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
        if (table.column_kinds[j] == ColumnKind::binary) continue;
        double lo = 0.0, hi = 0.0;
        bool seen = false;
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            if (table.mask.at(i, j) == 0.0) continue;
            const double v = table.values.at(i, j);
            if (!seen) {
                lo = hi = v;
                seen = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        if (!seen) {
            throw DataError("column '" + table.column_names[j] +
                            "' has no observed values; cannot normalize");
        }
        params.col_min[j] = lo;
        params.col_max[j] = hi;
        const double range = hi - lo;
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            if (table.mask.at(i, j) == 0.0) {
                out.values.at(i, j) = 0.0;
                continue;
            }
            out.values.at(i, j) = range > 0.0 ? (table.values.at(i, j) - lo) / range : 0.0;
        }
    }
    return {std::move(out), std::move(params)};
}

Matrix denormalize(const Matrix& values, const NormalizationParams& params) {
    if (values.cols() != params.kinds.size()) {
        throw InputError("denormalize: column count does not match params");
    }
    Matrix out = values;
    for (std::size_t j = 0; j < params.kinds.size(); ++j) {
        if (params.kinds[j] == ColumnKind::binary) continue;
        const double lo = params.col_min[j];
        const double range = params.col_max[j] - lo;
        for (std::size_t i = 0; i < out.rows(); ++i) {
            out.at(i, j) = lo + out.at(i, j) * range;
        }
    }
    return out;
}

DataTable denormalize(const DataTable& table, const NormalizationParams& params) {
    DataTable out = table;
    out.values = denormalize(table.values, params);
    for (std::size_t i = 0; i < out.values.rows(); ++i) {
        for (std::size_t j = 0; j < out.values.cols(); ++j) {
            if (out.mask.at(i, j) == 0.0) out.values.at(i, j) = 0.0;
        }
    }
    return out;
}

Matrix generate_mcar_mask(std::size_t n_rows, std::size_t n_cols, double miss_rate,
                          RngStream& stream) {
    if (miss_rate < 0.0 || miss_rate > 1.0) {
        throw InputError("miss_rate must lie in [0,1], got " + std::to_string(miss_rate));
    }
    Matrix mask(n_rows, n_cols);
    for (double& cell : mask.storage()) cell = stream.bernoulli(miss_rate) ? 0.0 : 1.0;
    return mask;
}

Matrix make_observed(const Matrix& values, const Matrix& mask) {
    if (!values.same_shape(mask)) throw InputError("make_observed: shape mismatch");
    Matrix out(values.rows(), values.cols());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.storage()[i] = mask.storage()[i] == 0.0 ? 0.0 : values.storage()[i];
    }
    return out;
}

std::vector<std::size_t> sample_batch(std::size_t n_rows, std::size_t batch_size,
                                      RngStream& stream) {
    if (batch_size == 0) throw InputError("sample_batch: batch_size must be >= 1");
    const std::size_t take = std::min(batch_size, n_rows);
    std::vector<std::size_t> idx(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) idx[i] = i;
    // Partial Fisher-Yates: only the first `take` slots are needed.
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(stream.below(n_rows - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    return idx;
}

Matrix sample_noise(std::size_t n_rows, std::size_t n_cols, double high, RngStream& stream) {
    Matrix z(n_rows, n_cols);
    for (double& cell : z.storage()) cell = stream.uniform(0.0, high);
    return z;
}

HintSample sample_hint(const Matrix& mask_batch, double hint_rate, RngStream& stream) {
    if (hint_rate < 0.0 || hint_rate > 1.0) {
        throw InputError("hint_rate must lie in [0,1], got " + std::to_string(hint_rate));
    }
    HintSample sample;
    sample.revealed = Matrix(mask_batch.rows(), mask_batch.cols());
    sample.hint = Matrix(mask_batch.rows(), mask_batch.cols());
    for (std::size_t i = 0; i < mask_batch.size(); ++i) {
        const double b = stream.bernoulli(hint_rate) ? 1.0 : 0.0;
        sample.revealed.storage()[i] = b;
        sample.hint.storage()[i] = b * mask_batch.storage()[i] + 0.5 * (1.0 - b);
    }
    return sample;
}

DataTable drop_missing_above(const DataTable& table, double max_missing_fraction) {
    if (max_missing_fraction < 0.0 || max_missing_fraction > 1.0) {
        throw InputError("drop threshold must lie in [0,1]");
    }
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
        std::size_t missing = 0;
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            if (table.mask.at(i, j) == 0.0) ++missing;
        }
        const double fraction =
            table.n_rows() == 0 ? 0.0 : static_cast<double>(missing) / table.n_rows();
        if (fraction <= max_missing_fraction) keep.push_back(j);
    }
    if (keep.empty()) throw DataError("drop-missing-above would remove every column");

    DataTable out;
    out.values = Matrix(table.n_rows(), keep.size());
    out.mask = Matrix(table.n_rows(), keep.size());
    for (std::size_t jj = 0; jj < keep.size(); ++jj) {
        out.column_names.push_back(table.column_names[keep[jj]]);
        out.column_kinds.push_back(table.column_kinds[keep[jj]]);
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            out.values.at(i, jj) = table.values.at(i, keep[jj]);
            out.mask.at(i, jj) = table.mask.at(i, keep[jj]);
        }
    }
    out.labels = table.labels;
    return out;
}

}  // namespace cluegain
