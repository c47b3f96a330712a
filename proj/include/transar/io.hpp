#pragma once

// CSV plumbing shared by the CLI, the dataset directory format and the
// election tables. Doubles are written in shortest round-trip form so that
// export followed by import is bit-identical.

#include "transar/dataset.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace transar {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position by header name; throws std::invalid_argument when absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

/// Comma-delimited, header row required, no quoting. Blank lines are skipped.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

double parse_double(std::string_view text);
Index parse_index(std::string_view text);
std::string format_double(double value);

void write_weight_csv(std::ostream& out, const SpatialWeightMatrix& w);
SpatialWeightMatrix read_weight_csv(std::istream& in, Index n, bool row_normalized);

/**
 * Dataset directory layout:
 *   data.csv         y,x_1..x_q
 *   weights_<l>.csv  row,col,weight triplets, one file per weight matrix
 *   meta.json        id, n, p, q, intercept flag, row_normalized flags
 */
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// name,value rows using parameter_names.
void write_params_csv(std::ostream& out, const ModelParams& params);

}  // namespace transar
