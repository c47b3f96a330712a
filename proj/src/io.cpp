#include "transar/io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <system_error>

namespace transar {

namespace {

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
        fields.emplace_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw std::invalid_argument("CSV is missing column '" + std::string(name) + "'");
}

bool CsvTable::has_column(std::string_view name) const {
    for (const auto& h : header)
        if (h == name) return true;
    return false;
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fields = split_line(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw std::invalid_argument("CSV line " + std::to_string(line_no) + " has " +
                                        std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(table.header.size()));
        table.rows.push_back(std::move(fields));
    }
    if (!have_header) throw std::invalid_argument("CSV has no header row");
    return table;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return read_csv(in);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

double parse_double(std::string_view text) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    return value;
}

Index parse_index(std::string_view text) {
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw std::invalid_argument("not an integer: '" + std::string(text) + "'");
    return static_cast<Index>(value);
}

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

void write_weight_csv(std::ostream& out, const SpatialWeightMatrix& w) {
    out << "row,col,weight\n";
    const auto& m = w.matrix();
    for (Index i = 0; i < m.outerSize(); ++i)
        for (SparseRowMatrix::InnerIterator it(m, i); it; ++it)
            out << it.row() << ',' << it.col() << ',' << format_double(it.value()) << '\n';
}

SpatialWeightMatrix read_weight_csv(std::istream& in, Index n, bool row_normalized) {
    const CsvTable table = read_csv(in);
    const std::size_t r = table.column("row");
    const std::size_t c = table.column("col");
    const std::size_t v = table.column("weight");
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        const Index i = parse_index(row[r]);
        const Index j = parse_index(row[c]);
        if (i < 0 || j < 0 || i >= n || j >= n) throw std::invalid_argument("weight entry out of range");
        entries.emplace_back(i, j, parse_double(row[v]));
    }
    return SpatialWeightMatrix::from_triplets(n, entries, row_normalized);
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    data.validate();
    std::filesystem::create_directories(dir);
    {
        auto out = open_out(dir / "data.csv");
        out << 'y';
        for (Index j = 1; j <= data.q(); ++j) out << ",x_" << j;
        out << '\n';
        for (Index i = 0; i < data.n(); ++i) {
            out << format_double(data.y[i]);
            for (Index j = 0; j < data.q(); ++j) out << ',' << format_double(data.x(i, j));
            out << '\n';
        }
    }
    nlohmann::ordered_json meta;
    meta["id"] = data.id;
    meta["n"] = data.n();
    meta["p"] = data.p();
    meta["q"] = data.q();
    meta["intercept"] = data.intercept;
    auto flags = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < data.weights.size(); ++l) {
        auto out = open_out(dir / ("weights_" + std::to_string(l + 1) + ".csv"));
        write_weight_csv(out, data.weights[l]);
        flags.push_back(data.weights[l].row_normalized());
    }
    meta["row_normalized"] = flags;
    auto out = open_out(dir / "meta.json");
    out << meta.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw std::runtime_error("cannot open " + (dir / "meta.json").string());
    const auto meta = nlohmann::json::parse(meta_in);

    Dataset data;
    data.id = meta.value("id", dir.filename().string());
    data.intercept = meta.value("intercept", false);
    const Index p = meta.at("p").get<Index>();

    const CsvTable table = read_csv_file(dir / "data.csv");
    const std::size_t y_col = table.column("y");
    const auto n = static_cast<Index>(table.rows.size());
    const auto q = static_cast<Index>(table.header.size()) - 1;
    data.y.resize(n);
    data.x.resize(n, q);
    for (Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        data.y[i] = parse_double(row[y_col]);
        Index j = 0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == y_col) continue;
            data.x(i, j++) = parse_double(row[c]);
        }
    }
    const auto flags = meta.value("row_normalized", std::vector<bool>(static_cast<std::size_t>(p), true));
    for (Index l = 0; l < p; ++l) {
        const auto path = dir / ("weights_" + std::to_string(l + 1) + ".csv");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        data.weights.push_back(read_weight_csv(in, n, flags.at(static_cast<std::size_t>(l))));
    }
    data.validate();
    return data;
}

void write_params_csv(std::ostream& out, const ModelParams& params) {
    const auto names = parameter_names(params.p(), params.q());
    const Eigen::VectorXd theta = params.theta();
    out << "name,value\n";
    for (std::size_t i = 0; i < names.size(); ++i)
        out << names[i] << ',' << format_double(theta[static_cast<Index>(i)]) << '\n';
}

}  // namespace transar
