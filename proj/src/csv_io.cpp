#include "ebal/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace ebal {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    std::string out = s.substr(b, e - b + 1);
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::vector<std::string> data_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        lines.push_back(line);
    }
    return lines;
}

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw InvalidInputError("csv line " + std::to_string(line) + ": column '" + column +
                                "' has non-numeric value '" + cell + "'");
    }
    return v;
}

}  // namespace

ObservationalDataset parse_dataset_csv(const std::string& text) {
    const auto lines = data_lines(text);
    if (lines.empty()) throw InvalidInputError("csv: empty input");
    const auto header = split_line(lines[0]);
    Index t_col = -1, y_col = -1;
    std::vector<Index> cov_cols;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const auto& h = header[j];
        if (h.empty()) throw InvalidInputError("csv: empty column name at position " + std::to_string(j + 1));
        for (const auto& n : names) {
            if (n == h) throw InvalidInputError("csv: duplicate column '" + h + "'");
        }
        if (h == "T") {
            if (t_col >= 0) throw InvalidInputError("csv: duplicate column 'T'");
            t_col = static_cast<Index>(j);
        } else if (h == "Y") {
            if (y_col >= 0) throw InvalidInputError("csv: duplicate column 'Y'");
            y_col = static_cast<Index>(j);
        } else {
            cov_cols.push_back(static_cast<Index>(j));
            names.push_back(h);
        }
    }
    if (t_col < 0) throw InvalidInputError("csv: missing treatment column 'T'");
    const Index n = static_cast<Index>(lines.size()) - 1;
    if (n < 1) throw InvalidInputError("csv: no data rows");

    Matrix cov(n, static_cast<Index>(cov_cols.size()));
    std::vector<int> t(static_cast<std::size_t>(n));
    Vector y = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> observed(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
        const std::size_t line_no = static_cast<std::size_t>(i) + 2;
        const auto cells = split_line(lines[static_cast<std::size_t>(i) + 1]);
        if (cells.size() != header.size()) {
            throw InvalidInputError("csv line " + std::to_string(line_no) + ": expected " +
                                    std::to_string(header.size()) + " fields, got " +
                                    std::to_string(cells.size()));
        }
        const double tv = parse_number(cells[static_cast<std::size_t>(t_col)], line_no, "T");
        if (tv != 0.0 && tv != 1.0) {
            throw InvalidInputError("csv line " + std::to_string(line_no) + ": T must be 0 or 1");
        }
        t[static_cast<std::size_t>(i)] = tv == 1.0 ? 1 : 0;
        if (y_col >= 0) {
            const auto& cell = cells[static_cast<std::size_t>(y_col)];
            if (!cell.empty()) {
                y(i) = parse_number(cell, line_no, "Y");
                observed[static_cast<std::size_t>(i)] = true;
            }
        }
        for (std::size_t k = 0; k < cov_cols.size(); ++k) {
            cov(i, static_cast<Index>(k)) =
                parse_number(cells[static_cast<std::size_t>(cov_cols[k])], line_no, names[k]);
        }
    }
    return ObservationalDataset(std::move(cov), std::move(t), std::move(y), std::move(observed),
                                std::move(names));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInputError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw InvalidInputError("write failed for '" + path + "'");
}

ObservationalDataset read_dataset_csv(const std::string& path) {
    return parse_dataset_csv(read_file(path));
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    if (ec != std::errc()) throw Error("format_double failed");
    return std::string(buf, ptr);
}

void write_weights_csv(std::ostream& os, const std::vector<Index>& unit_ids, const Vector& weights) {
    if (static_cast<Index>(unit_ids.size()) != weights.size()) {
        throw InvalidInputError("write_weights_csv: id/weight length mismatch");
    }
    os << "unit_id,weight\n";
    for (std::size_t k = 0; k < unit_ids.size(); ++k) {
        os << unit_ids[k] << ',' << format_double(weights(static_cast<Index>(k))) << '\n';
    }
}

WeightsFile parse_weights_csv(const std::string& text) {
    const auto lines = data_lines(text);
    if (lines.empty()) throw InvalidInputError("weights csv: empty input");
    const auto header = split_line(lines[0]);
    if (header.size() != 2 || header[0] != "unit_id" || header[1] != "weight") {
        throw InvalidInputError("weights csv: header must be 'unit_id,weight'");
    }
    WeightsFile wf;
    wf.weights.resize(static_cast<Index>(lines.size()) - 1);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_line(lines[r]);
        if (cells.size() != 2) throw InvalidInputError("weights csv line " + std::to_string(r + 1) + ": expected 2 fields");
        const double id = parse_number(cells[0], r + 1, "unit_id");
        if (id < 0 || id != std::floor(id)) {
            throw InvalidInputError("weights csv line " + std::to_string(r + 1) + ": bad unit_id");
        }
        wf.unit_ids.push_back(static_cast<Index>(id));
        wf.weights(static_cast<Index>(r) - 1) = parse_number(cells[1], r + 1, "weight");
    }
    return wf;
}

void write_study_csv(std::ostream& os, const StudyResult& result) {
    os << "replication,estimator,estimate,variance\n";
    for (const auto& row : result.rows) {
        os << row.replication << ',' << to_string(row.estimator) << ',' << format_double(row.estimate)
           << ',' << format_double(row.variance) << '\n';
    }
}

}  // namespace ebal
