#include "tobit/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "tobit/errors.hpp"

namespace tobit::data {
namespace {

void check_finite(const Eigen::VectorXd& v, const std::string& name) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw InputError("column '" + name + "' has a non-finite value at row " + std::to_string(i + 1));
        }
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan" || cell == ".";
}

double parse_number(const std::string& cell, const std::string& column, std::size_t line) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw InputError("non-numeric value '" + cell + "' in column '" + column + "' at line " +
                         std::to_string(line));
    }
    return v;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

ColumnSummary summarize_column(const std::string& name, const Eigen::VectorXd& v) {
    // Work from the sorted values so the result does not depend on row order.
    std::vector<double> s(v.data(), v.data() + v.size());
    std::sort(s.begin(), s.end());
    ColumnSummary c;
    c.name = name;
    const double n = static_cast<double>(s.size());
    c.mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : s) ss += (x - c.mean) * (x - c.mean);
    c.sd = s.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    c.min = s.front();
    c.max = s.back();
    c.q25 = quantile_sorted(s, 0.25);
    c.median = quantile_sorted(s, 0.5);
    c.q75 = quantile_sorted(s, 0.75);
    return c;
}

}  // namespace

Sample::Sample(Eigen::VectorXd y, Eigen::VectorXd d, std::optional<Eigen::VectorXd> z, Eigen::MatrixXd x,
               std::vector<std::string> x_names)
    : y_(std::move(y)), d_(std::move(d)), z_(std::move(z)), x_(std::move(x)), x_names_(std::move(x_names)) {
    const Eigen::Index n = y_.size();
    if (n == 0) throw InputError("sample has no observations");
    if (d_.size() != n) throw InputError("treatment column length differs from outcome length");
    if (z_ && z_->size() != n) throw InputError("instrument column length differs from outcome length");
    if (x_.size() == 0) x_.resize(n, 0);
    if (x_.rows() != n) throw InputError("covariate matrix row count differs from outcome length");
    if (x_names_.empty()) {
        for (Eigen::Index j = 0; j < x_.cols(); ++j) x_names_.push_back("x" + std::to_string(j + 1));
    }
    if (static_cast<Eigen::Index>(x_names_.size()) != x_.cols()) {
        throw InputError("covariate name count differs from covariate column count");
    }
    check_finite(y_, "y");
    check_finite(d_, "d");
    if (z_) check_finite(*z_, "z");
    for (Eigen::Index j = 0; j < x_.cols(); ++j) check_finite(x_.col(j), x_names_[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (y_[i] < 0.0) {
            throw InputError("outcome must be >= 0; row " + std::to_string(i + 1) + " has " + format_double(y_[i]));
        }
    }
}

const Eigen::VectorXd& Sample::z() const {
    if (!z_) throw InputError("sample has no instrument column");
    return *z_;
}

Sample Sample::subset(const std::vector<Eigen::Index>& rows) const {
    const auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd y(m), d(m);
    std::optional<Eigen::VectorXd> z;
    if (z_) z = Eigen::VectorXd(m);
    Eigen::MatrixXd x(m, x_.cols());
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = rows[static_cast<std::size_t>(k)];
        y[k] = y_[i];
        d[k] = d_[i];
        if (z_) (*z)[k] = (*z_)[i];
        if (x_.cols() > 0) x.row(k) = x_.row(i);
    }
    Sample out(std::move(y), std::move(d), std::move(z), std::move(x), x_names_);
    out.y_name = y_name;
    out.d_name = d_name;
    out.z_name = z_name;
    return out;
}

Sample Sample::without_covariates() const {
    Sample out(y_, d_, z_);
    out.y_name = y_name;
    out.d_name = d_name;
    out.z_name = z_name;
    return out;
}

double censoring_fraction(const Sample& s) {
    const auto zeros = (s.y().array() == 0.0).count();
    return static_cast<double>(zeros) / static_cast<double>(s.n());
}

void require_censoring(const Sample& s) {
    const double f = censoring_fraction(s);
    if (f <= 0.0) throw InputError("no censored observations (y == 0); the Tobit model is degenerate");
    if (f >= 1.0) throw InputError("every observation is censored (y == 0)");
}

LoadReport load_csv(const std::string& path, const ColumnMapping& mapping) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw InputError("input file '" + path + "' is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

    const auto header = split_csv_line(line);
    std::unordered_map<std::string, std::size_t> where;
    for (std::size_t j = 0; j < header.size(); ++j) where.emplace(trim(header[j]), j);
    auto locate = [&](const std::string& name) {
        auto it = where.find(name);
        if (it == where.end()) throw InputError("column '" + name + "' not found in '" + path + "'");
        return it->second;
    };

    std::vector<std::string> names{mapping.y, mapping.d};
    if (mapping.z) names.push_back(*mapping.z);
    for (const auto& x : mapping.x) names.push_back(x);
    std::vector<std::size_t> cols;
    for (const auto& nm : names) cols.push_back(locate(nm));

    std::vector<std::vector<double>> values(names.size());
    LoadReport report{Sample(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), 0, 0};
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++report.rows_read;
        const auto cells = split_csv_line(line);
        bool missing = false;
        std::vector<double> row(names.size());
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (cols[k] >= cells.size()) {
                throw InputError("line " + std::to_string(line_no) + " has too few fields");
            }
            const std::string cell = trim(cells[cols[k]]);
            if (is_missing(cell)) {
                missing = true;
                break;
            }
            row[k] = parse_number(cell, names[k], line_no);
        }
        if (missing) {
            ++report.rows_dropped;
            continue;
        }
        if (row[0] < 0.0) {
            throw InputError("outcome '" + mapping.y + "' must be >= 0; line " + std::to_string(line_no) +
                             " has " + format_double(row[0]));
        }
        for (std::size_t k = 0; k < names.size(); ++k) values[k].push_back(row[k]);
    }
    const auto n = static_cast<Eigen::Index>(values[0].size());
    if (n == 0) throw InputError("no usable rows in '" + path + "'");

    auto column = [&](std::size_t k) { return Eigen::Map<const Eigen::VectorXd>(values[k].data(), n).eval(); };
    std::optional<Eigen::VectorXd> z;
    std::size_t next = 2;
    if (mapping.z) z = column(next++);
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(mapping.x.size()));
    for (std::size_t j = 0; j < mapping.x.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = column(next++);

    Sample s(column(0), column(1), std::move(z), std::move(x), mapping.x);
    s.y_name = mapping.y;
    s.d_name = mapping.d;
    if (mapping.z) s.z_name = *mapping.z;
    report.sample = std::move(s);
    return report;
}

void write_csv(const std::string& path, const Sample& s) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << s.y_name << ',' << s.d_name;
    if (s.has_z()) out << ',' << s.z_name;
    for (const auto& nm : s.x_names()) out << ',' << nm;
    out << '\n';
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        out << format_double(s.y()[i]) << ',' << format_double(s.d()[i]);
        if (s.has_z()) out << ',' << format_double(s.z()[i]);
        for (Eigen::Index j = 0; j < s.p(); ++j) out << ',' << format_double(s.x()(i, j));
        out << '\n';
    }
    if (!out) throw InputError("write failed for '" + path + "'");
}

double quantile_sorted(const std::vector<double>& sorted, double level) {
    if (sorted.empty()) throw InputError("quantile of an empty vector");
    if (!(level >= 0.0 && level <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
    const double h = level * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(const Eigen::VectorXd& v, double level) {
    std::vector<double> s(v.data(), v.data() + v.size());
    std::sort(s.begin(), s.end());
    return quantile_sorted(s, level);
}

SampleSummary summarize(const Sample& s) {
    SampleSummary out;
    out.n = s.n();
    out.censored = (s.y().array() == 0.0).count();
    out.censoring_fraction = static_cast<double>(out.censored) / static_cast<double>(out.n);
    out.y = summarize_column(s.y_name, s.y());
    out.d = summarize_column(s.d_name, s.d());
    if (s.has_z()) out.z = summarize_column(s.z_name, s.z());
    for (Eigen::Index j = 0; j < s.p(); ++j) out.x.push_back(summarize_column(s.x_names()[j], s.x().col(j)));
    return out;
}

}  // namespace tobit::data
