#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tobit::data {

// An observed sample: censored outcome y >= 0, treatment d, optional
// instrument z and optional covariate matrix x (n rows, p columns).
class Sample {
public:
    Sample(Eigen::VectorXd y, Eigen::VectorXd d, std::optional<Eigen::VectorXd> z = std::nullopt,
           Eigen::MatrixXd x = Eigen::MatrixXd(), std::vector<std::string> x_names = {});

    Eigen::Index n() const { return y_.size(); }
    Eigen::Index p() const { return x_.cols(); }
    bool has_z() const { return z_.has_value(); }

    const Eigen::VectorXd& y() const { return y_; }
    const Eigen::VectorXd& d() const { return d_; }
    const Eigen::VectorXd& z() const;
    const Eigen::MatrixXd& x() const { return x_; }
    const std::vector<std::string>& x_names() const { return x_names_; }

    std::string y_name = "y";
    std::string d_name = "d";
    std::string z_name = "z";

    // Rows selected by index, in the given order (used by the bootstrap).
    Sample subset(const std::vector<Eigen::Index>& rows) const;

    // Same sample without the covariate block.
    Sample without_covariates() const;

private:
    Eigen::VectorXd y_;
    Eigen::VectorXd d_;
    std::optional<Eigen::VectorXd> z_;
    Eigen::MatrixXd x_;
    std::vector<std::string> x_names_;
};

double censoring_fraction(const Sample& s);

// Throws InputError unless 0 < P(Y=0) < 1.
void require_censoring(const Sample& s);

struct ColumnMapping {
    std::string y;
    std::string d;
    std::optional<std::string> z;
    std::vector<std::string> x;
};

struct LoadReport {
    Sample sample;
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;
};

// Comma-separated file with a header row. Empty cells and NA/NaN/. in a
// mapped column drop the row (counted in rows_dropped).
LoadReport load_csv(const std::string& path, const ColumnMapping& mapping);

// Writes every column with shortest round-trip formatting.
void write_csv(const std::string& path, const Sample& s);

struct ColumnSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    double max = 0.0;
};

struct SampleSummary {
    Eigen::Index n = 0;
    Eigen::Index censored = 0;
    double censoring_fraction = 0.0;
    ColumnSummary y;
    ColumnSummary d;
    std::optional<ColumnSummary> z;
    std::vector<ColumnSummary> x;
};

SampleSummary summarize(const Sample& s);

// Type-7 (linear interpolation) empirical quantile of an unsorted vector.
double quantile(const Eigen::VectorXd& v, double level);
// Same, for a vector already sorted ascending.
double quantile_sorted(const std::vector<double>& sorted, double level);

}  // namespace tobit::data
