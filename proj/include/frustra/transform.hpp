#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "frustra/error.hpp"
#include "frustra/features.hpp"
#include "frustra/parallel.hpp"
#include "frustra/random.hpp"
#include "frustra/text.hpp"

namespace frustra {

struct SplitSpec {
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;
    std::uint64_t seed = 42;

    void validate() const {
        if (!(train_frac > 0 && val_frac > 0 && test_frac > 0) ||
            std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
            throw ConfigError("split fractions must be positive and sum to 1");
        }
    }
};

/// Row indices into the input, each list in ascending order.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Downsamples the majority class to the minority count m, then splits each
/// class into floor(train*m) / floor(val*m) / remainder. Membership depends
/// only on the ids, labels and seed, not on row order.
inline SplitIndices balanced_split(std::span<const std::string> ids, std::span<const int> labels,
                                   const SplitSpec& spec) {
    spec.validate();
    if (ids.size() != labels.size()) throw DomainError("ids and labels differ in length");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw DomainError("labels must be 0 or 1");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < 10) {
            throw DomainError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                              " rows; at least 10 are needed for a balanced split");
        }
    }
    const std::size_t m = std::min(by_class[0].size(), by_class[1].size());
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(m) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(m) + 1e-9));

    SplitIndices out;
    for (std::size_t c = 0; c < 2; ++c) {
        auto& rows = by_class[c];
        std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
        Rng rng(derive_seed(spec.seed, c));
        rng.shuffle(std::span<std::size_t>(rows));
        out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.val.insert(out.val.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                       rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                        rows.begin() + static_cast<std::ptrdiff_t>(m));
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

inline SplitIndices balanced_split(const FeatureMatrix& m, const SplitSpec& spec) {
    return balanced_split(m.ids(), m.labels(), spec);
}

/// Yeo-Johnson power transform of a single value.
inline double yeo_johnson(double y, double lambda) {
    if (lambda == 1.0) return y;
    constexpr double eps = 1e-12;
    if (y >= 0.0) {
        if (std::abs(lambda) < eps) return std::log1p(y);
        return std::expm1(lambda * std::log1p(y)) / lambda;
    }
    if (std::abs(lambda - 2.0) < eps) return -std::log1p(-y);
    return -std::expm1((2.0 - lambda) * std::log1p(-y)) / (2.0 - lambda);
}

/// Profile log-likelihood of lambda under a Gaussian model of the transformed values.
inline double yeo_johnson_log_likelihood(std::span<const double> y, double lambda) {
    const auto n = static_cast<double>(y.size());
    double mean = 0.0;
    for (const double v : y) mean += yeo_johnson(v, lambda);
    mean /= n;
    double var = 0.0;
    double jacobian = 0.0;
    for (const double v : y) {
        const double t = yeo_johnson(v, lambda) - mean;
        var += t * t;
        jacobian += std::copysign(std::log1p(std::abs(v)), v);
    }
    var /= n;
    const double llf = -0.5 * n * std::log(var) + (lambda - 1.0) * jacobian;
    return std::isfinite(llf) ? llf : -std::numeric_limits<double>::infinity();
}

/// Maximizes the log-likelihood over [-5, 5]: coarse grid, then golden-section
/// refinement around the best grid point to 1e-6.
inline double fit_yeo_johnson_lambda(std::span<const double> y) {
    constexpr double lo = -5.0;
    constexpr double hi = 5.0;
    constexpr double step = 0.1;
    double best = 1.0;
    double best_llf = yeo_johnson_log_likelihood(y, best);
    for (int k = 0; k <= 100; ++k) {
        const double lambda = lo + step * k;
        const double llf = yeo_johnson_log_likelihood(y, lambda);
        if (llf > best_llf) {
            best_llf = llf;
            best = lambda;
        }
    }
    double a = std::max(lo, best - step);
    double b = std::min(hi, best + step);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = yeo_johnson_log_likelihood(y, c);
    double fd = yeo_johnson_log_likelihood(y, d);
    while (b - a > 1e-6) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = yeo_johnson_log_likelihood(y, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = yeo_johnson_log_likelihood(y, d);
        }
    }
    const double refined = 0.5 * (a + b);
    return yeo_johnson_log_likelihood(y, refined) >= best_llf ? refined : best;
}

struct FeatureTransform {
    std::string name;
    double lambda = 1.0;
    double mean = 0.0;
    double stddev = 1.0;
    /// Zero-variance column: values pass through untouched.
    bool constant = false;

    double apply(double x) const { return constant ? x : (yeo_johnson(x, lambda) - mean) / stddev; }
};

struct YeoJohnsonParams {
    std::vector<FeatureTransform> features;
    std::string config_hash = "none";
};

inline YeoJohnsonParams fit_yeo_johnson(const FeatureMatrix& train, unsigned threads = 1) {
    if (train.rows() == 0) throw DomainError("cannot fit a transform on an empty matrix");
    YeoJohnsonParams params;
    params.features.resize(train.cols());
    parallel_for(train.cols(), threads, [&](std::size_t c) {
        std::vector<double> col(train.rows());
        for (std::size_t r = 0; r < train.rows(); ++r) {
            col[r] = train.at(r, c);
            if (!std::isfinite(col[r])) {
                throw DomainError("non-finite value in column '" + train.columns()[c] + "'");
            }
        }
        auto& ft = params.features[c];
        ft.name = train.columns()[c];
        const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
        if (*mn == *mx) {
            ft.constant = true;
            return;
        }
        ft.lambda = fit_yeo_johnson_lambda(col);
        double mean = 0.0;
        for (const double v : col) mean += yeo_johnson(v, ft.lambda);
        mean /= static_cast<double>(col.size());
        double var = 0.0;
        for (const double v : col) {
            const double t = yeo_johnson(v, ft.lambda) - mean;
            var += t * t;
        }
        const double sd = std::sqrt(var / static_cast<double>(col.size()));
        if (!(sd > 0.0) || !std::isfinite(sd)) {
            ft.constant = true;
            ft.lambda = 1.0;
            return;
        }
        ft.mean = mean;
        ft.stddev = sd;
    });
    return params;
}

/// Applies train-fitted parameters; never refits.
inline FeatureMatrix apply_transform(const FeatureMatrix& rows, const YeoJohnsonParams& params) {
    if (rows.cols() != params.features.size()) {
        throw DomainError("matrix has " + std::to_string(rows.cols()) + " columns, transform expects " +
                          std::to_string(params.features.size()));
    }
    for (std::size_t c = 0; c < rows.cols(); ++c) {
        if (rows.columns()[c] != params.features[c].name) {
            throw DomainError("column '" + rows.columns()[c] + "' does not match transform feature '" +
                              params.features[c].name + "'");
        }
    }
    FeatureMatrix out = rows;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!std::isfinite(row[c])) throw DomainError("non-finite value in column '" + rows.columns()[c] + "'");
            row[c] = params.features[c].apply(row[c]);
        }
    }
    return out;
}

inline constexpr std::string_view yj_params_magic = "# frustra yeo-johnson params v1";

inline void write_yeo_johnson(std::ostream& out, const YeoJohnsonParams& p) {
    out << yj_params_magic << '\n'
        << "# tool_version=" << tool_version << '\n'
        << "# config_hash=" << p.config_hash << '\n'
        << "feature\tlambda\tmean\tstd\tflags\n";
    for (const auto& f : p.features) {
        out << f.name << '\t' << format_double(f.lambda) << '\t' << format_double(f.mean) << '\t'
            << format_double(f.stddev) << '\t' << (f.constant ? "constant" : "-") << '\n';
    }
}

inline YeoJohnsonParams read_yeo_johnson(std::string_view text) {
    YeoJohnsonParams p;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line_no == 1) {
            if (line != yj_params_magic) throw DataError("not a Yeo-Johnson parameter file");
            continue;
        }
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.starts_with("# config_hash=")) p.config_hash = std::string(line.substr(14));
            continue;
        }
        if (line.starts_with("feature\t")) continue;
        const auto f = split_delimited(line, '\t');
        if (f.size() != 5) throw DataError("malformed transform record on line " + std::to_string(line_no));
        FeatureTransform ft;
        ft.name = f[0];
        ft.lambda = parse_or_throw<double>(f[1], "lambda");
        ft.mean = parse_or_throw<double>(f[2], "mean");
        ft.stddev = parse_or_throw<double>(f[3], "std");
        ft.constant = f[4] == "constant";
        p.features.push_back(std::move(ft));
    }
    if (line_no == 0) throw DataError("empty transform parameter file");
    return p;
}

}  // namespace frustra
