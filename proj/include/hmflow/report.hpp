#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace hmflow {

/// Outcome of one numerical check. Exploratory checks carry no verdict.
struct Check {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    bool exploratory = false;
    std::string detail;

    static Check at_most(std::string name, double measured, double tol, std::string detail = {}) {
        return {std::move(name), measured, tol, std::isfinite(measured) && measured <= tol, false, std::move(detail)};
    }
    static Check at_least(std::string name, double measured, double tol, std::string detail = {}) {
        return {std::move(name), measured, tol, std::isfinite(measured) && measured >= tol, false, std::move(detail)};
    }
    static Check flag(std::string name, bool ok, std::string detail = {}) {
        return {std::move(name), ok ? 1.0 : 0.0, 1.0, ok, false, std::move(detail)};
    }
    static Check info(std::string name, double measured, std::string detail = {}) {
        return {std::move(name), measured, 0.0, true, true, std::move(detail)};
    }

    std::string line() const {
        std::ostringstream os;
        os.precision(6);
        os << (exploratory ? "INFO" : (passed ? "PASS" : "FAIL")) << "  " << name << "  measured=" << measured;
        if (!exploratory) os << " tol=" << tolerance;
        if (!detail.empty()) os << "  (" << detail << ")";
        return os.str();
    }
};

inline bool all_passed(const std::vector<Check>& checks) {
    for (const auto& c : checks)
        if (!c.exploratory && !c.passed) return false;
    return true;
}

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y, double* stderr_out = nullptr) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double b = sxy / sxx;
    if (stderr_out) {
        double rss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y[i] - my - b * (x[i] - mx);
            rss += e * e;
        }
        *stderr_out = n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
    }
    return b;
}

} // namespace hmflow
