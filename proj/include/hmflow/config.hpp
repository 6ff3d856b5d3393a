#pragma once

// Run configuration. Text format, one setting per line:
//
//   # comment
//   schema_version = 1
//   [green]
//   m = 5
//   h = 1/640          reals accept a/b
//   eps_sweep = 0.2, 0.1, 0.05
//
// Layers: schema defaults, then the file, then environment variables
// HMFLOW_<SECTION>_<KEY> (HMFLOW_GREEN_H=0.003125). Unknown sections, keys or
// HMFLOW_* variables are errors naming the offending key and its line.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "hmflow/kernel_cache.hpp"

namespace hmflow::config {

constexpr int schema_version = 1;

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& where, const std::string& what) : std::runtime_error(where + ": " + what) {}
};

enum class Kind { integer, real, boolean, text, reals };

struct KeySpec {
    const char* section;
    const char* key;
    Kind kind;
    const char* value;  // default
    const char* doc;
};

inline const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> s = {
        {"run", "threads", Kind::integer, "0", "worker threads, 0 = hardware concurrency"},
        {"run", "seed", Kind::integer, "1", "seed for perturbation experiments"},
        {"run", "strict", Kind::boolean, "false", "treat inconclusive verdicts as failures"},
        {"run", "cache_dir", Kind::text, "", "kernel cache directory, default <out-dir>/cache"},

        {"green", "m", Kind::integer, "5", "dimension"},
        {"green", "R", Kind::real, "1", "ball radius"},
        {"green", "R_large", Kind::real, "2", "larger ball of the comparison chain"},
        {"green", "eps_sweep", Kind::reals, "0.2, 0.1, 0.05", "annuli for the chain and the envelopes"},
        {"green", "eps_limit", Kind::reals, "0.2, 0.1, 0.05, 0.025", "eps -> 0 convergence sweep"},
        {"green", "h", Kind::real, "1/640", "radial spacing"},
        {"green", "dt", Kind::real, "1e-4", "time step"},
        {"green", "horizon", Kind::real, "0.2", "last table time"},
        {"green", "store", Kind::real, "0.01", "stored time spacing"},
        {"green", "source_cells", Kind::integer, "8", "source spacing in grid cells"},
        {"green", "tol_discrete", Kind::real, "1e-6", "sign, ordering and flux tolerance"},
        {"green", "tol_sym", Kind::real, "1e-5", "symmetry tolerance, relative to the table sup"},
        {"green", "sym_margin", Kind::real, "0.1", "symmetry pairs keep this fraction of the width off the boundary"},
        {"green", "tau_min", Kind::real, "0.01", "conservation defect checked from here on"},
        {"green", "deltas", Kind::reals, "1, 0.5, 0.25, 0.125", "mollifier ordering family"},
        {"green", "delta_limit", Kind::real, "1/64", "mollifier width of the convergence check"},
        {"green", "delta_limit_tol", Kind::real, "1e-4", "sup gap to the unmollified kernel"},
        {"green", "delta_window_tau", Kind::real, "0.05", "convergence checked for tau >= this"},
        {"green", "scaling_m", Kind::integer, "3", "scaling identity dimension"},
        {"green", "scaling_eps", Kind::real, "0.5", "scaling identity eps"},
        {"green", "scaling_R", Kind::real, "2", "scaling identity R"},
        {"green", "scaling_h", Kind::real, "1/256", "scaling identity spacing"},
        {"green", "scaling_dt", Kind::real, "1e-4", "scaling identity time step"},
        {"green", "scaling_tol", Kind::real, "1e-3", "relative mismatch"},
        {"green", "envelope_tol", Kind::real, "0.15", "envelope fit residual"},
        {"green", "exterior", Kind::boolean, "true", "also build and report the exterior table"},
        {"green", "exterior_R_far", Kind::real, "10", "absorbing radius of the exterior table"},
        {"green", "exterior_h", Kind::real, "1/128", "exterior spacing"},
        {"green", "exterior_dt", Kind::real, "2.5e-4", "exterior time step"},
        {"green", "exterior_horizon", Kind::real, "1", "exterior last time"},

        {"flow", "n", Kind::integer, "3", "base dimension; the solve runs in n + 2"},
        {"flow", "metric", Kind::text, "smooth_bump", "euclidean | smooth_bump | exp_bump | cylinder_tail"},
        {"flow", "params", Kind::reals, "0.05, 0.02, 0.02, 0.01", "four family coefficients"},
        {"flow", "t0", Kind::real, "0", "start time"},
        {"flow", "family_horizon", Kind::real, "0.9", "T of the metric family"},
        {"flow", "horizon", Kind::real, "0.5", "solve up to this time"},
        {"flow", "r_max", Kind::real, "20", "truncation radius"},
        {"flow", "intervals", Kind::integer, "400", "radial intervals"},
        {"flow", "dt", Kind::real, "5e-3", "time step"},
        {"flow", "tolerance", Kind::real, "1e-10", "Picard C1 Cauchy tolerance"},
        {"flow", "max_iterations", Kind::integer, "40", "Picard iterations per window"},
        {"flow", "norm_ceiling", Kind::real, "1e6", "numerical blow-up threshold"},
        {"flow", "window", Kind::real, "0", "fixed window length, 0 = adaptive"},
        {"flow", "euclidean_tol", Kind::real, "1e-8", "sup of rho~ for the Euclidean metric"},
        {"flow", "direct_check", Kind::boolean, "true", "report the gap to the direct 1-D solve"},
        {"flow", "manufactured", Kind::boolean, "false", "also run the manufactured-solution order check"},

        {"uniqueness", "perturbation", Kind::real, "1e-3", "amplitude of the first-guess perturbations"},
        {"uniqueness", "window", Kind::real, "0.1", "fixed window of the perturbed runs"},
        {"uniqueness", "tolerance", Kind::real, "1e-6", "E(T') and restart tolerance"},
        {"uniqueness", "restart_at", Kind::real, "0.25", "restart time of the consistency run"},
        {"uniqueness", "deltas", Kind::reals, "0.064, 0.016, 0.004", "contraction regression windows"},

        {"singularity", "m", Kind::integer, "3", "dimension"},
        {"singularity", "R", Kind::real, "1", "ball radius"},
        {"singularity", "h", Kind::real, "1/320", "radial spacing of the tables"},
        {"singularity", "dt", Kind::real, "1e-4", "time step of the tables"},
        {"singularity", "horizon", Kind::real, "0.1", "table horizon = t2 - t1"},
        {"singularity", "store", Kind::real, "0.01", "stored time spacing"},
        {"singularity", "t1", Kind::real, "0.5", "first sample time"},
        {"singularity", "slack", Kind::real, "0.1", "growth criterion slack"},
        {"singularity", "tolerance", Kind::real, "1e-3", "reconstruction tolerance, relative"},
        {"singularity", "singular_factor", Kind::real, "10", "mismatch beyond factor x tolerance is singular"},
        {"singularity", "annulus_lo", Kind::real, "0.25", "test annulus, fraction of R"},
        {"singularity", "annulus_hi", Kind::real, "0.75", "test annulus, fraction of R"},
        {"singularity", "sample", Kind::text, "", "optional CSV r,t,u classified as well"},
        {"singularity", "probe_eps", Kind::reals, "0.2, 0.1, 0.05, 0.025", "inner-term eps sweep"},
        {"singularity", "probe_target", Kind::real, "0.5", "inner-term target radius"},
        {"singularity", "probe_tau", Kind::real, "0.1", "inner-term elapsed time"},
        {"singularity", "probe_order", Kind::real, "0.9", "required decay order of the inner term"},

        {"oracle", "R", Kind::real, "1", "ball radius"},
        {"oracle", "intervals", Kind::integer, "256", "radial intervals of the table"},
        {"oracle", "table_dt", Kind::real, "1e-4", "time step of the table"},
        {"oracle", "cells", Kind::reals, "32, 64", "3-D cells per axis, refinement order"},
        {"oracle", "dt", Kind::real, "1e-3", "3-D time step"},
        {"oracle", "sources", Kind::reals, "0, 0.25, 0.5", "source radii (grid nodes)"},
        {"oracle", "tau", Kind::real, "0.05", "compared time"},
        {"oracle", "target_step", Kind::real, "0.125", "target radii spacing"},
        {"oracle", "tol", Kind::real, "0.02", "relative error, ball"},
        {"oracle", "annulus", Kind::boolean, "true", "also compare the annulus"},
        {"oracle", "annulus_eps", Kind::real, "0.25", "annulus inner radius"},
        {"oracle", "annulus_tol", Kind::real, "0.03", "relative error, annulus"},
    };
    return s;
}

namespace detail {

inline std::string trim(std::string s) {
    auto sp = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), sp));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), sp).base(), s.end());
    return s;
}

inline std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

// real or a/b
inline bool parse_real(const std::string& raw, double& out) {
    const auto s = trim(raw);
    const auto slash = s.find('/');
    if (slash == std::string::npos) return parse_double(s, out);
    double num = 0, den = 0;
    if (!parse_double(trim(s.substr(0, slash)), num) || !parse_double(trim(s.substr(slash + 1)), den) || den == 0.0)
        return false;
    out = num / den;
    return true;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    return out;
}

} // namespace detail

class Config {
public:
    static Config defaults() {
        Config c;
        for (const auto& k : schema()) c.values_[name(k)] = {k.value, "default"};
        return c;
    }

    /// Defaults overlaid with the file; `source` is used in messages.
    static Config parse(std::istream& is, const std::string& source) {
        Config c = defaults();
        std::string line, section;
        bool have_version = false;
        for (int no = 1; std::getline(is, line); ++no) {
            const std::string where = source + ":" + std::to_string(no);
            const auto hash = line.find('#');
            const auto body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
            if (body.empty()) continue;
            if (body.front() == '[') {
                if (body.back() != ']') throw ConfigError(where, "malformed section header '" + body + "'");
                section = detail::trim(body.substr(1, body.size() - 2));
                if (!known_section(section)) throw ConfigError(where, "unknown section [" + section + "]");
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos) throw ConfigError(where, "expected key = value, got '" + body + "'");
            const auto key = detail::trim(body.substr(0, eq));
            const auto value = detail::trim(body.substr(eq + 1));
            if (section.empty() && key == "schema_version") {
                if (value != std::to_string(schema_version))
                    throw ConfigError(where, "schema_version " + value + " is not supported (expected " +
                                                 std::to_string(schema_version) + ")");
                have_version = true;
                continue;
            }
            if (section.empty()) throw ConfigError(where, "key '" + key + "' outside a [section]");
            c.set(section + "." + key, value, where);
        }
        if (!have_version) throw ConfigError(source, "missing schema_version");
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError(path, "cannot open config file");
        return parse(is, path);
    }

    /// HMFLOW_<SECTION>_<KEY>=value overrides. Every HMFLOW_ variable must name a key.
    void apply_env(const std::vector<std::pair<std::string, std::string>>& env) {
        for (const auto& [var, value] : env) {
            if (var.rfind("HMFLOW_", 0) != 0) continue;
            const std::string* hit = nullptr;
            for (const auto& [k, v] : values_)
                if (env_name(k) == var) hit = &k;
            if (!hit) throw ConfigError("env " + var, "unknown key '" + var + "'");
            set(*hit, value, "env " + var);
        }
    }

    static std::vector<std::pair<std::string, std::string>> process_env() {
        std::vector<std::pair<std::string, std::string>> out;
        for (char** e = ::environ; e && *e; ++e) {
            const std::string s(*e);
            const auto eq = s.find('=');
            if (eq != std::string::npos) out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        return out;
    }

    /// Validates against the schema; `where` anchors the message.
    void set(const std::string& key, const std::string& value, const std::string& where = "set") {
        const KeySpec* spec = find(key);
        if (!spec) throw ConfigError(where, "unknown key '" + key + "'");
        check_value(*spec, key, value, where);
        values_[key] = {value, where};
    }

    long integer(const std::string& key) const {
        require(key, Kind::integer);
        return std::stol(raw(key));
    }
    double real(const std::string& key) const {
        require(key, Kind::real);
        double v = 0;
        detail::parse_real(raw(key), v);
        return v;
    }
    bool flag(const std::string& key) const {
        require(key, Kind::boolean);
        return raw(key) == "true";
    }
    std::string text(const std::string& key) const {
        require(key, Kind::text);
        return raw(key);
    }
    std::vector<double> reals(const std::string& key) const {
        require(key, Kind::reals);
        std::vector<double> out;
        for (const auto& p : detail::split(raw(key), ',')) {
            double v = 0;
            detail::parse_real(p, v);
            out.push_back(v);
        }
        return out;
    }

    const std::string& raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("config", "unknown key '" + key + "'");
        return it->second.first;
    }
    const std::string& origin(const std::string& key) const { return values_.at(key).second; }
    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_) out.push_back(k);
        return out;
    }

    /// Sorted "section.key = value" lines; the basis of the config hash.
    std::string canonical() const {
        std::ostringstream os;
        os << "schema_version = " << schema_version << "\n";
        for (const auto& [k, v] : values_) os << k << " = " << v.first << "\n";
        return os.str();
    }
    /// Hash of everything that can change a result (threads and cache location cannot).
    std::string hash() const {
        auto c = *this;
        c.values_.erase("run.threads");
        c.values_.erase("run.cache_dir");
        const auto s = c.canonical();
        return cache::hex64(cache::fnv1a(s.data(), s.size()));
    }

    /// The configuration in file syntax, loadable by parse.
    std::string dump() const {
        std::ostringstream os;
        os << "schema_version = " << schema_version << "\n";
        std::string section;
        for (const auto& k : schema()) {
            if (section != k.section) {
                section = k.section;
                os << "\n[" << section << "]\n";
            }
            os << k.key << " = " << raw(name(k)) << "\n";
        }
        return os.str();
    }

    static std::string env_name(const std::string& dotted) {
        auto s = dotted;
        std::replace(s.begin(), s.end(), '.', '_');
        return "HMFLOW_" + detail::upper(s);
    }

private:
    std::map<std::string, std::pair<std::string, std::string>> values_;  // key -> (value, origin)

    static std::string name(const KeySpec& k) { return std::string(k.section) + "." + k.key; }

    static const KeySpec* find(const std::string& key) {
        for (const auto& k : schema())
            if (name(k) == key) return &k;
        return nullptr;
    }

    static bool known_section(const std::string& s) {
        return std::any_of(schema().begin(), schema().end(), [&](const KeySpec& k) { return s == k.section; });
    }

    void require(const std::string& key, Kind kind) const {
        const KeySpec* spec = find(key);
        if (!spec || spec->kind != kind) throw std::logic_error("config: '" + key + "' read with the wrong type");
    }

    static void check_value(const KeySpec& spec, const std::string& key, const std::string& value,
                            const std::string& where) {
        auto bad = [&](const char* expected) {
            throw ConfigError(where, "key '" + key + "': expected " + expected + ", got '" + value + "'");
        };
        switch (spec.kind) {
        case Kind::integer: {
            long v = 0;
            auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            if (ec != std::errc() || p != value.data() + value.size()) bad("an integer");
            break;
        }
        case Kind::real: {
            double v = 0;
            if (!detail::parse_real(value, v)) bad("a real number");
            break;
        }
        case Kind::boolean:
            if (value != "true" && value != "false") bad("true or false");
            break;
        case Kind::reals: {
            const auto parts = detail::split(value, ',');
            if (parts.empty()) bad("a comma-separated list of reals");
            for (const auto& p : parts) {
                double v = 0;
                if (!detail::parse_real(p, v)) bad("a comma-separated list of reals");
            }
            break;
        }
        case Kind::text:
            break;
        }
    }
};

} // namespace hmflow::config
