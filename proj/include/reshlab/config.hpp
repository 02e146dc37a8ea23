#pragma once

// Flat `key = value` run configuration.  Lines may carry `#` comments; blank
// lines are skipped.  Parsing is strict: malformed lines, duplicate keys,
// non-numeric values, and unknown keys are all rejected, so a typo cannot
// silently fall back to a default.
//
// Recognized keys (all optional; defaults are the RunConfig defaults):
//   nx, ny                  mesh resolution
//   horizon, steps          final time and number of increments
//   amplitude               shear datum amplitude: w(x, t) = s(t) (a x2, 0)
//   profile                 load profile s(t): "linear" or "quadratic"
//   mu0, kappa0, eps0, sigma_y, c1, c2, kappa_d, grad_weight   material law
//   tol_am, tol_cg, tol_pg, tol_adm, tol_qs1                   tolerances
//   max_mech_iters, max_damage_iters, max_sweeps               iteration caps
//   damage_first            alternation order ("true"/"false"/"0"/"1")
//   seed                    RNG seed for audits
//   audit_competitors       per-step stability audit size (0 disables)
//   snapshot_every          damage snapshot cadence in steps (0 disables)

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>

#include "reshlab/solver.hpp"

namespace reshlab {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double config_double(const std::string& key, const std::string& raw) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(raw, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not a number: '" + raw + "'");
    }
    if (pos != raw.size())
        throw std::invalid_argument("config key '" + key + "': trailing junk in '" + raw + "'");
    if (!std::isfinite(v))
        throw std::invalid_argument("config key '" + key + "': value must be finite");
    return v;
}

inline long long config_int(const std::string& key, const std::string& raw) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(raw, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not an integer: '" + raw + "'");
    }
    if (pos != raw.size())
        throw std::invalid_argument("config key '" + key + "': trailing junk in '" + raw + "'");
    return v;
}

inline bool config_bool(const std::string& key, const std::string& raw) {
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw std::invalid_argument("config key '" + key + "': expected true/false/0/1, got '" + raw +
                                "'");
}

}  // namespace detail

inline std::map<std::string, std::string> parse_flat_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + fmt_int(lineno) +
                                        ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw std::invalid_argument("config line " + fmt_int(lineno) +
                                        ": empty key or value");
        if (!kv.emplace(key, val).second)
            throw std::invalid_argument("config line " + fmt_int(lineno) + ": duplicate key '" +
                                        key + "'");
    }
    return kv;
}

inline RunConfig run_config_from(std::map<std::string, std::string> kv) {
    RunConfig cfg;
    auto take = [&kv](const char* key) {
        auto it = kv.find(key);
        std::string out;
        bool found = it != kv.end();
        if (found) {
            out = it->second;
            kv.erase(it);
        }
        return std::pair<bool, std::string>{found, out};
    };
    auto take_double = [&](const char* key, double& slot) {
        if (auto [found, raw] = take(key); found) slot = detail::config_double(key, raw);
    };
    auto take_int = [&](const char* key, int& slot) {
        if (auto [found, raw] = take(key); found) {
            const long long v = detail::config_int(key, raw);
            if (v < -2147483647LL || v > 2147483647LL)
                throw std::invalid_argument(std::string("config key '") + key +
                                            "': out of range");
            slot = static_cast<int>(v);
        }
    };

    take_int("nx", cfg.nx);
    take_int("ny", cfg.ny);
    take_double("horizon", cfg.horizon);
    take_int("steps", cfg.steps);
    if (auto [found, raw] = take("amplitude"); found)
        cfg.datum_shape = AffineMap{0.0, detail::config_double("amplitude", raw), 0.0, 0.0,
                                    Vec2{0.0, 0.0}};
    if (auto [found, raw] = take("profile"); found) {
        if (raw == "linear")
            cfg.profile = LoadProfile::linear;
        else if (raw == "quadratic")
            cfg.profile = LoadProfile::quadratic;
        else
            throw std::invalid_argument("config key 'profile': expected linear or quadratic, got '" +
                                        raw + "'");
    }

    take_double("mu0", cfg.law.mu0);
    take_double("kappa0", cfg.law.kappa0);
    take_double("eps0", cfg.law.eps0);
    take_double("sigma_y", cfg.law.sigma_y);
    take_double("c1", cfg.law.c1);
    take_double("c2", cfg.law.c2);
    take_double("kappa_d", cfg.law.kappa_d);
    take_double("grad_weight", cfg.law.grad_weight);

    take_double("tol_am", cfg.tol.tol_am);
    take_double("tol_cg", cfg.tol.tol_cg);
    take_double("tol_pg", cfg.tol.tol_pg);
    take_double("tol_adm", cfg.tol.tol_adm);
    take_double("tol_qs1", cfg.tol.tol_qs1);
    take_int("max_mech_iters", cfg.tol.max_mech_iters);
    take_int("max_damage_iters", cfg.tol.max_damage_iters);
    take_int("max_sweeps", cfg.tol.max_sweeps);

    if (auto [found, raw] = take("damage_first"); found)
        cfg.damage_first = detail::config_bool("damage_first", raw);
    if (auto [found, raw] = take("seed"); found) {
        try {
            std::size_t pos = 0;
            cfg.seed = std::stoull(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument("junk");
        } catch (const std::exception&) {
            throw std::invalid_argument("config key 'seed': not an unsigned integer: '" + raw +
                                        "'");
        }
    }
    take_int("audit_competitors", cfg.audit_competitors);
    take_int("snapshot_every", cfg.snapshot_every);

    if (!kv.empty())
        throw std::invalid_argument("config: unknown key '" + kv.begin()->first + "'");
    return cfg;
}

inline RunConfig parse_run_config(std::istream& in) { return run_config_from(parse_flat_config(in)); }

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    return parse_run_config(in);
}

}  // namespace reshlab
