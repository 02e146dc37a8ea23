#pragma once

// Command-line driver.  Four subcommands cover the laboratory workflows:
//
//   lab <family> [--k ...] [--q ...]   concentration families + structure fits
//   lsc --case <family>                weighted lower-semicontinuity check
//   evolve --config FILE               quasistatic evolution from a config file
//   verify [--seed N]                  the full acceptance suite
//
// Output files are CSV, written under --out, the RESHLAB_OUT environment
// variable, or the working directory, in that order of preference.  Exit
// codes: 0 success / all checks passed, 1 a declared check failed, 2 bad
// arguments or config, 3 numerical failure (the failing residual is printed).
// All outputs are deterministic for a fixed command line and seed.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reshlab/concentration.hpp"
#include "reshlab/config.hpp"
#include "reshlab/errors.hpp"
#include "reshlab/lsc.hpp"
#include "reshlab/solver.hpp"
#include "reshlab/verify.hpp"

namespace reshlab {
namespace detail {

inline std::filesystem::path resolve_out_dir(const std::string& flag) {
    std::string dir = flag;
    if (dir.empty()) {
        const char* env = std::getenv("RESHLAB_OUT");
        dir = (env != nullptr && *env != '\0') ? env : ".";
    }
    std::filesystem::path path(dir);
    std::filesystem::create_directories(path);
    return path;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text,
                            std::ostream& log) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::invalid_argument("cannot open output file: " + path.string());
    file << text;
    log << "wrote " << path.string() << "\n";
}

inline std::string padded_index(std::size_t i) {
    std::string s = std::to_string(i);
    while (s.size() < 4) s.insert(s.begin(), '0');
    return s;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"reshlab: measure-valued strain laboratory"};
    app.require_subcommand(1);

    std::string lab_example;
    std::vector<int> lab_ks;
    double lab_q = 1.5;
    double lab_tol = 1e-9;
    std::string lab_out;
    CLI::App* cmd_lab = app.add_subcommand(
        "lab", "run a concentration family and identify its weak-* limit");
    cmd_lab->add_option("example", lab_example, "family name: pinch_point or pinch_line")
        ->required();
    cmd_lab->add_option("--k", lab_ks, "refinement indices (powers of two)")->delimiter(',');
    cmd_lab->add_option("--q", lab_q, "line-family damage exponent in (1,2)");
    cmd_lab->add_option("--tol", lab_tol, "pairing quadrature tolerance");
    cmd_lab->add_option("--out", lab_out, "output directory");

    std::string lsc_case;
    std::vector<int> lsc_ks;
    double lsc_q = 1.5;
    double lsc_tol = 1e-9;
    std::string lsc_out;
    CLI::App* cmd_lsc = app.add_subcommand(
        "lsc", "check the damage-weighted lower-semicontinuity inequality");
    cmd_lsc->add_option("--case", lsc_case, "case name: pinch_point or pinch_line")->required();
    cmd_lsc->add_option("--k", lsc_ks, "refinement indices (powers of two)")->delimiter(',');
    cmd_lsc->add_option("--q", lsc_q, "line-family damage exponent in (1,2)");
    cmd_lsc->add_option("--tol", lsc_tol, "inequality tolerance");
    cmd_lsc->add_option("--out", lsc_out, "output directory");

    std::string evolve_config;
    std::string evolve_out;
    CLI::App* cmd_evolve =
        app.add_subcommand("evolve", "run a quasistatic evolution from a config file");
    cmd_evolve->add_option("--config", evolve_config, "flat key=value configuration file")
        ->required();
    cmd_evolve->add_option("--out", evolve_out, "output directory");

    std::uint64_t verify_seed = 1234;
    std::string verify_out;
    CLI::App* cmd_verify = app.add_subcommand("verify", "run the full acceptance suite");
    cmd_verify->add_option("--seed", verify_seed, "master seed for the randomized checks");
    cmd_verify->add_option("--out", verify_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*cmd_lab) {
            if (lab_example != "pinch_line" && cmd_lab->count("--q") > 0)
                throw std::invalid_argument("lab: --q applies to pinch_line only");
            std::vector<int> ks = lab_ks;
            if (ks.empty())
                ks = (lab_example == "pinch_line") ? std::vector<int>{16, 64, 256}
                                                   : std::vector<int>{4, 16, 64};
            const double q = (lab_example == "pinch_line") ? lab_q : 0.0;
            const LabResult res = run_lab(lab_example, ks, q, lab_tol);
            const std::filesystem::path dir = detail::resolve_out_dir(lab_out);
            {
                std::ostringstream s;
                write_lab_report_csv(s, res);
                detail::write_text_file(dir / ("lab_" + lab_example + "_report.csv"), s.str(),
                                        out);
            }
            {
                std::ostringstream s;
                write_lab_diagnostics_csv(s, res);
                detail::write_text_file(dir / ("lab_" + lab_example + "_diagnostics.csv"),
                                        s.str(), out);
            }
            for (std::size_t i = 0; i < res.ks.size(); ++i) {
                std::ostringstream s;
                write_lab_pairings_csv(s, res, i);
                detail::write_text_file(
                    dir / ("lab_" + lab_example + "_k" + fmt_int(res.ks[i]) + ".csv"), s.str(),
                    out);
            }
            out << lab_example << ": winner=" << res.winner
                << " residual_ratio=" << fmt_g17(res.residual_ratio) << "\n";
            for (std::size_t f = 0; f < res.field_names.size(); ++f)
                out << "  " << res.field_names[f] << ": limit=" << fmt_g17(res.limit_pairings[f])
                    << " extrapolated=" << fmt_g17(res.extrapolated[f])
                    << " rate=" << fmt_g17(res.rates[f]) << "\n";
            return 0;
        }

        if (*cmd_lsc) {
            LscCase cs;
            if (lsc_case == "pinch_point") {
                if (cmd_lsc->count("--q") > 0)
                    throw std::invalid_argument("lsc: --q applies to pinch_line only");
                cs = lsc_ks.empty() ? lsc_pinch_point() : lsc_pinch_point(lsc_ks);
            } else if (lsc_case == "pinch_line") {
                cs = lsc_ks.empty() ? lsc_pinch_line(lsc_q) : lsc_pinch_line(lsc_q, lsc_ks);
            } else {
                throw std::invalid_argument("lsc: unknown case '" + lsc_case + "'");
            }
            const LscReport rep = weighted_lsc_check(cs, lsc_tol);
            const std::filesystem::path dir = detail::resolve_out_dir(lsc_out);
            std::ostringstream s;
            write_lsc_csv(s, rep);
            detail::write_text_file(dir / ("lsc_" + lsc_case + ".csv"), s.str(), out);
            out << lsc_case << ": lhs=" << fmt_g17(rep.lhs)
                << " limit_residual=" << fmt_g17(rep.limit_residual) << "\n";
            for (const LscRow& row : rep.rows)
                out << "  k=" << fmt_int(row.k) << " rhs=" << fmt_g17(row.rhs)
                    << " gap=" << fmt_g17(row.gap)
                    << " constraint_residual=" << fmt_g17(row.constraint_residual) << "\n";
            out << (rep.pass ? "PASS" : "FAIL")
                << ": weighted limit mass <= every sequence mass (gap=" << fmt_g17(rep.gap)
                << ")\n";
            return rep.pass ? 0 : 1;
        }

        if (*cmd_evolve) {
            const RunConfig cfg = load_run_config(evolve_config);
            const EvolveResult res = evolve(cfg);
            const std::filesystem::path dir = detail::resolve_out_dir(evolve_out);
            {
                std::ostringstream s;
                write_evolution_csv(s, res.rows);
                detail::write_text_file(dir / "evolution.csv", s.str(), out);
            }
            if (cfg.snapshot_every > 0) {
                for (std::size_t i = 0; i < res.states.size(); ++i) {
                    if (i % static_cast<std::size_t>(cfg.snapshot_every) != 0 &&
                        i + 1 != res.states.size())
                        continue;
                    detail::write_text_file(
                        dir / ("alpha_step" + detail::padded_index(i) + ".csv"),
                        scalar_field_to_csv(res.states[i].alpha), out);
                }
            }
            const StepRow& last = res.rows.back();
            out << "evolved " << fmt_int(cfg.steps) << " steps to t=" << fmt_g17(last.t)
                << ": work=" << fmt_g17(last.work) << " dissipated=" << fmt_g17(last.diss_cum)
                << " balance_residual=" << fmt_g17(last.balance_residual)
                << " min_alpha=" << fmt_g17(last.min_alpha) << "\n";
            if (cfg.audit_competitors > 0)
                out << "stability audit: worst_slack=" << fmt_g17(res.worst_slack) << "\n";
            return 0;
        }

        // verify
        const AcceptanceOutcome outcome = run_acceptance(verify_seed);
        print_acceptance(out, outcome);
        const std::filesystem::path dir = detail::resolve_out_dir(verify_out);
        detail::write_text_file(dir / "acceptance_transcript.txt", outcome.transcript, out);
        return outcome.all_pass ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace reshlab
