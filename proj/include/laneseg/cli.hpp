#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fitdemo.hpp"
#include "gradcheck.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "preprocess.hpp"
#include "scenegen.hpp"
#include "svg.hpp"

namespace laneseg {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitIo = 3, kExitValidation = 4, kExitCheckFailed = 5 };

namespace detail {

inline std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::vector<Scene> load_any(const std::string& path) { return load_scenes(path, LoadOptions{}); }

inline std::vector<Scene> map_frames(const std::vector<Scene>& in, const std::function<Scene(const Scene&)>& fn) {
    std::vector<Scene> out;
    out.reserve(in.size());
    for (const auto& s : in) out.push_back(fn(s));
    return out;
}

}  // namespace detail

/// Command-line entry point. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Lane-segment perception toolkit"};
    app.name("laneseg");
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic ground-truth scene file");
    std::string gen_preset = "straight", gen_out;
    std::uint64_t gen_seed = 0;
    std::size_t gen_count = 1;
    gen->add_option("--preset", gen_preset, "straight|curve|diverge|merge|intersection|mixed")->required();
    gen->add_option("--seed", gen_seed, "Seed");
    gen->add_option("--count", gen_count, "Number of frames (seeds seed, seed+1, ...)")->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output scene file")->required();

    // perturb
    auto* pert = app.add_subcommand("perturb", "Turn ground truth into a scored prediction");
    std::string pert_in, pert_out;
    PerturbSpec pspec;
    pert->add_option("--in", pert_in, "Ground-truth scene file")->required();
    pert->add_option("--sigma", pspec.sigma_pos, "Point noise std-dev in meters")->check(CLI::NonNegativeNumber);
    pert->add_option("--drop", pspec.p_drop, "Per-segment drop probability")->check(CLI::Range(0.0, 1.0));
    pert->add_option("--type-flip", pspec.p_type_flip, "Per-boundary type flip probability")->check(CLI::Range(0.0, 1.0));
    pert->add_option("--edge-flip", pspec.p_edge_flip, "Per-entry adjacency flip probability")->check(CLI::Range(0.0, 1.0));
    pert->add_option("--seed", pspec.seed, "Seed");
    pert->add_option("--out", pert_out, "Output prediction file")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate predictions against ground truth");
    std::string ev_task, ev_gt, ev_pred, ev_out;
    ev->add_option("--task", ev_task, "laneseg|mapele|centerline")
        ->required()
        ->check(CLI::IsMember({"laneseg", "mapele", "centerline"}));
    ev->add_option("--gt", ev_gt, "Ground-truth scene file")->required();
    ev->add_option("--pred", ev_pred, "Prediction scene file (a ground-truth file counts as confidence 1)")->required();
    ev->add_option("--out", ev_out, "Report JSON path (stdout when omitted)");

    // preprocessing verbs
    std::string io_in, io_out;
    auto* merge = app.add_subcommand("merge", "Merge chained lane pieces into lane segments");
    auto* decomp = app.add_subcommand("decompose", "Decompose lane segments into map elements");
    auto* center = app.add_subcommand("centerlines", "Keep centerlines and their successor graph");
    for (auto* sub : {merge, decomp, center}) {
        sub->add_option("--in", io_in, "Input scene file")->required();
        sub->add_option("--out", io_out, "Output scene file")->required();
    }

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
    std::uint64_t gc_seed = 0;
    std::size_t gc_trials = 50;
    gc->add_option("--seed", gc_seed, "Seed");
    gc->add_option("--trials", gc_trials, "Number of random configurations")->check(CLI::PositiveNumber);

    // fitdemo
    auto* fit = app.add_subcommand("fitdemo", "Single-scene optimization of the refinement stack");
    FitOptions fopt;
    bool fit_sgd = false;
    std::string fit_grid, fit_grid_out, fit_out;
    fit->add_option("--seed", fopt.seed, "Seed");
    fit->add_option("--steps", fopt.steps, "Optimizer steps");
    fit->add_option("--lr", fopt.learning_rate, "Step size")->check(CLI::PositiveNumber);
    fit->add_flag("--sgd", fit_sgd, "Plain fixed-step gradient descent instead of Adam");
    fit->add_option("--grid", fit_grid, "BEV grid file to use instead of the seeded random grid");
    fit->add_option("--grid-out", fit_grid_out, "Write the feature grid used");
    fit->add_option("--out", fit_out, "Loss history JSON");

    // render
    auto* ren = app.add_subcommand("render", "Render one frame to SVG");
    std::string ren_in, ren_out;
    std::size_t ren_frame = 0;
    ren->add_option("--in", ren_in, "Scene file")->required();
    ren->add_option("--out", ren_out, "Output SVG")->required();
    ren->add_option("--frame", ren_frame, "Frame index");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "laneseg: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*gen) {
            std::vector<Scene> scenes;
            for (std::size_t i = 0; i < gen_count; ++i) {
                const std::string preset =
                    gen_preset == "mixed" ? kPresets[(gen_seed + i) % kPresets.size()] : gen_preset;
                if (std::find(kPresets.begin(), kPresets.end(), preset) == kPresets.end()) {
                    err << "laneseg: unknown preset '" << gen_preset << "'\n";
                    return kExitUsage;
                }
                scenes.push_back(generate(preset, gen_seed + i));
            }
            save_scenes(gen_out, scenes);
            return kExitOk;
        }
        if (*pert) {
            const auto gts = load_scenes(pert_in, {true, FileKind::GroundTruth});
            save_scenes(pert_out, detail::map_frames(gts, [&](const Scene& s) { return perturb(s, pspec); }));
            return kExitOk;
        }
        if (*ev) {
            const auto gts = load_scenes(ev_gt, {true, FileKind::GroundTruth});
            auto preds = detail::load_any(ev_pred);
            for (auto& p : preds)
                if (p.kind == SceneKind::GroundTruth) p = as_prediction(p);
            EvalReport report = ev_task == "laneseg"  ? evaluate_laneseg(gts, preds)
                                : ev_task == "mapele" ? evaluate_mapele(gts, preds)
                                                      : evaluate_centerline(gts, preds);
            const std::string text = serialize_report(report);
            if (ev_out.empty())
                out << text;
            else
                write_text_file(ev_out, text);
            return kExitOk;
        }
        if (*merge) {
            const auto in = detail::load_any(io_in);
            save_scenes(io_out, detail::map_frames(in, [](const Scene& s) {
                Scene r = s;
                r.graph = dfs_merge(pieces_from_graph(s.graph));
                return r;
            }));
            return kExitOk;
        }
        if (*decomp) {
            const auto in = detail::load_any(io_in);
            save_scenes(io_out, detail::map_frames(in, [](const Scene& s) {
                return map_elements_to_scene(decompose_to_map_elements(s.graph), s);
            }));
            return kExitOk;
        }
        if (*center) {
            const auto in = detail::load_any(io_in);
            save_scenes(io_out, detail::map_frames(in, [](const Scene& s) {
                Scene r = s;
                r.graph = extract_centerlines(s.graph);
                return r;
            }));
            return kExitOk;
        }
        if (*gc) {
            const auto report = run_gradcheck(gc_seed, gc_trials);
            out << "gradcheck: trials=" << report.trials << " attention partials=" << report.attention.checked
                << " failed=" << report.attention.failed << " head partials=" << report.heads.checked
                << " failed=" << report.heads.failed << "\n";
            for (const auto* s : {&report.attention, &report.heads})
                for (const auto& f : s->failures) err << "  " << f << "\n";
            return report.ok() ? kExitOk : kExitCheckFailed;
        }
        if (*fit) {
            fopt.adam = !fit_sgd;
            FitProblem problem = make_fit_problem(fopt);
            if (!fit_grid.empty()) {
                problem.grid = load_grid(fit_grid);
                if (problem.grid.C != fopt.channels) {
                    err << "laneseg: grid has " << problem.grid.C << " channels, the demo uses " << fopt.channels
                        << "\n";
                    return kExitValidation;
                }
            }
            if (!fit_grid_out.empty()) save_grid(fit_grid_out, problem.grid);
            const auto r = run_fit_demo(fopt, problem);
            out << "fitdemo: optimizer=" << (fopt.adam ? "adam" : "sgd") << " steps=" << r.steps
                << " initial=" << detail::fmt6(r.initial_loss) << " final=" << detail::fmt6(r.final_loss)
                << " ratio=" << detail::fmt6(r.ratio()) << "\n";
            if (!fit_out.empty()) {
                nlohmann::json j{{"optimizer", fopt.adam ? "adam" : "sgd"},
                                 {"seed", fopt.seed},
                                 {"initial_loss", r.initial_loss},
                                 {"final_loss", r.final_loss},
                                 {"ratio", r.ratio()},
                                 {"history", r.history}};
                write_text_file(fit_out, dump_canonical(j));
            }
            return r.ratio() < 0.1 ? kExitOk : kExitCheckFailed;
        }
        if (*ren) {
            const auto in = detail::load_any(ren_in);
            if (ren_frame >= in.size()) {
                err << "laneseg: frame " << ren_frame << " out of range (" << in.size() << " frames)\n";
                return kExitUsage;
            }
            save_svg(ren_out, in[ren_frame]);
            return kExitOk;
        }
    } catch (const IoError& e) {
        err << "laneseg: " << e.what() << "\n";
        return e.code() == IoErrorCode::Io ? kExitIo : kExitValidation;
    } catch (const std::invalid_argument& e) {
        err << "laneseg: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}

inline int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace laneseg
