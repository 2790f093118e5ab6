#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "semiode/io.hpp"

namespace fs = std::filesystem;
using namespace semiode;

namespace {

// Exit codes: 0 success; 1 usage/config; 2 data; 3 numeric/fit failure.
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    std::string data_override;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig resolve(const CommonArgs& args, const std::string& mode) {
    RunConfig cfg = load_run_config(args.config_path);
    cfg.mode = mode;
    if (!args.out_override.empty()) cfg.out_dir = args.out_override;
    if (!args.data_override.empty()) cfg.data_path = args.data_override;
    if (args.seed_set) cfg.sim.seed = args.seed;
    fs::create_directories(cfg.out_dir);
    // Config echo: the fully-resolved configuration is written next to outputs.
    save_run_config(cfg, cfg.out_dir + "/config.resolved.json");
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return cfg.out_dir + "/" + name;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Run configuration (JSON)")->required();
    cmd->add_option("--out", args.out_override, "Output directory override");
    cmd->add_option("--data", args.data_override, "Dataset CSV override");
    cmd->add_option("--seed", args.seed, "Seed override")->each([&](const std::string&) {
        args.seed_set = true;
    });
}

int run_simulate(const CommonArgs& args) {
    RunConfig cfg = resolve(args, "simulate");
    const GeneratedData gen = generate(cfg.sim);
    emit(gen.data, out_path(cfg, "dataset.csv"));
    std::cout << "wrote " << out_path(cfg, "dataset.csv") << " (" << gen.data.n_curves()
              << " curves, " << gen.data.n_obs() << " observations)\n";
    return 0;
}

Dataset load_data(const RunConfig& cfg) {
    if (cfg.data_path.empty()) throw ConfigError("no dataset: set 'data' in config or --data");
    return ingest(cfg.data_path);
}

ModelSpec require_model(const RunConfig& cfg) {
    if (!cfg.has_model) throw ConfigError("this command requires a 'model' entry in the config");
    return cfg.model;
}

int run_fit(const CommonArgs& args) {
    RunConfig cfg = resolve(args, "fit");
    const Dataset data = load_data(cfg);
    const ModelSpec spec = require_model(cfg);
    SplineBasis basis = make_basis(spec);
    const PenaltyMatrix pen = penalty_matrix(basis, spec.A, spec.lambda_R);
    const FitResult fr = fit(basis, data, default_init(basis, data), pen.B, cfg.fit);
    write_trace_csv(fr.trace, out_path(cfg, "trace.csv"));
    write_params_csv(data, fr.params, out_path(cfg, "params.csv"));
    write_g_points_csv(basis, fr.params.beta, out_path(cfg, "g_points.csv"));
    std::cout << "loss=" << fr.final_loss << " lm_iters=" << fr.lm_iters
              << " nr_iters=" << fr.nr_iters << " converged="
              << ((fr.lm_converged && fr.nr_converged) ? "yes" : "no") << "\n";
    return 0;
}

int run_select(const CommonArgs& args) {
    RunConfig cfg = resolve(args, "select");
    const Dataset data = load_data(cfg);
    if (cfg.grid.empty()) throw ConfigError("select requires a non-empty 'grid' in the config");
    const CvReport report = model_search(data, cfg.grid, cfg.fit);
    write_cv_report_csv(report, out_path(cfg, "cv_report.csv"));
    std::cout << "selected " << report.rows[report.selected].id
              << " (cv=" << report.rows[report.selected].cv << ")\n";
    return 0;
}

int run_study(const CommonArgs& args) {
    RunConfig cfg = resolve(args, "study");
    const ModelSpec accuracy = cfg.has_model ? cfg.model : ModelSpec{};
    const StudyReport report = run_study(cfg.sim, cfg.grid, cfg.has_model ? &accuracy : nullptr,
                                         cfg.fit, cfg.replicates, cfg.ise_lo, cfg.ise_hi);
    write_study_report_csv(report, out_path(cfg, "study_report.csv"));
    std::cout << "replicates_ok=" << report.n_ok << "/" << report.rows.size()
              << " mise=" << report.mise << " mspe=" << report.mspe << "\n";
    return 0;
}

int run_plot(const CommonArgs& args) {
    RunConfig cfg = resolve(args, "plot");
    if (cfg.plot_what == "g" || cfg.plot_what == "regr") {
        const ModelSpec spec = require_model(cfg);
        SplineBasis basis = make_basis(spec);
        Eigen::VectorXd beta = Eigen::VectorXd::Ones(basis.size());
        if (!cfg.data_path.empty()) {
            const Dataset data = load_data(cfg);
            const PenaltyMatrix pen = penalty_matrix(basis, spec.A, spec.lambda_R);
            beta = fit(basis, data, default_init(basis, data), pen.B, cfg.fit).params.beta;
        }
        write_g_points_csv(basis, beta, out_path(cfg, "plot_points.csv"));
        PlotSeries s;
        s.label = cfg.plot_what == "regr" ? "g'" : "g";
        for (int i = 0; i <= 512; ++i) {
            const double x = basis.x_lo() + (basis.x_hi() - basis.x_lo()) * i / 512.0;
            s.x.push_back(x);
            s.y.push_back(basis.g_value(beta, x, cfg.plot_what == "regr" ? 1 : 0));
        }
        write_svg({s}, cfg.plot_what == "regr" ? "Fitted REGR" : "Fitted gradient function",
                  out_path(cfg, "plot.svg"));
    } else if (cfg.plot_what == "trajectories" || cfg.plot_what == "residuals") {
        const Dataset data = load_data(cfg);
        const ModelSpec spec = require_model(cfg);
        SplineBasis basis = make_basis(spec);
        const PenaltyMatrix pen = penalty_matrix(basis, spec.A, spec.lambda_R);
        const FitResult fr = fit(basis, data, default_init(basis, data), pen.B, cfg.fit);
        const std::vector<CurveEval> evals =
            evaluate_curves(basis, data, fr.params, cfg.fit.h, EvalOrder::ValueOnly);
        std::vector<PlotSeries> series;
        std::ofstream pts(out_path(cfg, "plot_points.csv"));
        pts << "curve_id,time,observed,fitted,residual\n";
        for (int c = 0; c < data.n_curves(); ++c) {
            const Curve& cv = data.curves[c];
            PlotSeries s;
            s.label = cv.curve_id;
            for (std::size_t j = 0; j < cv.t.size(); ++j) {
                const double t_raw = data.time_origin + data.time_scale * cv.t[j];
                const double res = cv.y[j] - evals[c].xhat[j];
                pts << cv.curve_id << ',' << t_raw << ',' << cv.y[j] << ',' << evals[c].xhat[j]
                    << ',' << res << "\n";
                s.x.push_back(t_raw);
                s.y.push_back(cfg.plot_what == "residuals" ? res : evals[c].xhat[j]);
            }
            if (series.size() < 5) series.push_back(std::move(s));
        }
        write_svg(series,
                  cfg.plot_what == "residuals" ? "Residuals versus time" : "Fitted trajectories",
                  out_path(cfg, "plot.svg"));
    } else {
        throw ConfigError("unknown plot_what '" + cfg.plot_what + "'");
    }
    std::cout << "wrote " << out_path(cfg, "plot.svg") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-parametric estimation of autonomous dynamical systems from sparse "
                 "multi-subject data"};
    app.require_subcommand(1);
    CommonArgs args;
    auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
    auto* c_fit = app.add_subcommand("fit", "Fit the model to a dataset");
    auto* c_sel = app.add_subcommand("select", "Model selection by approximate CV");
    auto* c_study = app.add_subcommand("study", "Monte Carlo study");
    auto* c_plot = app.add_subcommand("plot", "Emit plot CSV + SVG");
    for (auto* c : {c_sim, c_fit, c_sel, c_study, c_plot}) add_common(c, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }
    try {
        if (c_sim->parsed()) return run_simulate(args);
        if (c_fit->parsed()) return run_fit(args);
        if (c_sel->parsed()) return run_select(args);
        if (c_study->parsed()) return run_study(args);
        if (c_plot->parsed()) return run_plot(args);
        std::cerr << "error: usage: no command\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ArgumentError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return kExitNumeric;
    }
}
