#pragma once

#include <string>
#include <vector>

#include "semiode/sim.hpp"

namespace semiode {

// CSV columns: subject_id,curve_id,time,value[,a0]. Raw times are affinely
// mapped to [0,1] (identity when already inside) with the map recorded in
// Dataset::time_origin/time_scale.
Dataset ingest(const std::string& path);
void emit(const Dataset& data, const std::string& path);

// Fully-resolved run configuration; JSON on disk.
struct RunConfig {
    std::string mode;  // simulate | fit | select | study | plot
    std::string data_path;
    std::string out_dir = ".";
    FitConfig fit;
    SimConfig sim;
    std::vector<ModelSpec> grid;
    ModelSpec model;          // single-model commands (fit, plot, study accuracy)
    bool has_model = false;
    int replicates = 10;
    double ise_lo = 0.1, ise_hi = 1.2;
    std::string plot_what = "g";  // g | regr | trajectories | residuals
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path);
void write_params_csv(const Dataset& data, const Parameters& params, const std::string& path);
void write_cv_report_csv(const CvReport& report, const std::string& path);
void write_study_report_csv(const StudyReport& report, const std::string& path);

// (x, g, g') on a uniform grid; used by the plot command.
void write_g_points_csv(const SplineBasis& basis, const Eigen::VectorXd& beta,
                        const std::string& path, int points = 512);

// Minimal standalone SVG line chart (one polyline per series).
struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};
void write_svg(const std::vector<PlotSeries>& series, const std::string& title,
               const std::string& path);

}  // namespace semiode
