#include "semiode/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "semiode/common.hpp"

namespace semiode {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_double(const std::string& s, int row, const char* col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ": non-numeric " + col + " field '" + s +
                        "'");
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << std::setprecision(17);
    return f;
}

json spec_to_json(const ModelSpec& m) {
    return json{{"id", m.id},
                {"degree", m.degree},
                {"knots", m.knots},
                {"x_lo", m.x_lo},
                {"x_hi", m.x_hi},
                {"boundary_mode",
                 m.mode == BoundaryMode::ZeroAtOrigin ? "zero_at_origin" : "unconstrained"},
                {"l2_normalized", m.l2_normalized},
                {"A", m.A},
                {"lambda_R", m.lambda_R}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec m;
    m.id = j.value("id", "");
    m.degree = j.value("degree", 3);
    m.knots = j.at("knots").get<std::vector<double>>();
    m.x_lo = j.value("x_lo", 0.0);
    m.x_hi = j.value("x_hi", 1.0);
    const std::string mode = j.value("boundary_mode", "unconstrained");
    if (mode == "zero_at_origin")
        m.mode = BoundaryMode::ZeroAtOrigin;
    else if (mode == "unconstrained")
        m.mode = BoundaryMode::Unconstrained;
    else
        throw ConfigError("unknown boundary_mode '" + mode + "'");
    m.l2_normalized = j.value("l2_normalized", false);
    m.A = j.value("A", 0.0);
    m.lambda_R = j.value("lambda_R", 0.0);
    return m;
}

}  // namespace

Dataset ingest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw DataError("no observations: '" + path + "' is empty");
    std::vector<std::string> header = split_csv_line(line);
    if (!header.empty() && !header[0].empty() && header[0].front() == '\xef')
        header[0] = header[0].substr(3);  // strip UTF-8 BOM
    const std::vector<std::string> required = {"subject_id", "curve_id", "time", "value"};
    for (std::size_t i = 0; i < required.size(); ++i)
        if (header.size() <= i || header[i] != required[i])
            throw DataError("bad header: expected columns subject_id,curve_id,time,value[,a0]");
    const bool has_a0 = header.size() > 4 && header[4] == "a0";

    struct Row {
        std::string subject, curve;
        double t, y;
        bool a_known = false;
        double a0 = 0.0;
    };
    std::vector<Row> rows;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() < 4)
            throw DataError("row " + std::to_string(lineno) + ": expected at least 4 fields");
        Row r;
        r.subject = fields[0];
        r.curve = fields[1];
        r.t = parse_double(fields[2], lineno, "time");
        r.y = parse_double(fields[3], lineno, "value");
        if (has_a0 && fields.size() > 4 && !fields[4].empty()) {
            r.a_known = true;
            r.a0 = parse_double(fields[4], lineno, "a0");
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw DataError("no observations in '" + path + "'");

    double t_min = rows[0].t, t_max = rows[0].t;
    for (const Row& r : rows) {
        t_min = std::min(t_min, r.t);
        t_max = std::max(t_max, r.t);
    }
    Dataset data;
    // Identity map when the raw times already live in [0,1]; otherwise affine
    // [t_min, t_max] -> [0,1].
    if (t_min >= 0.0 && t_max <= 1.0) {
        data.time_origin = 0.0;
        data.time_scale = 1.0;
    } else {
        if (!(t_max > t_min)) throw DataError("cannot rescale: all times equal");
        data.time_origin = t_min;
        data.time_scale = t_max - t_min;
    }

    std::map<std::pair<std::string, std::string>, int> curve_index;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const Row& r = rows[k];
        const auto key = std::make_pair(r.subject, r.curve);
        auto it = curve_index.find(key);
        if (it == curve_index.end()) {
            it = curve_index.emplace(key, static_cast<int>(data.curves.size())).first;
            Curve cv;
            cv.subject_id = r.subject;
            cv.curve_id = r.curve;
            data.curves.push_back(std::move(cv));
        }
        Curve& cv = data.curves[it->second];
        const double t = (r.t - data.time_origin) / data.time_scale;
        for (double existing : cv.t)
            if (std::abs(existing - t) < 1e-12)
                throw DataError("row " + std::to_string(static_cast<int>(k) + 2) +
                                ": duplicate time for curve " + r.curve);
        cv.t.push_back(t);
        cv.y.push_back(r.y);
        if (r.a_known) {
            cv.a_known = true;
            cv.a0 = r.a0;
        }
    }
    for (Curve& cv : data.curves) {
        std::vector<std::size_t> order(cv.t.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return cv.t[a] < cv.t[b]; });
        std::vector<double> t(cv.t.size()), y(cv.y.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            t[i] = cv.t[order[i]];
            y[i] = cv.y[order[i]];
        }
        cv.t = std::move(t);
        cv.y = std::move(y);
    }
    data.finalize();
    return data;
}

void emit(const Dataset& data, const std::string& path) {
    std::ofstream f = open_out(path);
    bool any_known = false;
    for (const Curve& cv : data.curves) any_known = any_known || cv.a_known;
    f << "subject_id,curve_id,time,value" << (any_known ? ",a0" : "") << "\n";
    for (const Curve& cv : data.curves)
        for (std::size_t j = 0; j < cv.t.size(); ++j) {
            f << cv.subject_id << ',' << cv.curve_id << ','
              << data.time_origin + data.time_scale * cv.t[j] << ',' << cv.y[j];
            if (any_known) {
                f << ',';
                if (cv.a_known) f << cv.a0;
            }
            f << "\n";
        }
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in '" + path + "': " + e.what());
    }
    RunConfig cfg;
    try {
        cfg.mode = j.value("mode", "");
        cfg.data_path = j.value("data", "");
        cfg.out_dir = j.value("out_dir", ".");
        cfg.replicates = j.value("replicates", 10);
        cfg.ise_lo = j.value("ise_lo", 0.1);
        cfg.ise_hi = j.value("ise_hi", 1.2);
        cfg.plot_what = j.value("plot_what", "g");
        if (j.contains("fit")) {
            const json& jf = j["fit"];
            cfg.fit.lambda1 = jf.value("lambda1", cfg.fit.lambda1);
            cfg.fit.lambda2 = jf.value("lambda2", cfg.fit.lambda2);
            cfg.fit.lambda3_0 = jf.value("lambda3_0", cfg.fit.lambda3_0);
            const std::string ap = jf.value("alpha_policy", "mean");
            if (ap == "mean")
                cfg.fit.alpha_policy = AlphaPolicy::MeanOfA;
            else if (ap == "fixed")
                cfg.fit.alpha_policy = AlphaPolicy::Fixed;
            else
                throw ConfigError("unknown alpha_policy '" + ap + "'");
            cfg.fit.alpha_fixed = jf.value("alpha_fixed", cfg.fit.alpha_fixed);
            cfg.fit.lm_adaptive = jf.value("lm_adaptive", cfg.fit.lm_adaptive);
            cfg.fit.nr_adaptive = jf.value("nr_adaptive", cfg.fit.nr_adaptive);
            if (jf.contains("h")) cfg.fit.h = jf["h"].get<double>();
            if (jf.contains("grid_steps")) cfg.fit.h = 1.0 / jf["grid_steps"].get<int>();
            cfg.fit.lm_tol = jf.value("lm_tol", cfg.fit.lm_tol);
            cfg.fit.nr_tol = jf.value("nr_tol", cfg.fit.nr_tol);
            cfg.fit.lm_max_iters = jf.value("lm_max_iters", cfg.fit.lm_max_iters);
            cfg.fit.nr_max_iters = jf.value("nr_max_iters", cfg.fit.nr_max_iters);
        }
        if (j.contains("sim")) {
            const json& js = j["sim"];
            cfg.sim = default_sim_config();
            cfg.sim.n = js.value("n", cfg.sim.n);
            cfg.sim.N = js.value("N", cfg.sim.N);
            cfg.sim.m.lo = js.value("m_lo", cfg.sim.m.lo);
            cfg.sim.m.hi = js.value("m_hi", cfg.sim.m.hi);
            cfg.sim.theta_sd = js.value("theta_sd", cfg.sim.theta_sd);
            cfg.sim.a_mean = js.value("a_mean", cfg.sim.a_mean);
            cfg.sim.a_sd = js.value("a_sd", cfg.sim.a_sd);
            cfg.sim.noise_sd = js.value("noise_sd", cfg.sim.noise_sd);
            cfg.sim.a_known = js.value("a_known", cfg.sim.a_known);
            cfg.sim.seed = js.value("seed", cfg.sim.seed);
            if (js.contains("truth")) cfg.sim.truth = spec_from_json(js["truth"]);
            if (js.contains("truth_beta")) {
                const std::vector<double> b = js["truth_beta"].get<std::vector<double>>();
                cfg.sim.truth_beta =
                    Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<int>(b.size()));
            }
        } else {
            cfg.sim = default_sim_config();
        }
        if (j.contains("grid"))
            for (const json& jm : j["grid"]) cfg.grid.push_back(spec_from_json(jm));
        if (j.contains("model")) {
            cfg.model = spec_from_json(j["model"]);
            cfg.has_model = true;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("invalid config '" + path + "': " + e.what());
    }
    return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    json j;
    j["mode"] = cfg.mode;
    j["data"] = cfg.data_path;
    j["out_dir"] = cfg.out_dir;
    j["replicates"] = cfg.replicates;
    j["ise_lo"] = cfg.ise_lo;
    j["ise_hi"] = cfg.ise_hi;
    j["plot_what"] = cfg.plot_what;
    j["fit"] = {
        {"lambda1", cfg.fit.lambda1},
        {"lambda2", cfg.fit.lambda2},
        {"lambda3_0", cfg.fit.lambda3_0},
        {"alpha_policy", cfg.fit.alpha_policy == AlphaPolicy::Fixed ? "fixed" : "mean"},
        {"alpha_fixed", cfg.fit.alpha_fixed},
        {"lm_adaptive", cfg.fit.lm_adaptive},
        {"nr_adaptive", cfg.fit.nr_adaptive},
        {"grid_steps", static_cast<int>(std::lround(1.0 / cfg.fit.h))},
        {"lm_tol", cfg.fit.lm_tol},
        {"nr_tol", cfg.fit.nr_tol},
        {"lm_max_iters", cfg.fit.lm_max_iters},
        {"nr_max_iters", cfg.fit.nr_max_iters},
    };
    std::vector<double> tb(cfg.sim.truth_beta.data(),
                           cfg.sim.truth_beta.data() + cfg.sim.truth_beta.size());
    j["sim"] = {{"n", cfg.sim.n},
                {"N", cfg.sim.N},
                {"m_lo", cfg.sim.m.lo},
                {"m_hi", cfg.sim.m.hi},
                {"theta_sd", cfg.sim.theta_sd},
                {"a_mean", cfg.sim.a_mean},
                {"a_sd", cfg.sim.a_sd},
                {"noise_sd", cfg.sim.noise_sd},
                {"a_known", cfg.sim.a_known},
                {"seed", cfg.sim.seed},
                {"truth", spec_to_json(cfg.sim.truth)},
                {"truth_beta", tb}};
    json grid = json::array();
    for (const ModelSpec& m : cfg.grid) grid.push_back(spec_to_json(m));
    j["grid"] = grid;
    if (cfg.has_model) j["model"] = spec_to_json(cfg.model);
    std::ofstream f = open_out(path);
    f << j.dump(2) << "\n";
}

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path) {
    std::ofstream f = open_out(path);
    f << "iteration,phase,loss,lambda1,lambda2,lambda3,beta_step\n";
    for (const TraceRecord& r : trace)
        f << r.iter << ',' << (r.phase == Phase::LM ? "LM" : "NR") << ',' << r.loss << ','
          << r.lambda1 << ',' << r.lambda2 << ',' << r.lambda3 << ',' << r.beta_step << "\n";
}

void write_params_csv(const Dataset& data, const Parameters& params, const std::string& path) {
    std::ofstream f = open_out(path);
    f << "kind,id,value\n";
    for (int c = 0; c < data.n_curves(); ++c)
        f << "a," << data.curves[c].curve_id << ',' << params.a[c] << "\n";
    for (int i = 0; i < data.n_subjects(); ++i)
        f << "theta," << data.subject_ids[i] << ',' << params.theta[i] << "\n";
    for (int r = 0; r < params.beta.size(); ++r)
        f << "beta,beta" << (r + 1) << ',' << params.beta[r] << "\n";
}

void write_cv_report_csv(const CvReport& report, const std::string& path) {
    std::ofstream f = open_out(path);
    f << "model_id,A,lambda_R,lm_iters,nr_iters,cv_score,converged,selected\n";
    for (std::size_t k = 0; k < report.rows.size(); ++k) {
        const CvRow& r = report.rows[k];
        f << r.id << ',' << r.A << ',' << r.lambda_R << ',' << r.lm_iters << ',' << r.nr_iters
          << ',' << r.cv << ',' << (r.converged ? 1 : 0) << ','
          << (static_cast<int>(k) == report.selected ? 1 : 0) << "\n";
    }
}

void write_study_report_csv(const StudyReport& report, const std::string& path) {
    std::ofstream f = open_out(path);
    f << "replicate,seed,ok,selected,ise,spe,accuracy_converged,error\n";
    for (const ReplicateRow& r : report.rows)
        f << r.replicate << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ',' << r.selected_id << ','
          << r.ise_value << ',' << r.spe_value << ',' << (r.accuracy_converged ? 1 : 0) << ",\""
          << r.error << "\"\n";
    f << "\n";
    f << "aggregate,value\n";
    f << "mise," << report.mise << "\n";
    f << "sd_ise," << report.sd_ise << "\n";
    f << "mspe," << report.mspe << "\n";
    f << "sd_spe," << report.sd_spe << "\n";
    for (const auto& [id, cnt] : report.selection_counts) f << "selected_" << id << ',' << cnt << "\n";
    for (const auto& [id, cnt] : report.convergence_counts)
        f << "converged_" << id << ',' << cnt << "\n";
}

void write_g_points_csv(const SplineBasis& basis, const Eigen::VectorXd& beta,
                        const std::string& path, int points) {
    std::ofstream f = open_out(path);
    f << "x,g,g_prime\n";
    const double lo = basis.x_lo(), hi = basis.x_hi();
    for (int i = 0; i <= points; ++i) {
        const double x = lo + (hi - lo) * i / points;
        f << x << ',' << basis.g_value(beta, x, 0) << ',' << basis.g_value(beta, x, 1) << "\n";
    }
}

void write_svg(const std::vector<PlotSeries>& series, const std::string& title,
               const std::string& path) {
    const int W = 800, H = 600, pad = 60;
    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
    bool first = true;
    for (const PlotSeries& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                x_lo = x_hi = s.x[i];
                y_lo = y_hi = s.y[i];
                first = false;
            }
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    if (!(x_hi > x_lo)) x_hi = x_lo + 1;
    if (!(y_hi > y_lo)) y_hi = y_lo + 1;
    auto sx = [&](double x) { return pad + (W - 2 * pad) * (x - x_lo) / (x_hi - x_lo); };
    auto sy = [&](double y) { return H - pad - (H - 2 * pad) * (y - y_lo) / (y_hi - y_lo); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};

    std::ofstream f = open_out(path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    f << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"30\" text-anchor=\"middle\" font-size=\"18\">" << title
      << "</text>\n";
    f << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
      << H - pad << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
      << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << pad << "\" y=\"" << H - pad + 20 << "\" font-size=\"12\">" << x_lo
      << "</text>\n";
    f << "<text x=\"" << W - pad << "\" y=\"" << H - pad + 20
      << "\" text-anchor=\"end\" font-size=\"12\">" << x_hi << "</text>\n";
    f << "<text x=\"" << pad - 5 << "\" y=\"" << H - pad
      << "\" text-anchor=\"end\" font-size=\"12\">" << y_lo << "</text>\n";
    f << "<text x=\"" << pad - 5 << "\" y=\"" << pad << "\" text-anchor=\"end\" font-size=\"12\">"
      << y_hi << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const PlotSeries& s = series[k];
        f << "<polyline fill=\"none\" stroke=\"" << colors[k % 5] << "\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            f << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
        f << "\"/>\n";
        f << "<text x=\"" << W - pad + 5 << "\" y=\"" << pad + 20 * static_cast<int>(k)
          << "\" font-size=\"12\" fill=\"" << colors[k % 5] << "\">" << s.label << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace semiode
