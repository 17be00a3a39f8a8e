#include "hcmlab/lab.hpp"

#include "hcmlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

namespace hcmlab::lab {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void ExperimentConfig::check() const {
    if (n_grid.size() < 3) throw std::invalid_argument("n grid needs at least 3 points");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1])
            throw std::invalid_argument("n grid must be strictly increasing");
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (mc_points < 1) throw std::invalid_argument("mc_points must be >= 1");
    if (support_radius <= 0.0) throw std::invalid_argument("support radius must be > 0");
}

std::uint64_t cell_seed(std::uint64_t master, long n, int replicate) {
    return mix64(master, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(replicate));
}

estimator::Dataset generate_dataset(const hcm::HcmSpec& spec, long n, double noise_sd, double a,
                                    std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    estimator::Dataset data;
    data.xs = Eigen::MatrixXd(n, spec.d);
    data.ys = Eigen::VectorXd(n);
    data.meta = {a, noise_sd, seed, "generated"};
    Rng rng(seed);
    std::vector<double> x(spec.d);
    for (long i = 0; i < n; ++i) {
        for (int c = 0; c < spec.d; ++c) {
            x[c] = rng.uniform(-a, a);
            data.xs(i, c) = x[c];
        }
        double y = hcm::evaluate_hcm(spec, x);
        if (noise_sd > 0.0) y += noise_sd * rng.normal();
        data.ys[i] = y;
    }
    return data;
}

SlopeFit fit_slope(const std::vector<std::pair<double, double>>& pairs) {
    SlopeFit fit;
    std::vector<std::pair<double, double>> logs;
    for (const auto& [n, err] : pairs) {
        if (!(err > 0.0)) {
            std::ostringstream os;
            os << "excluded nonpositive error " << err << " at n = " << n;
            fit.warnings.push_back(os.str());
            continue;
        }
        logs.emplace_back(std::log(n), std::log(err));
    }
    if (logs.size() < 2) throw std::invalid_argument("need at least two points with positive error");
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : logs) {
        mx += x;
        my += y;
    }
    mx /= double(logs.size());
    my /= double(logs.size());
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : logs) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("need at least two distinct n values");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    fit.points_used = static_cast<int>(logs.size());
    return fit;
}

RateReport summarize(const std::vector<RateRow>& rows, double predicted_exponent) {
    RateReport report;
    report.rows = rows;
    report.predicted_exponent = predicted_exponent;

    std::vector<long> ns;
    for (const auto& r : rows)
        if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
    std::sort(ns.begin(), ns.end());

    std::vector<std::pair<double, double>> pairs;
    for (long n : ns) {
        RateAggregate agg;
        agg.n = n;
        double sum = 0.0, sum_sq = 0.0;
        for (const auto& r : rows) {
            if (r.n != n || !r.ok) continue;
            sum += r.l2_error;
            sum_sq += r.l2_error * r.l2_error;
            ++agg.count;
        }
        if (agg.count == 0) continue;
        agg.mean_err = sum / double(agg.count);
        if (agg.count > 1) {
            const double var =
                std::max(0.0, (sum_sq - double(agg.count) * agg.mean_err * agg.mean_err) /
                                  double(agg.count - 1));
            agg.stderr_err = std::sqrt(var / double(agg.count));
        }
        report.aggregates.push_back(agg);
        pairs.emplace_back(double(n), agg.mean_err);
    }
    if (pairs.size() >= 2) report.slope = fit_slope(pairs);
    return report;
}

RateReport run_rate_experiment(const ExperimentConfig& cfg, int threads) {
    cfg.check();
    const auto validation = hcm::validate_hcm(cfg.spec);
    if (!validation.ok) throw std::invalid_argument("experiment hcm fails validation");

    struct Cell {
        long n;
        int rep;
    };
    std::vector<Cell> cells;
    for (long n : cfg.n_grid)
        for (int rep = 0; rep < cfg.replications; ++rep) cells.push_back({n, rep});
    std::vector<RateRow> rows(cells.size());
    std::vector<std::string> failures;
    std::atomic<bool> checks_ok{true};

    auto work = [&](std::size_t i) {
        const auto [n, rep] = cells[i];
        RateRow row;
        row.n = n;
        row.replicate = rep;
        row.seed = cell_seed(cfg.master_seed, n, rep);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto data =
                generate_dataset(cfg.spec, n, cfg.noise_sd, cfg.support_radius, row.seed);
            const auto sched = approx::schedule(n, cfg.spec, cfg.constants);
            net::NetworkClass cls{sched.depth, static_cast<int>(sched.width), sched.alpha};
            estimator::TrainConfig train = cfg.train;
            train.seed = mix64(row.seed, 0xf17u);
            const auto outcome = estimator::fit(data, cls, train);
            if (!outcome.ok) throw std::runtime_error("fit failed: " + outcome.note);
            if (!net::in_class(outcome.network, cls).ok) {
                checks_ok = false;
                throw std::runtime_error("fitted network escaped its class");
            }
            estimator::McParams mc{cfg.mc_points, mix64(row.seed, 0x3c9u), cfg.support_radius};
            const auto est = estimator::l2_error(outcome.network, sched.beta, cfg.spec, mc);
            row.l2_error = est.value;
            row.train_risk = outcome.final_risk;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.note = e.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows[i] = std::move(row);
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> futs;
        for (int t = 0; t < threads; ++t)
            futs.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1))
                    work(i);
            }));
        for (auto& f : futs) f.get();
    }

    for (const auto& r : rows)
        if (!r.ok) {
            std::ostringstream os;
            os << "n=" << r.n << " replicate=" << r.replicate << ": " << r.note;
            failures.push_back(os.str());
        }

    std::vector<RateRow> ok_rows;
    for (const auto& r : rows)
        if (r.ok) ok_rows.push_back(r);
    const auto sched0 = approx::schedule(cfg.n_grid.front(), cfg.spec, cfg.constants);
    RateReport report = summarize(ok_rows, sched0.predicted_exponent);
    report.failures = failures;
    report.self_checks_ok = checks_ok.load();

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        const std::filesystem::path dir(cfg.out_dir);
        write_rate_csv(ok_rows, (dir / "rate.csv").string());
        write_aggregate_csv(report.aggregates, (dir / "aggregate.csv").string());
        write_timings_csv(rows, (dir / "timings.csv").string());

        nlohmann::json manifest;
        manifest["config"] = config_to_json(cfg);
        nlohmann::json schedules = nlohmann::json::array();
        for (long n : cfg.n_grid)
            schedules.push_back(approx::schedule_to_json(approx::schedule(n, cfg.spec, cfg.constants)));
        manifest["schedules"] = std::move(schedules);
        manifest["report"] = report_to_json(report);
        std::ofstream out(dir / "manifest.json");
        out << manifest.dump(2) << "\n";
    }
    return report;
}

ExperimentConfig config_from_json(const nlohmann::json& jin, const std::string& base_dir) {
    // a manifest is also a valid config: unwrap its "config" object
    const nlohmann::json& j = jin.contains("config") ? jin.at("config") : jin;
    ExperimentConfig cfg;
    if (j.at("hcm").is_string()) {
        std::filesystem::path p = j.at("hcm").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        cfg.spec = hcm::load_hcm_file(p.string());
        cfg.hcm_source = p.string();
    } else {
        cfg.spec = hcm::hcm_from_json(j.at("hcm"));
        cfg.hcm_source = "inline";
    }
    cfg.n_grid = j.at("n_grid").get<std::vector<long>>();
    cfg.replications = j.value("replications", 1);
    cfg.noise_sd = j.value("noise_sd", 0.0);
    cfg.mc_points = j.value("mc_points", 10000L);
    cfg.support_radius = j.value("support_radius", 1.0);
    cfg.master_seed = j.value("master_seed", std::uint64_t{1});
    cfg.out_dir = j.value("out_dir", std::string{});
    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.lr_decay = t.value("lr_decay", cfg.train.lr_decay);
        cfg.train.restarts = t.value("restarts", cfg.train.restarts);
        cfg.train.init_scale = t.value("init_scale", cfg.train.init_scale);
        cfg.train.tolerance = t.value("tolerance", cfg.train.tolerance);
    }
    if (j.contains("constants")) {
        const auto& c = j.at("constants");
        cfg.constants.c3 = c.value("c3", cfg.constants.c3);
        cfg.constants.c4 = c.value("c4", cfg.constants.c4);
        cfg.constants.width_scale = c.value("width_scale", cfg.constants.width_scale);
        cfg.c18 = c.value("c18", cfg.c18);
    }
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    return {{"hcm", hcm::hcm_to_json(cfg.spec)},
            {"hcm_source", cfg.hcm_source},
            {"n_grid", cfg.n_grid},
            {"replications", cfg.replications},
            {"noise_sd", cfg.noise_sd},
            {"mc_points", cfg.mc_points},
            {"support_radius", cfg.support_radius},
            {"train",
             {{"epochs", cfg.train.epochs},
              {"learning_rate", cfg.train.learning_rate},
              {"lr_decay", cfg.train.lr_decay},
              {"restarts", cfg.train.restarts},
              {"init_scale", cfg.train.init_scale},
              {"tolerance", cfg.train.tolerance}}},
            {"constants",
             {{"c3", cfg.constants.c3},
              {"c4", cfg.constants.c4},
              {"width_scale", cfg.constants.width_scale},
              {"c18", cfg.c18}}},
            {"master_seed", cfg.master_seed},
            {"out_dir", cfg.out_dir}};
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

void write_rate_csv(const std::vector<RateRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "n,replicate,l2_error,train_risk,seed\n";
    for (const auto& r : rows)
        out << r.n << "," << r.replicate << "," << fmt(r.l2_error) << "," << fmt(r.train_risk)
            << "," << r.seed << "\n";
}

void write_aggregate_csv(const std::vector<RateAggregate>& aggs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "n,mean_err,stderr,count\n";
    for (const auto& a : aggs)
        out << a.n << "," << fmt(a.mean_err) << "," << fmt(a.stderr_err) << "," << a.count << "\n";
}

void write_timings_csv(const std::vector<RateRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "n,replicate,seconds\n";
    for (const auto& r : rows) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
        out << r.n << "," << r.replicate << "," << buf << "\n";
    }
}

nlohmann::json report_to_json(const RateReport& report) {
    nlohmann::json aggs = nlohmann::json::array();
    for (const auto& a : report.aggregates)
        aggs.push_back({{"n", a.n}, {"mean_err", a.mean_err}, {"stderr", a.stderr_err},
                        {"count", a.count}});
    return {{"aggregates", std::move(aggs)},
            {"slope", report.slope.slope},
            {"intercept", report.slope.intercept},
            {"r_squared", report.slope.r_squared},
            {"predicted_exponent", report.predicted_exponent},
            {"self_checks_ok", report.self_checks_ok},
            {"failures", report.failures}};
}

}  // namespace hcmlab::lab
