#include "hcmlab/estimator.hpp"

#include "hcmlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hcmlab::estimator {

namespace {

Eigen::MatrixXd sigmoid_mat(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) out.data()[i] = net::sigmoid(m.data()[i]);
    return out;
}

// batch forward pass keeping per-layer activations; activations[0] is the input
std::vector<Eigen::MatrixXd> forward_batch(const net::Network& net, const Eigen::MatrixXd& xs) {
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(net.layers.size() + 1);
    acts.push_back(xs);
    for (int s = 0; s < net.depth(); ++s) {
        const auto& l = net.layers[s];
        Eigen::MatrixXd pre = acts.back() * l.w.transpose();
        pre.rowwise() += l.b.transpose();
        acts.push_back(sigmoid_mat(pre));
    }
    const auto& out = net.layers.back();
    Eigen::MatrixXd last = acts.back() * out.w.transpose();
    last.rowwise() += out.b.transpose();
    acts.push_back(std::move(last));
    return acts;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

Gradients backward_batch(const net::Network& net, const std::vector<Eigen::MatrixXd>& acts,
                         const Eigen::VectorXd& ys) {
    const auto n = static_cast<double>(ys.size());
    const int L = net.depth();
    Gradients g;
    g.w.resize(L + 1);
    g.b.resize(L + 1);

    // delta = d risk / d preactivation of the current stage
    Eigen::MatrixXd delta = (2.0 / n) * (acts[L + 1] - ys);
    g.w[L] = delta.transpose() * acts[L];
    g.b[L] = delta.colwise().sum();
    for (int s = L - 1; s >= 0; --s) {
        const Eigen::MatrixXd& z = acts[s + 1];  // sigmoid outputs of stage s
        delta = (delta * net.layers[s + 1].w).cwiseProduct(
            z.cwiseProduct(Eigen::MatrixXd::Ones(z.rows(), z.cols()) - z));
        g.w[s] = delta.transpose() * acts[s];
        g.b[s] = delta.colwise().sum();
    }
    return g;
}

void clamp_coefficients(net::Network& net, double alpha) {
    for (auto& l : net.layers) {
        l.w = l.w.cwiseMax(-alpha).cwiseMin(alpha);
        l.b = l.b.cwiseMax(-alpha).cwiseMin(alpha);
    }
}

// init_scale > 0: plain uniform draws in [-init_scale, init_scale].
// init_scale <= 0: fan-in scaled draws with bias centering. Uniform init at a
// fixed scale starves deep sigmoid stacks (the forward signal decays
// geometrically and the schedule depths never start learning); scaling the
// rows by 4*sqrt(3/fan_in) and cancelling the 0.5 activation mean keeps the
// per-layer signal gain near one.
net::Network random_network(int d, const net::NetworkClass& cls, double init_scale, Rng& rng) {
    net::Network net;
    net.input_dim = d;
    const bool centered = init_scale <= 0.0;
    int in = d;
    for (int s = 0; s <= cls.depth; ++s) {
        const int out = (s == cls.depth) ? 1 : cls.width;
        net::Layer l;
        l.w = Eigen::MatrixXd::Zero(out, in);
        l.b = Eigen::VectorXd::Zero(out);
        const double scale = centered ? 4.0 * std::sqrt(3.0 / double(in)) : init_scale;
        for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
            double row_sum = 0.0;
            for (Eigen::Index j = 0; j < l.w.cols(); ++j) {
                l.w(i, j) = rng.uniform(-scale, scale);
                row_sum += l.w(i, j);
            }
            l.b[i] = centered ? (s == 0 ? 0.0 : -0.5 * row_sum) : rng.uniform(-scale, scale);
        }
        if (centered && s == cls.depth) {
            l.w *= 0.05;  // start the output stage near the sample mean
            l.b *= 0.05;
        }
        net.layers.push_back(std::move(l));
        in = out;
    }
    return net;
}

struct RunResult {
    net::Network net;
    double risk = std::numeric_limits<double>::infinity();
    bool finite = false;
};

RunResult run_descent(net::Network net, const Dataset& data, const net::NetworkClass& cls,
                      const TrainConfig& cfg, double lr) {
    RunResult res;
    clamp_coefficients(net, cls.alpha);
    double prev_risk = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto acts = forward_batch(net, data.xs);
        const double risk = (acts.back().col(0) - data.ys).squaredNorm() / double(data.n());
        if (!std::isfinite(risk)) return res;  // finite stays false
        const auto grads = backward_batch(net, acts, data.ys);
        for (std::size_t s = 0; s < net.layers.size(); ++s) {
            net.layers[s].w.noalias() -= lr * grads.w[s];
            net.layers[s].b.noalias() -= lr * grads.b[s];
        }
        clamp_coefficients(net, cls.alpha);
        if (cfg.tolerance > 0.0 && epoch > 0 &&
            std::abs(prev_risk - risk) <= cfg.tolerance * std::max(1.0, risk))
            break;
        prev_risk = risk;
        lr *= cfg.lr_decay;
    }
    const auto acts = forward_batch(net, data.xs);
    const double risk = (acts.back().col(0) - data.ys).squaredNorm() / double(data.n());
    if (!std::isfinite(risk)) return res;
    res.net = std::move(net);
    res.risk = risk;
    res.finite = true;
    return res;
}

}  // namespace

double empirical_risk(const net::Network& net, const Dataset& data) {
    if (net.input_dim != data.d()) throw std::invalid_argument("dataset dimension mismatch");
    const auto acts = forward_batch(net, data.xs);
    return (acts.back().col(0) - data.ys).squaredNorm() / double(data.n());
}

std::vector<double> risk_gradient(const net::Network& net, const Dataset& data) {
    const auto acts = forward_batch(net, data.xs);
    const auto grads = backward_batch(net, acts, data.ys);
    std::vector<double> flat;
    for (std::size_t s = 0; s < grads.w.size(); ++s) {
        for (Eigen::Index i = 0; i < grads.w[s].rows(); ++i)
            for (Eigen::Index j = 0; j < grads.w[s].cols(); ++j) flat.push_back(grads.w[s](i, j));
        for (Eigen::Index i = 0; i < grads.b[s].size(); ++i) flat.push_back(grads.b[s][i]);
    }
    return flat;
}

FitOutcome fit(const Dataset& data, const net::NetworkClass& cls, const TrainConfig& cfg,
               const std::optional<net::Network>& warm_start) {
    if (cfg.restarts < 1) throw std::invalid_argument("restarts must be >= 1");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("step size must be positive");
    const double init_scale =
        cfg.init_scale > 0.0 ? std::min(cfg.init_scale, cls.alpha) : cfg.init_scale;

    FitOutcome best;
    best.final_risk = std::numeric_limits<double>::infinity();
    int attempted = 0;
    for (int r = 0; r < cfg.restarts; ++r) {
        Rng rng(mix64(cfg.seed, 0x7261u, static_cast<std::uint64_t>(r)));
        net::Network start = (r == 0 && warm_start) ? *warm_start
                                                    : random_network(data.d(), cls, init_scale, rng);
        double lr = cfg.learning_rate;
        RunResult run;
        for (int attempt = 0; attempt < 4; ++attempt) {
            run = run_descent(start, data, cls, cfg, lr);
            if (run.finite) break;
            lr *= 0.25;  // non-finite loss: retry the restart with a smaller step
        }
        ++attempted;
        if (run.finite && run.risk < best.final_risk) {
            best.network = std::move(run.net);
            best.final_risk = run.risk;
            best.ok = true;
        }
    }
    best.restarts_used = attempted;
    if (!best.ok) best.note = "all restarts diverged";
    return best;
}

double truncate(double u, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("truncation level must be positive");
    if (u > beta) return beta;
    if (u < -beta) return -beta;
    return u;
}

double predict(const net::Network& net, double beta, std::span<const double> x) {
    const double raw = net.forward(x);
    if (std::isinf(beta)) return raw;
    return truncate(raw, beta);
}

McEstimate l2_error(const net::Network& net, double beta, const hcm::HcmSpec& spec,
                    const McParams& mc) {
    if (mc.points < 1) throw std::invalid_argument("need at least one MC point");
    if (net.input_dim != spec.d) throw std::invalid_argument("predictor dimension mismatch");
    Rng rng(mc.seed);
    std::vector<double> x(spec.d);
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < mc.points; ++i) {
        for (int c = 0; c < spec.d; ++c) x[c] = rng.uniform(-mc.support_radius, mc.support_radius);
        const double diff = predict(net, beta, x) - evaluate_hcm(spec, x);
        const double sq = diff * diff;
        sum += sq;
        sum_sq += sq * sq;
    }
    McEstimate est;
    est.points = mc.points;
    est.value = sum / double(mc.points);
    const double var = std::max(0.0, sum_sq / double(mc.points) - est.value * est.value);
    est.std_error = std::sqrt(var / double(mc.points));
    return est;
}

void save_dataset_csv(const Dataset& data, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write dataset: " + csv_path);
    for (int c = 0; c < data.d(); ++c) out << "x" << c + 1 << ",";
    out << "y\n";
    char buf[64];
    for (long i = 0; i < data.n(); ++i) {
        for (int c = 0; c < data.d(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", data.xs(i, c));
            out << buf << ",";
        }
        std::snprintf(buf, sizeof buf, "%.17g", data.ys[i]);
        out << buf << "\n";
    }
    nlohmann::json meta = {{"n", data.n()},
                           {"d", data.d()},
                           {"a", data.meta.support_radius},
                           {"noise_sd", data.meta.noise_sd},
                           {"seed", data.meta.seed},
                           {"hcm", data.meta.hcm_ref}};
    std::ofstream side(csv_path + ".meta.json");
    side << meta.dump(2) << "\n";
}

Dataset load_dataset_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open dataset: " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file");
    int d = 0;
    for (char ch : line)
        if (ch == ',') ++d;  // columns x1..xd,y
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != d + 1)
            throw std::runtime_error("malformed dataset row");
        rows.push_back(std::move(row));
    }
    Dataset data;
    data.xs = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), d);
    data.ys = Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int c = 0; c < d; ++c) data.xs(static_cast<Eigen::Index>(i), c) = rows[i][c];
        data.ys[static_cast<Eigen::Index>(i)] = rows[i][d];
    }
    std::ifstream side(csv_path + ".meta.json");
    if (side) {
        nlohmann::json meta;
        side >> meta;
        data.meta.support_radius = meta.value("a", 1.0);
        data.meta.noise_sd = meta.value("noise_sd", 0.0);
        data.meta.seed = meta.value("seed", std::uint64_t{0});
        data.meta.hcm_ref = meta.value("hcm", std::string{});
    }
    return data;
}

}  // namespace hcmlab::estimator
