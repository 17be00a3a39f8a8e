#pragma once

#include "hcmlab/hcm.hpp"
#include "hcmlab/network.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hcmlab::estimator {

struct DatasetMeta {
    double support_radius = 1.0;  // a
    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    std::string hcm_ref;
};

struct Dataset {
    Eigen::MatrixXd xs;  // n x d
    Eigen::VectorXd ys;
    DatasetMeta meta;

    long n() const { return static_cast<long>(xs.rows()); }
    int d() const { return static_cast<int>(xs.cols()); }
};

struct TrainConfig {
    int epochs = 400;
    double learning_rate = 0.1;
    double lr_decay = 1.0;       // multiplicative per epoch
    int restarts = 1;
    double init_scale = 0.0;     // > 0: uniform in [-s,s]; <= 0: fan-in scaled, centered
    std::uint64_t seed = 1;
    double tolerance = 0.0;      // early stop on relative risk change; 0 = off
    int grid_points = 0;         // subnetwork fitting: training samples (0 = default)
};

struct FitOutcome {
    net::Network network;
    double final_risk = 0.0;
    bool ok = false;
    int restarts_used = 0;
    std::string note;
};

double empirical_risk(const net::Network& net, const Dataset& data);

// Empirical L2 risk gradient with respect to all coefficients, flattened
// layer by layer (weights row-major, then biases). Exposed for the
// finite-difference audit.
std::vector<double> risk_gradient(const net::Network& net, const Dataset& data);

// Projected full-batch gradient descent over the class: widths all cls.width,
// cls.depth hidden layers, every update clamped to [-alpha, alpha]. Best of
// cfg.restarts runs by final risk; deterministic given cfg.seed. A non-finite
// loss retries the restart with a smaller step.
FitOutcome fit(const Dataset& data, const net::NetworkClass& cls, const TrainConfig& cfg,
               const std::optional<net::Network>& warm_start = std::nullopt);

double truncate(double u, double beta);

// Truncated prediction; beta = +infinity disables the clamp.
double predict(const net::Network& net, double beta, std::span<const double> x);

struct McParams {
    long points = 10000;
    std::uint64_t seed = 1;
    double support_radius = 1.0;
};

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long points = 0;
};

// Monte-Carlo estimate of the squared L2 distance between the truncated
// predictor and the model, X uniform on [-a,a]^d.
McEstimate l2_error(const net::Network& net, double beta, const hcm::HcmSpec& spec,
                    const McParams& mc);

void save_dataset_csv(const Dataset& data, const std::string& csv_path);
Dataset load_dataset_csv(const std::string& csv_path);

}  // namespace hcmlab::estimator
