#pragma once

#include "hcmlab/approx.hpp"
#include "hcmlab/estimator.hpp"
#include "hcmlab/hcm.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hcmlab::lab {

struct ExperimentConfig {
    hcm::HcmSpec spec;
    std::string hcm_source;  // path or "inline"
    std::vector<long> n_grid;
    int replications = 1;
    double noise_sd = 0.0;
    long mc_points = 10000;
    double support_radius = 1.0;  // a for data generation and MC evaluation
    estimator::TrainConfig train;
    approx::ScheduleConstants constants;
    double c18 = 1.0;
    std::uint64_t master_seed = 1;
    std::string out_dir;

    void check() const;  // n grid strictly increasing with >= 3 points, etc.
};

struct RateRow {
    long n = 0;
    int replicate = 0;
    double l2_error = 0.0;
    double train_risk = 0.0;
    double seconds = 0.0;  // wall time; reported separately from the data CSV
    std::uint64_t seed = 0;
    bool ok = true;
    std::string note;
};

struct RateAggregate {
    long n = 0;
    double mean_err = 0.0;
    double stderr_err = 0.0;
    long count = 0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int points_used = 0;
    std::vector<std::string> warnings;
};

struct RateReport {
    std::vector<RateRow> rows;
    std::vector<RateAggregate> aggregates;
    SlopeFit slope;
    double predicted_exponent = 0.0;
    bool self_checks_ok = true;
    std::vector<std::string> failures;
};

// X uniform on [-a,a]^d i.i.d., Y = m(X) + N(0, noise_sd^2).
estimator::Dataset generate_dataset(const hcm::HcmSpec& spec, long n, double noise_sd, double a,
                                    std::uint64_t seed);

// Ordinary least squares on (ln n, ln err); nonpositive errors are dropped
// with a warning.
SlopeFit fit_slope(const std::vector<std::pair<double, double>>& pairs);

// Aggregation + slope, shared by the real runs and synthetic injections.
RateReport summarize(const std::vector<RateRow>& rows, double predicted_exponent);

// Per (n, replicate): fresh dataset, schedule(n), projected least squares,
// truncation at beta_n, Monte-Carlo error on fresh points. Cell seeds derive
// from hash(master seed, n, replicate). When out_dir is set, writes rate.csv,
// aggregate.csv, timings.csv and manifest.json.
RateReport run_rate_experiment(const ExperimentConfig& cfg, int threads = 1);

ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::string& path);

void write_rate_csv(const std::vector<RateRow>& rows, const std::string& path);
void write_aggregate_csv(const std::vector<RateAggregate>& aggs, const std::string& path);
void write_timings_csv(const std::vector<RateRow>& rows, const std::string& path);
nlohmann::json report_to_json(const RateReport& report);

std::uint64_t cell_seed(std::uint64_t master, long n, int replicate);

}  // namespace hcmlab::lab
