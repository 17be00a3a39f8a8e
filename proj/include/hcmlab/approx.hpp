#pragma once

#include "hcmlab/estimator.hpp"
#include "hcmlab/hcm.hpp"
#include "hcmlab/network.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <vector>

namespace hcmlab::approx {

struct ScheduleConstants {
    double c3 = 2.0;          // weight bound exponent, alpha_n = n^c3
    double c4 = 1.0;          // truncation level, beta_n = c4 ln n
    double width_scale = 1.0; // shrinks the width prefactor, exponent intact
};

struct NodeResolution {
    hcm::NodeId id;
    double p = 1.0;
    int q = 0;
    int k = 1;
    long m = 1;  // per-node resolution, ceil(n^(1/(2(2p+K))))
};

struct ArchitectureSchedule {
    long n = 0;
    int depth = 0;          // L_n
    long width = 0;         // r_n after scaling and ceiling
    double width_raw = 0.0; // before ceiling
    double alpha = 0.0;     // n^c3
    double beta = 0.0;      // c4 ln n
    double a_n = 0.0;       // (ln n)^(3/(2(5 p_max + 3)))
    double width_scale = 1.0;
    double width_exponent = 0.0;    // max K/(2(2p+K)) over the node pairs
    double predicted_exponent = 0.0;  // -2 pbar/(2 pbar + Kbar)
    double dominant_p = 0.0;
    int dominant_k = 0;
    std::vector<NodeResolution> resolutions;
};

struct NodePlan {
    hcm::NodeId id;
    int arity = 1;
    double p = 1.0;
    int q = 0;
    long m = 1;
    long width = 1;          // 29 binom(K+q, q) K^2 (q+1) M^K, scaled
    double target_eps = 0.0; // a^(5 p_max + 3) M^(-2p)
};

struct ApproxPlan {
    int depth_per_node = 0;  // L_0
    int depth = 0;           // level count * L_0
    long width = 0;          // max over levels of the level width sum
    double log_alpha0 = 0.0; // per-node coefficient bound, log scale
    double alpha0 = 0.0;     // exp(log_alpha0) saturated at DBL_MAX
    double alpha_total = 0.0;  // alpha0^2, saturated
    double width_scale = 1.0;
    std::vector<NodePlan> nodes;
};

// exponent helpers shared by the schedule and the rate-assembly check
double width_growth_exponent(const std::vector<std::pair<double, int>>& pk_pairs);
std::pair<double, int> dominant_pair(const std::vector<std::pair<double, int>>& pk_pairs);

long resolution_for(long n, double p, int k);

ArchitectureSchedule schedule(long n, const hcm::HcmSpec& spec, const ScheduleConstants& constants);

// Per-node shapes for the composed approximant. `m_override` (aligned with
// flatten order) replaces the schedule resolutions; width_scale shrinks the
// per-node width prefactor like the schedule one does.
ApproxPlan plan(const hcm::HcmSpec& spec, const std::vector<NodeResolution>& resolutions,
                double cube_radius, double width_scale = 1.0);
ApproxPlan plan_for_n(const hcm::HcmSpec& spec, long n, double cube_radius,
                      double width_scale = 1.0);

struct FitResult {
    net::Network network;
    double measured_sup_error = 0.0;
    double final_risk = 0.0;
    bool converged = true;
    double cube_radius = 0.0;
};

// Trains a network of exactly the given shape against g on
// [-cube_radius, cube_radius]^K and reports the achieved sup error on a
// dense grid. The candidate set always contains the zero network; the best
// candidate by measured sup error is returned.
FitResult fit_subnetwork(const hcm::NodeFunction& g, const net::NetworkClass& shape,
                         double cube_radius, const estimator::TrainConfig& budget,
                         const std::optional<net::Network>& warm_start = std::nullopt);

struct SubnetFit {
    hcm::NodeId id;
    FitResult fit;
};

// Fits every node of the plan. Level-1 nodes train on the data cube
// [-a, a]^K; higher nodes on [-2 max(g_max, a), 2 max(g_max, a)]^K, the range
// their perturbed inputs can reach. Independent per-node seeds.
std::vector<SubnetFit> fit_all_subnetworks(const hcm::HcmSpec& spec, const ApproxPlan& plan,
                                           double a, const estimator::TrainConfig& budget,
                                           std::uint64_t master_seed, int threads = 1);

// Splices the per-node subnetworks into one network of the plan's class;
// forward equals nested subnetwork evaluation exactly.
net::Network assemble(const hcm::HcmSpec& spec, const ApproxPlan& plan,
                      const std::vector<SubnetFit>& subnets);

struct NodeBound {
    hcm::NodeId id;
    double eps = 0.0;    // this node's own sup error
    double bound = 0.0;  // accumulated bound E_j^(i)
};

struct PropagationReport {
    double root_bound = 0.0;
    std::vector<NodeBound> nodes;
    std::vector<std::string> range_issues;
};

// E_j^(1) = eps_j; E_j^(i) = eps_j + K_j * C_Lip * max(child bounds). Also
// checks the |perturbed child| <= 2 g_max range condition using the node sup
// bounds, and that the metadata cube covers that range.
PropagationReport error_propagation_bound(const hcm::HcmSpec& spec,
                                          const std::vector<std::pair<hcm::NodeId, double>>& node_errors,
                                          double a);

nlohmann::json schedule_to_json(const ArchitectureSchedule& s);
nlohmann::json plan_to_json(const ApproxPlan& p);

// sup |f - g| over [-radius, radius]^dim: full grids for dim <= 2, corners
// plus seeded uniform samples otherwise. Budget is the total point count.
double sup_abs_error(const std::function<double(std::span<const double>)>& f,
                     const std::function<double(std::span<const double>)>& g, int dim,
                     double radius, long budget, std::uint64_t seed = 9);

}  // namespace hcmlab::approx
