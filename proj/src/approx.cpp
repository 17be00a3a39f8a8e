#include "hcmlab/approx.hpp"

#include "hcmlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hcmlab::approx {

namespace {

double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
    return std::round(r);
}

// smallest integer t with 2^t >= x
int ceil_log2(double x) {
    int t = 0;
    double v = 1.0;
    while (v < x - 1e-12) {
        v *= 2.0;
        ++t;
    }
    return t;
}

int depth_per_node(const hcm::DerivedConstants& dc) {
    return 8 + ceil_log2(std::max(double(dc.k_max), dc.p_max + 1.0));
}

// ceil with a snap to nearest integer, so that exact powers such as
// 4096^(1/12) = 2 do not ride floating point noise up to 3
long ceil_snapped(double v) {
    const double r = std::round(v);
    if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(r))) return static_cast<long>(r);
    return static_cast<long>(std::ceil(v));
}

double saturated_exp(double log_value) {
    if (log_value >= std::log(std::numeric_limits<double>::max()))
        return std::numeric_limits<double>::max();
    return std::exp(log_value);
}

}  // namespace

double width_growth_exponent(const std::vector<std::pair<double, int>>& pk_pairs) {
    double best = 0.0;
    for (auto [p, k] : pk_pairs) best = std::max(best, double(k) / (2.0 * (2.0 * p + k)));
    return best;
}

std::pair<double, int> dominant_pair(const std::vector<std::pair<double, int>>& pk_pairs) {
    if (pk_pairs.empty()) throw std::invalid_argument("no (p,K) pairs");
    std::pair<double, int> best = pk_pairs[0];
    double best_exp = -2.0 * best.first / (2.0 * best.first + best.second);
    for (const auto& pk : pk_pairs) {
        const double e = -2.0 * pk.first / (2.0 * pk.first + pk.second);
        // slowest decay wins; ties go to the lexicographically smallest pair
        if (e > best_exp + 1e-15 ||
            (std::abs(e - best_exp) <= 1e-15 && pk < best)) {
            best = pk;
            best_exp = e;
        }
    }
    return best;
}

long resolution_for(long n, double p, int k) {
    const double expo = 1.0 / (2.0 * (2.0 * p + k));
    return std::max<long>(1, ceil_snapped(std::pow(double(n), expo)));
}

ArchitectureSchedule schedule(long n, const hcm::HcmSpec& spec, const ScheduleConstants& constants) {
    if (n < 2) throw std::invalid_argument("sample size must be >= 2");
    const auto dc = hcm::derived_constants(spec);
    ArchitectureSchedule s;
    s.n = n;
    s.width_scale = constants.width_scale;
    s.depth = spec.level * depth_per_node(dc);

    const int p_ceil = static_cast<int>(std::ceil(dc.p_max));
    double growth = 0.0;
    for (auto [p, k] : dc.pk_pairs)
        growth = std::max(growth, std::pow(double(n), double(k) / (2.0 * (2.0 * p + k))));
    s.width_raw = constants.width_scale * std::pow(2.0, dc.k_max) * double(dc.n_tilde[0]) * 29.0 *
                  binom(dc.k_max + p_ceil, p_ceil) * double(dc.k_max) * double(dc.k_max) *
                  dc.p_max * growth;
    s.width = std::max<long>(1, ceil_snapped(s.width_raw));

    s.alpha = std::pow(double(n), constants.c3);
    s.beta = constants.c4 * std::log(double(n));
    s.a_n = std::pow(std::log(double(n)), 3.0 / (2.0 * (5.0 * dc.p_max + 3.0)));
    s.width_exponent = width_growth_exponent(dc.pk_pairs);
    const auto [pb, kb] = dominant_pair(dc.pk_pairs);
    s.dominant_p = pb;
    s.dominant_k = kb;
    s.predicted_exponent = -2.0 * pb / (2.0 * pb + kb);

    for (const auto& [id, node] : hcm::all_nodes(spec)) {
        NodeResolution nr;
        nr.id = id;
        nr.p = node->g.smoothness.p;
        nr.q = node->g.smoothness.q;
        nr.k = node->g.arity;
        nr.m = resolution_for(n, nr.p, nr.k);
        s.resolutions.push_back(nr);
    }
    return s;
}

ApproxPlan plan(const hcm::HcmSpec& spec, const std::vector<NodeResolution>& resolutions,
                double cube_radius, double width_scale) {
    const auto dc = hcm::derived_constants(spec);
    const auto nodes = hcm::all_nodes(spec);
    if (resolutions.size() != nodes.size())
        throw std::invalid_argument("resolution table does not cover the node set");
    for (const auto& r : resolutions)
        if (r.m < 1) throw std::invalid_argument("resolutions must be >= 1");

    ApproxPlan p;
    p.depth_per_node = depth_per_node(dc);
    p.depth = spec.level * p.depth_per_node;
    p.width_scale = width_scale;

    long max_m = 1;
    std::vector<long> level_width(spec.level, 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& [id, node] = nodes[i];
        const auto& res = resolutions[i];
        if (!(res.id == id)) throw std::invalid_argument("resolution table order mismatch");
        NodePlan np;
        np.id = id;
        np.arity = node->g.arity;
        np.p = node->g.smoothness.p;
        np.q = node->g.smoothness.q;
        np.m = res.m;
        max_m = std::max(max_m, res.m);
        const double raw = width_scale * 29.0 * binom(np.arity + np.q, np.q) *
                           double(np.arity) * double(np.arity) * double(np.q + 1) *
                           std::pow(double(np.m), np.arity);
        np.width = std::max<long>(1, ceil_snapped(raw));
        np.target_eps = std::pow(cube_radius, 5.0 * dc.p_max + 3.0) *
                        std::pow(double(np.m), -2.0 * np.p);
        level_width[id.level - 1] += np.width;
        p.nodes.push_back(np);
    }
    p.width = *std::max_element(level_width.begin(), level_width.end());

    p.log_alpha0 = 12.0 * std::log(cube_radius) +
                   6.0 * std::pow(2.0, 2.0 * (dc.k_max + 1) + 1.0) * cube_radius * dc.k_max +
                   (10.0 * dc.p_max + 2.0 * dc.k_max + 10.0) * std::log(double(max_m));
    p.alpha0 = saturated_exp(p.log_alpha0);
    p.alpha_total = saturated_exp(2.0 * p.log_alpha0);
    return p;
}

ApproxPlan plan_for_n(const hcm::HcmSpec& spec, long n, double cube_radius, double width_scale) {
    ScheduleConstants c;
    const auto s = schedule(n, spec, c);
    return plan(spec, s.resolutions, cube_radius, width_scale);
}

double sup_abs_error(const std::function<double(std::span<const double>)>& f,
                     const std::function<double(std::span<const double>)>& g, int dim,
                     double radius, long budget, std::uint64_t seed) {
    double worst = 0.0;
    std::vector<double> x(dim);
    auto probe = [&] {
        worst = std::max(worst, std::abs(f(x) - g(x)));
    };
    if (dim == 1) {
        const long pts = std::max<long>(budget, 3);
        for (long i = 0; i < pts; ++i) {
            x[0] = -radius + 2.0 * radius * double(i) / double(pts - 1);
            probe();
        }
    } else if (dim == 2) {
        const long side = std::max<long>(static_cast<long>(std::sqrt(double(budget))), 3);
        for (long i = 0; i < side; ++i)
            for (long j = 0; j < side; ++j) {
                x[0] = -radius + 2.0 * radius * double(i) / double(side - 1);
                x[1] = -radius + 2.0 * radius * double(j) / double(side - 1);
                probe();
            }
    } else {
        for (long corner = 0; corner < (1L << dim); ++corner) {
            for (int c = 0; c < dim; ++c) x[c] = (corner >> c) & 1 ? radius : -radius;
            probe();
        }
        Rng rng(seed);
        for (long i = 0; i < budget; ++i) {
            for (int c = 0; c < dim; ++c) x[c] = rng.uniform(-radius, radius);
            probe();
        }
    }
    return worst;
}

FitResult fit_subnetwork(const hcm::NodeFunction& g, const net::NetworkClass& shape,
                         double cube_radius, const estimator::TrainConfig& budget,
                         const std::optional<net::Network>& warm_start) {
    const int K = g.arity;
    long n_train = budget.grid_points > 0 ? budget.grid_points
                                          : std::clamp<long>(256L << K, 512, 4096);
    estimator::Dataset data;
    data.xs = Eigen::MatrixXd(n_train, K);
    data.ys = Eigen::VectorXd(n_train);
    Rng rng(mix64(budget.seed, 0x5ab5u));
    std::vector<double> pt(K);
    for (long i = 0; i < n_train; ++i) {
        for (int c = 0; c < K; ++c) {
            pt[c] = rng.uniform(-cube_radius, cube_radius);
            data.xs(i, c) = pt[c];
        }
        data.ys[i] = g.eval(pt);
    }
    data.meta.support_radius = cube_radius;

    auto outcome = estimator::fit(data, shape, budget, warm_start);

    auto g_fn = [&](std::span<const double> u) { return g.eval(u); };
    const long measure_budget = K == 1 ? 2001 : (K == 2 ? 4225 : 8192);
    auto sup_of = [&](const net::Network& n) {
        return sup_abs_error([&](std::span<const double> u) { return n.forward(u); }, g_fn, K,
                             cube_radius, measure_budget, mix64(budget.seed, 0xe44u));
    };

    // zero network of the exact shape: a safe fallback candidate
    net::Network zero;
    zero.input_dim = K;
    int in = K;
    for (int s = 0; s <= shape.depth; ++s) {
        const int out = (s == shape.depth) ? 1 : shape.width;
        net::Layer l;
        l.w = Eigen::MatrixXd::Zero(out, in);
        l.b = Eigen::VectorXd::Zero(out);
        zero.layers.push_back(std::move(l));
        in = out;
    }

    FitResult best;
    best.cube_radius = cube_radius;
    best.network = zero;
    best.measured_sup_error = sup_of(zero);
    best.final_risk = estimator::empirical_risk(zero, data);
    best.converged = outcome.ok;
    if (warm_start) {
        const double e = sup_of(*warm_start);
        if (e < best.measured_sup_error) {
            best.network = *warm_start;
            best.measured_sup_error = e;
            best.final_risk = estimator::empirical_risk(*warm_start, data);
        }
    }
    if (outcome.ok) {
        const double e = sup_of(outcome.network);
        if (e < best.measured_sup_error) {
            best.network = outcome.network;
            best.measured_sup_error = e;
            best.final_risk = outcome.final_risk;
        }
    }
    return best;
}

std::vector<SubnetFit> fit_all_subnetworks(const hcm::HcmSpec& spec, const ApproxPlan& plan,
                                           double a, const estimator::TrainConfig& budget,
                                           std::uint64_t master_seed, int threads) {
    const auto dc = hcm::derived_constants(spec);
    const auto nodes = hcm::all_nodes(spec);
    std::vector<SubnetFit> out(nodes.size());
    const double wide = 2.0 * std::max(dc.g_max, a);

    auto work = [&](std::size_t i) {
        const auto& [id, node] = nodes[i];
        const auto& np = plan.nodes[i];
        net::NetworkClass shape{plan.depth_per_node, static_cast<int>(np.width),
                                plan.alpha0};
        estimator::TrainConfig cfg = budget;
        cfg.seed = mix64(master_seed, static_cast<std::uint64_t>(id.level),
                         static_cast<std::uint64_t>(id.j));
        const double cube = id.level == 1 ? a : wide;
        out[i] = {id, fit_subnetwork(node->g, shape, cube, cfg)};
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < nodes.size(); ++i) work(i);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t)
            futs.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next.fetch_add(1); i < nodes.size(); i = next.fetch_add(1))
                    work(i);
            }));
        for (auto& f : futs) f.get();
    }
    return out;
}

net::Network assemble(const hcm::HcmSpec& spec, const ApproxPlan& plan,
                      const std::vector<SubnetFit>& subnets) {
    const auto nodes = hcm::all_nodes(spec);
    if (subnets.size() != nodes.size())
        throw std::invalid_argument("subnetwork table does not cover the node set");

    auto find_subnet = [&](hcm::NodeId id) -> const net::Network& {
        for (const auto& s : subnets)
            if (s.id == id) return s.fit.network;
        throw std::invalid_argument("missing subnetwork");
    };
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& np = plan.nodes[i];
        const auto& n = find_subnet(np.id);
        if (n.depth() != plan.depth_per_node) {
            std::ostringstream os;
            os << "subnet (" << np.id.level << "," << np.id.j << ") depth " << n.depth()
               << " != planned " << plan.depth_per_node;
            throw std::invalid_argument(os.str());
        }
        for (int w : n.widths())
            if (w != np.width) {
                std::ostringstream os;
                os << "subnet (" << np.id.level << "," << np.id.j << ") width " << w
                   << " != planned " << np.width;
                throw std::invalid_argument(os.str());
            }
    }

    std::vector<std::vector<net::Network>> groups;
    for (int level = 1; level <= spec.level; ++level) {
        const auto level_nodes = hcm::flatten_by_level(spec, level);
        std::vector<net::Network> group;
        for (std::size_t j = 0; j < level_nodes.size(); ++j) {
            const hcm::NodeId id{level, static_cast<int>(j + 1)};
            net::Network sub = find_subnet(id);
            if (level == 1) {
                std::vector<int> idx;
                for (int c : level_nodes[j]->coords) idx.push_back(c - 1);
                sub = net::embed_inputs(sub, idx, spec.d);
            }
            group.push_back(std::move(sub));
        }
        groups.push_back(std::move(group));
    }
    return net::pad_width(net::stack_levels(groups), static_cast<int>(plan.width));
}

PropagationReport error_propagation_bound(const hcm::HcmSpec& spec,
                                          const std::vector<std::pair<hcm::NodeId, double>>& node_errors,
                                          double a) {
    const auto dc = hcm::derived_constants(spec);
    auto eps_of = [&](hcm::NodeId id) {
        for (const auto& [nid, e] : node_errors)
            if (nid == id) {
                if (e < 0.0) throw std::invalid_argument("node errors must be nonnegative");
                return e;
            }
        throw std::invalid_argument("missing node error");
    };

    PropagationReport report;
    if (spec.cube_radius < 2.0 * std::max(dc.g_max, a) - 1e-12) {
        std::ostringstream os;
        os << "metadata cube radius " << spec.cube_radius
           << " does not cover the perturbed range 2*max(g_max,a) = "
           << 2.0 * std::max(dc.g_max, a);
        report.range_issues.push_back(os.str());
    }

    // bounds per level, bottom up; node order within a level matches flatten
    std::vector<std::vector<double>> bounds(spec.level);
    for (int level = 1; level <= spec.level; ++level) {
        const auto level_nodes = hcm::flatten_by_level(spec, level);
        long child_cursor = 0;
        for (std::size_t j = 0; j < level_nodes.size(); ++j) {
            const hcm::NodeId id{level, static_cast<int>(j + 1)};
            const double eps = eps_of(id);
            double bound = eps;
            if (level > 1) {
                const auto* node = level_nodes[j];
                double worst_child = 0.0;
                for (int c = 0; c < node->g.arity; ++c) {
                    const double child_bound = bounds[level - 2][child_cursor + c];
                    worst_child = std::max(worst_child, child_bound);
                    const double child_sup =
                        node->children[c].g.smoothness.sup_bound + child_bound;
                    if (child_sup > 2.0 * dc.g_max + 1e-12) {
                        std::ostringstream os;
                        os << "child " << c << " of node (" << level << "," << j + 1
                           << ") may reach " << child_sup << " > 2 g_max = " << 2.0 * dc.g_max;
                        report.range_issues.push_back(os.str());
                    }
                }
                child_cursor += node->g.arity;
                bound += double(node->g.arity) * dc.c_lip * worst_child;
            }
            bounds[level - 1].push_back(bound);
            report.nodes.push_back({id, eps, bound});
        }
    }
    report.root_bound = bounds[spec.level - 1][0];
    return report;
}

nlohmann::json schedule_to_json(const ArchitectureSchedule& s) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& r : s.resolutions)
        m.push_back({{"level", r.id.level}, {"j", r.id.j}, {"p", r.p}, {"q", r.q},
                     {"k", r.k}, {"m", r.m}});
    return {{"n", s.n},
            {"depth", s.depth},
            {"width", s.width},
            {"width_raw", s.width_raw},
            {"alpha", s.alpha},
            {"beta", s.beta},
            {"a_n", s.a_n},
            {"width_scale", s.width_scale},
            {"width_exponent", s.width_exponent},
            {"predicted_exponent", s.predicted_exponent},
            {"dominant", {{"p", s.dominant_p}, {"k", s.dominant_k}}},
            {"resolutions", std::move(m)}};
}

nlohmann::json plan_to_json(const ApproxPlan& p) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& np : p.nodes)
        nodes.push_back({{"level", np.id.level}, {"j", np.id.j}, {"arity", np.arity},
                         {"p", np.p}, {"q", np.q}, {"m", np.m}, {"width", np.width},
                         {"target_eps", np.target_eps}});
    return {{"depth_per_node", p.depth_per_node},
            {"depth", p.depth},
            {"width", p.width},
            {"log_alpha0", p.log_alpha0},
            {"alpha0", p.alpha0},
            {"alpha_total", p.alpha_total},
            {"width_scale", p.width_scale},
            {"nodes", std::move(nodes)}};
}

}  // namespace hcmlab::approx
