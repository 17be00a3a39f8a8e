#include "hcmlab/approx.hpp"
#include "hcmlab/complexity.hpp"
#include "hcmlab/estimator.hpp"
#include "hcmlab/hcm.hpp"
#include "hcmlab/lab.hpp"
#include "hcmlab/network.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using nlohmann::json;
namespace hcm = hcmlab::hcm;
namespace net = hcmlab::net;
namespace approx = hcmlab::approx;
namespace estimator = hcmlab::estimator;
namespace complexity = hcmlab::complexity;
namespace lab = hcmlab::lab;

namespace {

std::vector<double> parse_vector(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

void emit(const json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << std::endl;
    } else {
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for sigmoid-network regression on hierarchical composition models"};
    app.require_subcommand(1);

    std::string out_path;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string config_path;
    app.add_option("--out", out_path, "write the result to this path instead of stdout");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads for independent cells");
    app.add_option("--config", config_path, "JSON config (rate) or parameter file");

    // hcm validate
    auto* hcm_cmd = app.add_subcommand("hcm", "hierarchical composition model utilities");
    auto* validate_cmd = hcm_cmd->add_subcommand("validate", "validate an hcm JSON file");
    std::string hcm_path;
    int audit_pairs = 1000;
    validate_cmd->add_option("file", hcm_path, "hcm JSON file")->required();
    validate_cmd->add_option("--audit-pairs", audit_pairs, "difference-quotient samples per node");

    // net eval
    auto* net_cmd = app.add_subcommand("net", "network utilities");
    auto* eval_cmd = net_cmd->add_subcommand("eval", "evaluate a stored network");
    std::string net_path, x_csv;
    eval_cmd->add_option("file", net_path, "network weight JSON")->required();
    eval_cmd->add_option("--x", x_csv, "comma-separated input vector")->required();
    double beta_opt = std::numeric_limits<double>::infinity();
    eval_cmd->add_option("--beta", beta_opt, "truncation level (default: off)");

    // approx plan | assemble | check
    auto* approx_cmd = app.add_subcommand("approx", "composed-approximant machinery");
    std::string approx_hcm;
    long approx_n = 1000;
    double width_scale = 1.0;
    double cube_a = 1.0;
    int epochs = 300;
    double lr = 0.1;
    int restarts = 1;
    std::string net_out;
    for (auto* sub : {approx_cmd->add_subcommand("plan", "per-node shapes for a sample size"),
                      approx_cmd->add_subcommand("assemble", "train subnetworks and splice them"),
                      approx_cmd->add_subcommand("check", "assemble and verify the propagation bound")}) {
        sub->add_option("file", approx_hcm, "hcm JSON file")->required();
        sub->add_option("--n", approx_n, "sample size driving the resolutions");
        sub->add_option("--width-scale", width_scale, "width prefactor shrink");
        sub->add_option("--a", cube_a, "data cube radius");
        if (sub->get_name() != "plan") {
            sub->add_option("--epochs", epochs, "training epochs per node");
            sub->add_option("--lr", lr, "training step size");
            sub->add_option("--restarts", restarts, "training restarts per node");
            sub->add_option("--net-out", net_out, "write the assembled network here");
        }
    }

    // cover
    auto* cover_cmd = app.add_subcommand("cover", "explicit sup-norm cover of a tiny class");
    int cov_L = 1, cov_r = 1, cov_d = 1;
    double cov_alpha = 1.0, cov_a = 1.0, cov_eps = 0.5, c28 = 1.0;
    long cov_members = 1000, cov_grid = 200, cov_budget = 200000;
    bool cov_enumerate = true;
    cover_cmd->add_option("--depth", cov_L, "L");
    cover_cmd->add_option("--width", cov_r, "r");
    cover_cmd->add_option("--alpha", cov_alpha, "coefficient bound");
    cover_cmd->add_option("--cube", cov_a, "evaluation cube radius");
    cover_cmd->add_option("--dim", cov_d, "input dimension");
    cover_cmd->add_option("--eps", cov_eps, "cover radius");
    cover_cmd->add_option("--c28", c28, "bound constant");
    cover_cmd->add_option("--members", cov_members, "random members for the verification");
    cover_cmd->add_option("--grid", cov_grid, "evaluation points per member");
    cover_cmd->add_option("--budget", cov_budget, "enumeration budget");
    cover_cmd->add_flag("--enumerate,!--no-enumerate", cov_enumerate, "enumerate the cover");

    // bound
    auto* bound_cmd = app.add_subcommand("bound", "entropy + approximation rate assembly");
    std::string bound_hcm;
    long bound_n = 100000;
    double c4 = 1.0, c18 = 1.0;
    bound_cmd->add_option("file", bound_hcm, "hcm JSON file")->required();
    bound_cmd->add_option("--n", bound_n, "sample size");
    bound_cmd->add_option("--c4", c4, "truncation constant");
    bound_cmd->add_option("--c18", c18, "estimation constant");

    // rate
    auto* rate_cmd = app.add_subcommand("rate", "rate-of-convergence sweep from a JSON config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed()) {
            const auto spec = hcm::load_hcm_file(hcm_path);
            const auto report = hcm::validate_hcm(spec, audit_pairs, seed);
            emit(hcm::report_to_json(report), out_path);
            return report.ok ? 0 : 1;
        }
        if (eval_cmd->parsed()) {
            const auto network = net::load_network(net_path);
            const auto x = parse_vector(x_csv);
            const double value = estimator::predict(network, beta_opt, x);
            emit(json{{"value", value}}, out_path);
            return 0;
        }
        if (approx_cmd->parsed()) {
            const auto spec = hcm::load_hcm_file(approx_hcm);
            const auto validation = hcm::validate_hcm(spec);
            if (!validation.ok) {
                emit(hcm::report_to_json(validation), out_path);
                return 1;
            }
            const auto pl = approx::plan_for_n(spec, approx_n, spec.cube_radius, width_scale);
            const bool want_assemble = approx_cmd->get_subcommand("assemble")->parsed() ||
                                       approx_cmd->get_subcommand("check")->parsed();
            if (!want_assemble) {
                emit(approx::plan_to_json(pl), out_path);
                return 0;
            }
            estimator::TrainConfig budget;
            budget.epochs = epochs;
            budget.learning_rate = lr;
            budget.restarts = restarts;
            const auto fits = approx::fit_all_subnetworks(spec, pl, cube_a, budget, seed, threads);
            const auto assembled = approx::assemble(spec, pl, fits);
            json result;
            result["plan"] = approx::plan_to_json(pl);
            json node_errors = json::array();
            std::vector<std::pair<hcm::NodeId, double>> eps;
            for (const auto& f : fits) {
                node_errors.push_back({{"level", f.id.level}, {"j", f.id.j},
                                       {"sup_error", f.fit.measured_sup_error},
                                       {"cube", f.fit.cube_radius},
                                       {"converged", f.fit.converged}});
                eps.push_back({f.id, f.fit.measured_sup_error});
            }
            result["node_errors"] = std::move(node_errors);
            if (!net_out.empty()) {
                net::save_network(assembled, net_out);
                result["network"] = net_out;
            }
            bool ok = true;
            if (approx_cmd->get_subcommand("check")->parsed()) {
                const auto prop = approx::error_propagation_bound(spec, eps, cube_a);
                const double measured = approx::sup_abs_error(
                    [&](std::span<const double> x) { return assembled.forward(x); },
                    [&](std::span<const double> x) { return hcm::evaluate_hcm(spec, x); },
                    spec.d, cube_a, 10000, seed);
                result["root_bound"] = prop.root_bound;
                result["measured_sup_error"] = measured;
                result["range_issues"] = prop.range_issues;
                ok = prop.range_issues.empty() && measured <= prop.root_bound;
                result["ok"] = ok;
            }
            emit(result, out_path);
            return ok ? 0 : 1;
        }
        if (cover_cmd->parsed()) {
            complexity::CoverSpec spec;
            spec.epsilon = cov_eps;
            spec.cls = {cov_L, cov_r, cov_alpha};
            spec.a = cov_a;
            spec.d = cov_d;
            json result;
            result["log_bound"] = complexity::covering_bound_log(spec, c28);
            if (cov_enumerate) {
                const auto cover = complexity::build_cover(spec, cov_budget);
                result["enumerated_count"] = cover.size();
            }
            const auto check = complexity::verify_cover_by_sampling(spec, cov_members, cov_grid, seed);
            result["verify_pass_rate"] = check.pass_rate;
            result["worst_distance"] = check.worst_distance;
            emit(result, out_path);
            return check.pass_rate == 1.0 ? 0 : 1;
        }
        if (bound_cmd->parsed()) {
            const auto spec = hcm::load_hcm_file(bound_hcm);
            const auto dc = hcm::derived_constants(spec);
            approx::ScheduleConstants constants;
            constants.c4 = c4;
            const auto sched = approx::schedule(bound_n, spec, constants);
            complexity::CoverSpec cspec;
            cspec.epsilon = 1.0 / (double(bound_n) * c4 * std::log(double(bound_n)));
            cspec.cls = {sched.depth, static_cast<int>(sched.width), sched.alpha};
            cspec.a = sched.a_n;
            cspec.d = spec.d;
            const double log_cover = complexity::covering_bound_log(cspec);
            double approx_err = 0.0;
            for (const auto& r : sched.resolutions)
                approx_err = std::max(approx_err, std::pow(sched.a_n, 5.0 * dc.p_max + 3.0) *
                                                      std::pow(double(r.m), -2.0 * r.p));
            const double total =
                complexity::generalization_bound(bound_n, log_cover, approx_err * approx_err, c18);
            const auto assembly = complexity::rate_exponent_assembly(dc.pk_pairs);
            emit(json{{"schedule", approx::schedule_to_json(sched)},
                      {"log_cover", log_cover},
                      {"approx_err", approx_err},
                      {"total_bound", total},
                      {"exponents",
                       {{"width", assembly.width_exponent},
                        {"estimation", assembly.estimation_exponent},
                        {"approximation", assembly.approximation_exponent},
                        {"total", assembly.total_exponent},
                        {"predicted", assembly.predicted_exponent}}}},
                 out_path);
            return 0;
        }
        if (rate_cmd->parsed()) {
            if (config_path.empty()) throw std::runtime_error("rate requires --config");
            auto cfg = lab::load_config_file(config_path);
            if (!out_path.empty()) cfg.out_dir = out_path;
            if (app.count("--seed") > 0) cfg.master_seed = seed;
            const auto report = lab::run_rate_experiment(cfg, threads);
            std::cout << lab::report_to_json(report).dump(2) << std::endl;
            return report.self_checks_ok && report.failures.empty() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
