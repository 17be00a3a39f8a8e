#include "hcmlab/hcm.hpp"

#include "hcmlab/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hcmlab::hcm {

namespace {

double ipow(double base, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

// sum over monomials of |c| * B^degree; a sup bound over the cube
double poly_sup_bound(const std::vector<std::vector<int>>& mons,
                      const std::vector<double>& coeffs, double cube) {
    double s = 0.0;
    for (std::size_t m = 0; m < mons.size(); ++m) {
        int deg = 0;
        for (int e : mons[m]) deg += e;
        s += std::abs(coeffs[m]) * ipow(cube, deg);
    }
    return s;
}

// coefficient array of the partial derivative d/d u_var
std::pair<std::vector<std::vector<int>>, std::vector<double>> poly_partial(
    const std::vector<std::vector<int>>& mons, const std::vector<double>& coeffs, int var) {
    std::vector<std::vector<int>> out_m;
    std::vector<double> out_c;
    for (std::size_t m = 0; m < mons.size(); ++m) {
        if (mons[m][var] == 0 || coeffs[m] == 0.0) continue;
        auto e = mons[m];
        out_c.push_back(coeffs[m] * e[var]);
        e[var] -= 1;
        out_m.push_back(std::move(e));
    }
    return {std::move(out_m), std::move(out_c)};
}

// upper bound on the Lipschitz constant (Euclidean) of the polynomial
double poly_lipschitz_bound(const std::vector<std::vector<int>>& mons,
                            const std::vector<double>& coeffs, int vars, double cube) {
    double sq = 0.0;
    for (int v = 0; v < vars; ++v) {
        auto [dm, dc] = poly_partial(mons, coeffs, v);
        const double b = poly_sup_bound(dm, dc, cube);
        sq += b * b;
    }
    return std::sqrt(sq);
}

// max over multi-indices |alpha| = q of a Lipschitz bound for the partial
// derivative d^alpha; used as the Hoelder constant when s = 1
double poly_holder_bound(const std::vector<std::vector<int>>& mons,
                         const std::vector<double>& coeffs, int vars, int q, double cube) {
    struct Item {
        std::vector<std::vector<int>> m;
        std::vector<double> c;
    };
    std::vector<Item> frontier{{mons, coeffs}};
    for (int step = 0; step < q; ++step) {
        std::vector<Item> next;
        for (const auto& it : frontier) {
            for (int v = 0; v < vars; ++v) {
                auto [dm, dc] = poly_partial(it.m, it.c, v);
                next.push_back({std::move(dm), std::move(dc)});
            }
        }
        frontier = std::move(next);
    }
    double best = 0.0;
    for (const auto& it : frontier)
        best = std::max(best, poly_lipschitz_bound(it.m, it.c, vars, cube));
    return best;
}

void append_smoothness_issues(const SmoothnessSpec& sm, const std::string& path,
                              std::vector<ValidationIssue>& issues) {
    if (!(sm.s > 0.0 && sm.s <= 1.0))
        issues.push_back({"smoothness", path, "s must lie in (0,1]"});
    if (std::abs(sm.p - (sm.q + sm.s)) > 1e-12)
        issues.push_back({"smoothness", path, "p != q + s"});
    if (sm.p < 1.0) issues.push_back({"smoothness", path, "p must be >= 1"});
    if (sm.lipschitz < 1.0) issues.push_back({"smoothness", path, "lipschitz must be >= 1"});
    if (!(sm.holder_const > 0.0)) issues.push_back({"smoothness", path, "C must be > 0"});
    if (!(sm.sup_bound > 0.0)) issues.push_back({"smoothness", path, "sup bound must be > 0"});
}

}  // namespace

void SmoothnessSpec::check() const {
    std::vector<ValidationIssue> issues;
    append_smoothness_issues(*this, "", issues);
    if (!issues.empty()) throw std::invalid_argument("invalid smoothness: " + issues[0].message);
}

std::vector<std::vector<int>> monomials(int vars, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(vars, 0);
    // graded lexicographic: by total degree, then lexicographic on exponents
    for (int total = 0; total <= degree; ++total) {
        std::vector<std::vector<int>> level;
        std::vector<int> expo(vars, 0);
        // enumerate all exponent tuples summing to `total`
        auto rec = [&](auto&& self, int var, int remaining) -> void {
            if (var == vars - 1) {
                expo[var] = remaining;
                level.push_back(expo);
                return;
            }
            for (int e = remaining; e >= 0; --e) {
                expo[var] = e;
                self(self, var + 1, remaining - e);
            }
        };
        rec(rec, 0, total);
        for (auto& m : level) out.push_back(std::move(m));
    }
    return out;
}

double NodeFunction::eval(std::span<const double> u) const {
    if (static_cast<int>(u.size()) != arity)
        throw std::invalid_argument("node function arity mismatch");
    if (kind == "affine") {
        double s = params[arity];
        for (int i = 0; i < arity; ++i) s += params[i] * u[i];
        return s;
    }
    if (kind == "product") {
        double s = 1.0;
        for (double v : u) s *= v;
        return s;
    }
    if (kind == "polynomial") {
        const int degree = static_cast<int>(params[0]);
        const auto mons = monomials(arity, degree);
        double s = 0.0;
        for (std::size_t m = 0; m < mons.size(); ++m) {
            double t = params[1 + m];
            if (t == 0.0) continue;
            for (int v = 0; v < arity; ++v) t *= ipow(u[v], mons[m][v]);
            s += t;
        }
        return s;
    }
    if (kind == "radial") {
        const double width = params[0];
        const double scale = params[1];
        double q = 0.0;
        for (double v : u) q += v * v;
        return scale * std::exp(-q / (width * width));
    }
    throw std::invalid_argument("unknown node function kind: " + kind);
}

NodeFunction make_node_function(const std::string& kind, std::vector<double> params,
                                int arity, double cube_radius) {
    if (arity < 1) throw std::invalid_argument("arity must be >= 1");
    if (cube_radius <= 0.0) throw std::invalid_argument("cube radius must be > 0");
    NodeFunction f;
    f.kind = kind;
    f.params = std::move(params);
    f.arity = arity;
    SmoothnessSpec sm;
    const double B = cube_radius;

    if (kind == "affine") {
        if (static_cast<int>(f.params.size()) != arity + 1)
            throw std::invalid_argument("affine expects K weights plus a bias");
        double l1 = 0.0, l2sq = 0.0;
        for (int i = 0; i < arity; ++i) {
            l1 += std::abs(f.params[i]);
            l2sq += f.params[i] * f.params[i];
        }
        const double l2 = std::sqrt(l2sq);
        sm.p = 1.0;
        sm.q = 0;
        sm.s = 1.0;
        sm.holder_const = std::max(l2, 1e-12);
        sm.lipschitz = std::max(1.0, l2);
        sm.sup_bound = std::max(std::abs(f.params[arity]) + l1 * B, 1e-12);
    } else if (kind == "product") {
        if (!f.params.empty()) throw std::invalid_argument("product takes no parameters");
        sm.p = 2.0;
        sm.q = 1;
        sm.s = 1.0;
        sm.holder_const =
            std::max(arity >= 2 ? std::sqrt(double(arity - 1)) * ipow(B, arity - 2) : 0.0, 1e-12);
        sm.lipschitz = std::max(1.0, std::sqrt(double(arity)) * ipow(B, arity - 1));
        sm.sup_bound = ipow(B, arity);
    } else if (kind == "polynomial") {
        if (f.params.empty()) throw std::invalid_argument("polynomial expects [degree, coeffs...]");
        const int degree = static_cast<int>(f.params[0]);
        if (degree < 0 || f.params[0] != degree)
            throw std::invalid_argument("polynomial degree must be a nonnegative integer");
        const auto mons = monomials(arity, degree);
        if (f.params.size() != mons.size() + 1) {
            std::ostringstream os;
            os << "polynomial of degree " << degree << " in " << arity << " variables needs "
               << mons.size() << " coefficients, got " << (f.params.size() - 1);
            throw std::invalid_argument(os.str());
        }
        std::vector<double> coeffs(f.params.begin() + 1, f.params.end());
        sm.q = std::max(degree - 1, 0);
        sm.s = 1.0;
        sm.p = sm.q + sm.s;
        sm.holder_const = std::max(poly_holder_bound(mons, coeffs, arity, sm.q, B), 1e-12);
        sm.lipschitz = std::max(1.0, poly_lipschitz_bound(mons, coeffs, arity, B));
        sm.sup_bound = std::max(poly_sup_bound(mons, coeffs, B), 1e-12);
    } else if (kind == "radial") {
        if (f.params.size() != 2) throw std::invalid_argument("radial expects [width, scale]");
        const double w = f.params[0];
        const double scale = std::abs(f.params[1]);
        if (w <= 0.0) throw std::invalid_argument("radial width must be > 0");
        sm.p = 3.0;
        sm.q = 2;
        sm.s = 1.0;
        const double w2 = w * w;
        const double third = scale * (8.0 * ipow(B, 3) / (w2 * w2 * w2) + 12.0 * B / (w2 * w2));
        sm.holder_const = std::max(std::sqrt(double(arity)) * third, 1e-12);
        sm.lipschitz = std::max(1.0, scale * std::sqrt(2.0) * std::exp(-0.5) / w);
        sm.sup_bound = std::max(scale, 1e-12);
    } else {
        throw std::invalid_argument("unknown node function kind: " + kind);
    }
    f.smoothness = sm;
    return f;
}

namespace {

void collect_nodes(const HcmNode& node, const std::string& path,
                   std::vector<std::pair<std::string, const HcmNode*>>& out) {
    out.emplace_back(path, &node);
    for (std::size_t c = 0; c < node.children.size(); ++c)
        collect_nodes(node.children[c], path + "." + std::to_string(c), out);
}

void validate_node(const HcmNode& node, const HcmSpec& spec, const std::string& path,
                   std::vector<ValidationIssue>& issues) {
    const int n_children =
        node.is_leaf() ? static_cast<int>(node.coords.size()) : static_cast<int>(node.children.size());
    if (n_children != node.g.arity) {
        std::ostringstream os;
        os << "node arity " << node.g.arity << " but " << n_children << " children";
        issues.push_back({"arity", path, os.str()});
    }
    if (node.is_leaf()) {
        if (node.level != 1)
            issues.push_back({"level", path, "leaf nodes must have level 1"});
        for (int c : node.coords) {
            if (c < 1 || c > spec.d) {
                std::ostringstream os;
                os << "pi maps to coordinate " << c << " outside {1,...," << spec.d << "}";
                issues.push_back({"pi-range", path, os.str()});
            }
        }
    } else {
        if (!node.coords.empty())
            issues.push_back({"structure", path, "inner node carries leaf coordinates"});
        for (std::size_t c = 0; c < node.children.size(); ++c) {
            const auto& child = node.children[c];
            if (child.level != node.level - 1) {
                std::ostringstream os;
                os << "child level " << child.level << " but parent level " << node.level;
                issues.push_back({"level", path + "." + std::to_string(c), os.str()});
            }
            validate_node(child, spec, path + "." + std::to_string(c), issues);
        }
    }
    append_smoothness_issues(node.g.smoothness, path, issues);
}

}  // namespace

double evaluate_hcm(const HcmSpec& spec, std::span<const double> x) {
    if (static_cast<int>(x.size()) != spec.d)
        throw std::invalid_argument("input has wrong dimension");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("input must be finite");

    auto rec = [&](auto&& self, const HcmNode& node) -> double {
        std::vector<double> args;
        args.reserve(node.g.arity);
        if (node.is_leaf()) {
            for (int c : node.coords) args.push_back(x[c - 1]);
        } else {
            for (const auto& child : node.children) args.push_back(self(self, child));
        }
        return node.g.eval(args);
    };
    return rec(rec, spec.root);
}

DerivedConstants derived_constants(const HcmSpec& spec) {
    DerivedConstants dc;
    dc.n_tilde.assign(spec.level, 0);
    std::set<std::pair<double, int>> pk;

    auto walk = [&](auto&& self, const HcmNode& node) -> void {
        dc.k_max = std::max(dc.k_max, node.g.arity);
        dc.p_max = std::max(dc.p_max, node.g.smoothness.p);
        dc.g_max = std::max(dc.g_max, node.g.smoothness.sup_bound);
        dc.c_lip = std::max(dc.c_lip, node.g.smoothness.lipschitz);
        pk.insert({node.g.smoothness.p, node.g.arity});
        if (node.level >= 1 && node.level <= spec.level) dc.n_tilde[node.level - 1] += 1;
        for (const auto& child : node.children) self(self, child);
    };
    dc.g_max = 1.0;
    dc.c_lip = 1.0;
    walk(walk, spec.root);
    dc.pk_pairs.assign(pk.begin(), pk.end());
    return dc;
}

ValidationReport validate_hcm(const HcmSpec& spec, int audit_pairs, std::uint64_t audit_seed) {
    ValidationReport report;
    if (spec.d < 1) report.issues.push_back({"dimension", "", "d must be >= 1"});
    if (spec.level < 1) report.issues.push_back({"level", "", "level must be >= 1"});
    if (spec.root.level != spec.level)
        report.issues.push_back({"level", "root", "root level differs from declared level"});
    validate_node(spec.root, spec, "root", report.issues);

    if (report.issues.empty()) {
        report.derived = derived_constants(spec);
        // the counting recursion: N_l = 1, N_i = sum of level-(i+1) arities
        std::vector<long long> expect(spec.level, 0);
        expect[spec.level - 1] = 1;
        for (int i = spec.level - 1; i >= 1; --i) {
            long long s = 0;
            for (const HcmNode* n : flatten_by_level(spec, i + 1)) s += n->g.arity;
            expect[i - 1] = s;
        }
        if (expect != report.derived.n_tilde)
            report.issues.push_back({"counting", "", "submodel counts do not match the recursion"});
    }

    if (report.issues.empty() && audit_pairs > 0) {
        Rng rng(audit_seed);
        std::vector<std::pair<std::string, const HcmNode*>> nodes;
        collect_nodes(spec.root, "root", nodes);
        const double B = spec.cube_radius;
        for (const auto& [path, node] : nodes) {
            const int K = node->g.arity;
            std::vector<double> u(K), v(K);
            for (int t = 0; t < audit_pairs; ++t) {
                double dist_sq = 0.0;
                for (int i = 0; i < K; ++i) {
                    u[i] = rng.uniform(-B, B);
                    v[i] = rng.uniform(-B, B);
                    dist_sq += (u[i] - v[i]) * (u[i] - v[i]);
                }
                const double lhs = std::abs(node->g.eval(u) - node->g.eval(v));
                if (lhs > node->g.smoothness.lipschitz * std::sqrt(dist_sq) + 1e-12) {
                    report.issues.push_back(
                        {"lipschitz-audit", path, "sampled difference quotient exceeds bound"});
                    break;
                }
            }
        }
    }

    report.ok = report.issues.empty();
    return report;
}

std::vector<const HcmNode*> flatten_by_level(const HcmSpec& spec, int level) {
    std::vector<const HcmNode*> out;
    auto walk = [&](auto&& self, const HcmNode& node) -> void {
        if (node.level == level) {
            out.push_back(&node);
            return;
        }
        for (const auto& child : node.children) self(self, child);
    };
    walk(walk, spec.root);
    return out;
}

std::vector<std::pair<NodeId, const HcmNode*>> all_nodes(const HcmSpec& spec) {
    std::vector<std::pair<NodeId, const HcmNode*>> out;
    for (int level = 1; level <= spec.level; ++level) {
        const auto nodes = flatten_by_level(spec, level);
        for (std::size_t j = 0; j < nodes.size(); ++j)
            out.push_back({NodeId{level, static_cast<int>(j + 1)}, nodes[j]});
    }
    return out;
}

namespace {

HcmNode node_from_json(const nlohmann::json& j, double cube_radius) {
    HcmNode node;
    const std::string kind = j.at("kind").get<std::string>();
    std::vector<double> params;
    if (j.contains("params")) params = j.at("params").get<std::vector<double>>();

    int arity = 0;
    if (j.contains("coords")) {
        node.coords = j.at("coords").get<std::vector<int>>();
        arity = static_cast<int>(node.coords.size());
        node.level = 1;
    } else if (j.contains("children")) {
        for (const auto& cj : j.at("children"))
            node.children.push_back(node_from_json(cj, cube_radius));
        arity = static_cast<int>(node.children.size());
        int max_child = 0;
        for (const auto& c : node.children) max_child = std::max(max_child, c.level);
        node.level = max_child + 1;
    } else {
        throw std::invalid_argument("node needs either 'coords' or 'children'");
    }

    node.g = make_node_function(kind, std::move(params), arity, cube_radius);
    if (j.contains("smoothness")) {
        const auto& sj = j.at("smoothness");
        auto& sm = node.g.smoothness;
        if (sj.contains("p")) sm.p = sj.at("p").get<double>();
        if (sj.contains("q"))
            sm.q = sj.at("q").get<int>();
        else if (sj.contains("p"))
            sm.q = static_cast<int>(std::ceil(sm.p)) - 1;
        sm.s = sm.p - sm.q;
        if (sj.contains("holder")) sm.holder_const = sj.at("holder").get<double>();
        if (sj.contains("lipschitz")) sm.lipschitz = sj.at("lipschitz").get<double>();
        if (sj.contains("sup")) sm.sup_bound = sj.at("sup").get<double>();
    }
    return node;
}

nlohmann::json node_to_json(const HcmNode& node) {
    nlohmann::json j;
    j["kind"] = node.g.kind;
    j["params"] = node.g.params;
    if (node.is_leaf()) {
        j["coords"] = node.coords;
    } else {
        nlohmann::json kids = nlohmann::json::array();
        for (const auto& c : node.children) kids.push_back(node_to_json(c));
        j["children"] = std::move(kids);
    }
    const auto& sm = node.g.smoothness;
    j["smoothness"] = {{"p", sm.p},         {"q", sm.q},
                       {"holder", sm.holder_const}, {"lipschitz", sm.lipschitz},
                       {"sup", sm.sup_bound}};
    return j;
}

}  // namespace

HcmSpec hcm_from_json(const nlohmann::json& j) {
    HcmSpec spec;
    spec.d = j.at("d").get<int>();
    spec.cube_radius = j.value("cube_radius", 2.0);
    spec.root = node_from_json(j.at("root"), spec.cube_radius);
    spec.level = j.contains("level") ? j.at("level").get<int>() : spec.root.level;
    return spec;
}

nlohmann::json hcm_to_json(const HcmSpec& spec) {
    nlohmann::json j;
    j["d"] = spec.d;
    j["level"] = spec.level;
    j["cube_radius"] = spec.cube_radius;
    j["root"] = node_to_json(spec.root);
    return j;
}

HcmSpec load_hcm_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open hcm file: " + path);
    nlohmann::json j;
    in >> j;
    return hcm_from_json(j);
}

nlohmann::json report_to_json(const ValidationReport& report) {
    nlohmann::json j;
    j["ok"] = report.ok;
    nlohmann::json issues = nlohmann::json::array();
    for (const auto& it : report.issues)
        issues.push_back({{"code", it.code}, {"path", it.path}, {"message", it.message}});
    j["issues"] = std::move(issues);
    if (report.ok) {
        nlohmann::json pk = nlohmann::json::array();
        for (auto [p, k] : report.derived.pk_pairs) pk.push_back({{"p", p}, {"k", k}});
        j["derived"] = {{"k_max", report.derived.k_max}, {"p_max", report.derived.p_max},
                        {"n_tilde", report.derived.n_tilde}, {"g_max", report.derived.g_max},
                        {"c_lip", report.derived.c_lip},     {"pk_pairs", std::move(pk)}};
    }
    return j;
}

}  // namespace hcmlab::hcm
