#pragma once

#include <nlohmann/json_fwd.hpp>

#include <span>
#include <string>
#include <vector>

namespace hcmlab::hcm {

// Smoothness metadata of a node function: p = q + s with s in (0,1], plus the
// Hoelder constant, a Lipschitz bound and a sup bound, both valid on the
// node's working cube.
struct SmoothnessSpec {
    double p = 1.0;
    int q = 0;
    double s = 1.0;
    double holder_const = 1.0;  // C
    double lipschitz = 1.0;     // C_Lip, >= 1
    double sup_bound = 1.0;     // bound on |g| over the working cube

    void check() const;  // throws std::invalid_argument on violation
};

// A concrete function from the catalog. `params` is interpreted per kind:
//   affine:     [w_1..w_K, b]
//   product:    [] (plain coordinate product)
//   polynomial: [degree, coefficients...] with monomials of total degree
//               <= degree enumerated in graded lexicographic order
//   radial:     [width, scale] for scale * exp(-|u|^2 / width^2)
struct NodeFunction {
    std::string kind;
    std::vector<double> params;
    int arity = 1;  // K
    SmoothnessSpec smoothness;

    double eval(std::span<const double> u) const;
};

// Factory deriving the smoothness metadata over [-cube_radius, cube_radius]^K.
NodeFunction make_node_function(const std::string& kind, std::vector<double> params,
                                int arity, double cube_radius);

// Exponent tuples of all monomials in `vars` variables with total degree
// <= degree, graded lexicographic order; defines the polynomial layout.
std::vector<std::vector<int>> monomials(int vars, int degree);

struct HcmNode {
    NodeFunction g;
    std::vector<HcmNode> children;  // inner node: child submodels
    std::vector<int> coords;        // leaf: 1-based input coordinates (the pi map)
    int level = 1;

    bool is_leaf() const { return children.empty(); }
};

struct DerivedConstants {
    int k_max = 0;
    double p_max = 0.0;
    std::vector<long long> n_tilde;  // n_tilde[i-1] = number of level-i submodels
    double g_max = 1.0;              // max(sup bounds, 1)
    double c_lip = 1.0;              // max node Lipschitz bound
    std::vector<std::pair<double, int>> pk_pairs;  // distinct (p, K) over nodes
};

struct HcmSpec {
    int d = 1;
    int level = 1;
    double cube_radius = 2.0;  // working cube for node metadata
    HcmNode root;
};

// (level, index-within-level), 1-based, matching the recursion bookkeeping.
struct NodeId {
    int level = 1;
    int j = 1;
};

inline bool operator==(const NodeId& a, const NodeId& b) {
    return a.level == b.level && a.j == b.j;
}

struct ValidationIssue {
    std::string code;
    std::string path;
    std::string message;
};

struct ValidationReport {
    bool ok = false;
    std::vector<ValidationIssue> issues;
    DerivedConstants derived;  // meaningful only when ok
};

double evaluate_hcm(const HcmSpec& spec, std::span<const double> x);

// Structural validation (arities, pi range, level consistency) and, when
// audit_pairs > 0, a sampled difference-quotient audit of each node's
// declared Lipschitz bound.
ValidationReport validate_hcm(const HcmSpec& spec, int audit_pairs = 0,
                              std::uint64_t audit_seed = 1);

DerivedConstants derived_constants(const HcmSpec& spec);

// Nodes in level order (level 1 first), left to right within a level.
// Children of node (j,i) occupy a consecutive range at level i-1.
std::vector<const HcmNode*> flatten_by_level(const HcmSpec& spec, int level);
std::vector<std::pair<NodeId, const HcmNode*>> all_nodes(const HcmSpec& spec);

HcmSpec hcm_from_json(const nlohmann::json& j);
nlohmann::json hcm_to_json(const HcmSpec& spec);
HcmSpec load_hcm_file(const std::string& path);
nlohmann::json report_to_json(const ValidationReport& report);

}  // namespace hcmlab::hcm
