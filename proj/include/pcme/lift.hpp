#pragma once

// Graphs lifted off a regime graph by the stopping distance, their
// regularized versions psi^{+-} and the checks of the domain approximation
// near the maximal cube of a regime.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcme/corona.hpp"
#include "pcme/dyadic.hpp"
#include "pcme/regdist.hpp"
#include "pcme/whitney.hpp"

namespace pcme {

/// A regime graph f together with the stopping distance of its regime and
/// d[F(t, x')] sampled on the base grid of f. Requires eta^{7/8} <= 1/2.
class RegimeLift {
public:
    RegimeLift(std::shared_ptr<const CubeTree> tree, const Regime& regime, double eta);

    const CubeTree& tree() const { return *tree_; }
    const SampledGraph& f() const { return f_; }
    const StoppingDistance& d() const { return *d_; }
    const std::shared_ptr<const StoppingDistance>& shared_d() const { return d_; }
    const ScalarField& dF() const { return dF_; }
    int maximal() const { return d_->maximal(); }
    double eta() const { return eta_; }
    double K() const { return 1.0 / eta_; }

private:
    std::shared_ptr<const CubeTree> tree_;
    SampledGraph f_;
    std::shared_ptr<const StoppingDistance> d_;
    ScalarField dF_;
    double eta_;
};

struct LiftedGraph {
    SampledGraph graph;
    double alpha = 0.0;  // 15/16 for psi
    int sign = 1;
    bool smoothed = false;  // psi = f +- eta^{15/16} H, otherwise g = f +- eta^alpha d[F]
    double lip = 0.0;       // sampled Lip(1/2,1) constant
    double lip_bound = 0.0;  // 3 eta^alpha for g; for psi eta + eta^{15/16} c3 with c3 measured on H
    double min_dG_ratio = 0.0;  // d[G] / d[F] over the samples (g only)
    double max_dG_ratio = 0.0;

    double operator()(const ParaPoint& base) const { return graph.eval(base); }
};

/// g_alpha = f + sign eta^alpha d[F]. Asserts the sampled Lip(1/2,1) bound
/// 3 eta^alpha when f itself has constant at most eta, and
/// (1/2) d[F] <= d[G] <= 2 d[F] at every sample. Throws ParameterError for
/// alpha outside [7/8, 31/32].
LiftedGraph lift_graph(const RegimeLift& ctx, double alpha, int sign);

struct SandwichReport {
    bool holds = true;
    double min_upper = 0.0;  // min over samples of (g_{7/8} - psi) / (eta^{7/8} d[F]) on the + side, mirrored on -
    double min_lower = 0.0;  // min of (psi - g_{31/32}) / (eta^{31/32} d[F]), mirrored
    std::size_t samples = 0;
    std::size_t excluded = 0;  // samples where H is not complete
    ParaPoint witness;
    std::string failure;
};

struct PsiPair {
    LiftedGraph plus;
    LiftedGraph minus;
    std::shared_ptr<const HField> H;
    ScalarField H_samples;
    SandwichReport sandwich;
    double c1 = 0.0, c2 = 0.0;  // measured range of H / h on interior samples
    double pbmo_f = 0.0;        // || D_t^{1/2} f ||_{P-BMO}
    double pbmo_plus = 0.0;
    double pbmo_minus = 0.0;
    double pbmo_bound = 0.0;    // 1 + b2
};

struct PsiOptions {
    bool assert_sandwich = true;
    /// Window of the P-BMO measurement; dim < 0 means the samples where H is complete.
    Box pbmo_window = Box{0, 0, {}, {}, -1};
};

/// psi^{+-} = f +- eta^{15/16} H with H the regularized distance of
/// h = (1/2) d[F]. Measures the sandwich g_{7/8} >= psi^+ >= g_{31/32}
/// (mirrored for psi^-) on the samples where H is complete and, when
/// requested, throws AssertionFailure naming the first failing sample.
PsiPair build_psi(const RegimeLift& ctx, const PsiOptions& opt = {});
void require_sandwich(const SandwichReport& r);

struct Check {
    std::string name;
    bool pass = true;
    double value = 0.0;  // measured quantity
    double bound = 0.0;  // the bound it is compared with
    std::size_t samples = 0;
    std::size_t excluded = 0;
    std::string witness;
};

/// E below Gamma^+ near the maximal cube: for every E sample in `window`,
/// (a) (1/8) eta^alpha d <= dist(p, Gamma^+) <= 3 eta^alpha d and
/// (b) sign (g - x_n) >= (1/4) eta^alpha d; also records
/// max dist(p, Gamma) / (eta d), the constant of the preceding lemma.
std::vector<Check> check_E_below(const RegimeLift& ctx, const LiftedGraph& g, const ParaBall& window);

struct DomainOptions {
    double M0 = 4.0;
    Box whitney_domain = Box{0, 0, {}, {}, -1};  // dim < 0: chosen around the maximal cube
    WhitneyOptions whitney{0.0, 7, -1.0};        // root_side 0 and min_dist < 0: chosen from the cube sizes
    int lattice = 32;                            // points per radius for ball sweeps
    bool build_psi = true;
};

struct DomainReport {
    std::vector<Check> checks;
    std::size_t whitney_cubes = 0;
    std::size_t regions = 0;

    bool passed() const;
    const Check* find(const std::string& name) const;
};

/// Verifies the lemma chain and the five clauses of the corona domain
/// construction for one regime. Never throws on a failed inequality; each
/// failure is recorded with a witness.
DomainReport corona_domain_report(const RegimeLift& ctx, const DomainOptions& opt = {});

nlohmann::json to_json(const Check& c);
nlohmann::json to_json(const DomainReport& r);

}  // namespace pcme
