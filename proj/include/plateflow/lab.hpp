#pragma once

#include "plateflow/dkt.hpp"
#include "plateflow/energy.hpp"
#include "plateflow/flow.hpp"
#include "plateflow/mesh.hpp"
#include "plateflow/tangent_point.hpp"

#include <optional>
#include <string>
#include <vector>

namespace plateflow {

// Optional parameter overrides applied on top of a scenario's defaults.
// The TP weight is rho = (hhat/2)^beta unless a raw rho is given.
struct ScenarioOverrides {
    std::optional<double> tau, rho, beta, eps_stop, sigma;
    std::optional<int> q, max_iter, relax_iters, record_every, threads, hier_levels;
    std::optional<FlowConfig::Solver> solver;
    std::optional<TpParams::Variant> variant;
};

struct Scenario {
    std::string name;
    int level = 2;           // hhat = 2^-level
    RefinementHierarchy hier;  // working mesh is the finest level
    DofLayout layout;
    Eigen::VectorXd initial;  // full dofs; gradient dofs nodally isometric
    BendingParams bending;
    TpParams tp;
    FlowConfig flow;

    const TriMesh& mesh() const { return hier.finest(); }
};

// Scenario catalog. Names: compressed_strip, twisted_strip, closed_ribbon,
// trefoil, oshape_bilayer, coiling_bilayer_short, coiling_bilayer_long.
// Throws std::invalid_argument for unknown names.
Scenario build_scenario(const std::string& name, int level,
                        const ScenarioOverrides& overrides = {});

// Quadrature for the scenario's TP variant (hierarchical selection happens
// at the given state).
TpQuadrature scenario_quadrature(const Scenario& scn, const DeformationState& state);

struct ScenarioSystem {
    DiscreteGradientMap gmap;
    SdktOperator sdkt;
    TpQuadrature quad;
};

ScenarioSystem build_system(const Scenario& scn);

FlowResult run_scenario(const Scenario& scn, const ScenarioSystem& sys,
                        const std::function<void(int, const DeformationState&)>& on_record = {});

// Exact triangle-triangle intersection over all deformed P1 triangle pairs
// that share no slot; empty result == injective at P1 resolution.
std::vector<std::pair<int, int>> check_injectivity(const DeformationState& state,
                                                   const TriMesh& mesh,
                                                   const DofLayout& layout);

// 3D triangle intersection predicate (closed triangles).
bool triangles_intersect(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1,
                         const Eigen::Vector3d& r1, const Eigen::Vector3d& p2,
                         const Eigen::Vector3d& q2, const Eigen::Vector3d& r2);

struct RunArtifacts {
    std::vector<std::string> vtu_paths;
    std::string csv_path;
    double final_energy = 0, final_tp = 0, final_delta_iso = 0;
    int iterations = 0;
    bool converged = false;
    bool injective = false;
    std::optional<double> eoc_value;
};

// P1 interpolant of the deformed surface with point data tp_density, f_tp
// and iso_violation (XML unstructured grid, ascii float64).
void write_vtu(const std::string& path, const TriMesh& mesh, const DofLayout& layout,
               const DeformationState& state, const std::vector<double>& tp_density,
               const std::vector<Eigen::Vector3d>& f_tp,
               const std::vector<double>& iso_violation);

void write_csv(const std::string& path, const std::vector<IterationRecord>& log);
std::vector<IterationRecord> read_csv(const std::string& path);

// Final-state VTU plus main/relaxation CSV logs; summary equals the last
// main-phase log row.
RunArtifacts write_outputs(const Scenario& scn, const ScenarioSystem& sys,
                           const FlowResult& result, const std::string& out_dir);

// Nodal isometry violation per slot (entrywise max of |grad^T grad - I|).
std::vector<double> iso_violation_field(const DeformationState& state, const DofLayout& layout);

// Long-running tier: runs the scenario on three nested levels
// (base_level .. base_level+2) and returns the experimental order of
// convergence of the P1 interpolants.
double scenario_eoc(const std::string& name, int base_level,
                    const ScenarioOverrides& overrides = {});

// Finite-difference audit of the TP gradient and the bilayer cross-term
// variation on a small random near-isometric configuration.
struct GradientCheckReport {
    double tp_max_rel = 0;
    double cross_max_rel = 0;
    bool pass = false;
};

GradientCheckReport run_gradient_check(unsigned seed = 7, int directions = 20,
                                       double tol = 1e-6);

}  // namespace plateflow
