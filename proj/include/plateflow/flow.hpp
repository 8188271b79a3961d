#pragma once

#include "plateflow/dkt.hpp"
#include "plateflow/energy.hpp"
#include "plateflow/tangent_point.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <string>
#include <vector>

namespace plateflow {

struct FlowConfig {
    double tau = 0.1;
    double eps_stop = 1e-3;
    int max_iter = 1000000;
    int relax_iters = 100;         // warm-start length at rho = 0
    double relax_threshold = -1;   // <0: use 10 * eps_stop
    enum class Solver { Saddle, NullSpace };
    Solver solver = Solver::NullSpace;
    int record_every = 1;
    int threads = 1;
};

// Linearized isometry constraint: 3 rows per slot with free gradient dofs,
// the (1,1), (2,2), (1,2) entries of sym(grad y^T grad w); columns over the
// free full dofs.
struct ConstraintMatrix {
    Eigen::SparseMatrix<double> A;
    std::vector<int> row_slot;  // slot of each row triple
};

ConstraintMatrix constraint_matrix(const DeformationState& state, const DofLayout& layout);

// Point-wise kernel basis of the constraint: per constrained slot 3 value
// shifts plus 3 gradient directions from the exact local kernel (SVD), so
// A C = 0 to machine precision for any nodal gradient of rank 2.
struct NullSpaceBasis {
    Eigen::SparseMatrix<double> C;  // n_full_free x (6 * #slots with free values/grads)
    std::vector<int> degenerate_slots;
};

NullSpaceBasis null_space_basis(const DeformationState& state, const DofLayout& layout);

struct StepResult {
    Eigen::VectorXd dt;      // full layout, zero on clamped dofs
    Eigen::VectorXd lambda;  // saddle multipliers (empty for null-space)
    double dt_norm = 0;      // ||dt||_*
};

// One flow step: solves the saddle system or the reduced SPD system for
// d_t y from the assembled right-hand side b (full layout).
StepResult flow_step(const DeformationState& state, const Eigen::VectorXd& b,
                     const SdktOperator& sdkt, const Eigen::SparseMatrix<double>& S_free,
                     const DofLayout& layout, const FlowConfig& config);

struct IterationRecord {
    int k = 0;
    double energy = 0, bending = 0, tp = 0, delta_iso = 0, dt_norm = 0, wall_ms = 0;
};

struct FlowProblem {
    const TriMesh* mesh = nullptr;
    const DofLayout* layout = nullptr;
    const SdktOperator* sdkt = nullptr;
    const DiscreteGradientMap* gmap = nullptr;
    BendingParams bending;
    TpParams tp;
    TpQuadrature quad;
    Eigen::VectorXd initial;
};

struct FlowResult {
    DeformationState state;
    std::vector<IterationRecord> log;        // main phase, k = 0 .. iterations
    std::vector<IterationRecord> relax_log;  // warm-start phase
    int iterations = 0;
    bool converged = false;
    std::string abort_reason;  // non-empty on energy blow-up
};

// Restriction of the replicated S_DKT to the free full dofs.
Eigen::SparseMatrix<double> restrict_free(const Eigen::SparseMatrix<double>& S_full,
                                          const DofLayout& layout);

// Algorithm: semi-implicit gradient flow under the linearized isometry
// constraint, with an optional rho=0 relaxation warm-start.
FlowResult run_flow(const FlowProblem& prob, const FlowConfig& config,
                    const std::function<void(int, const DeformationState&)>& on_record = {});

// Experimental order of convergence from nodal positions on 3 nested levels.
// Throws std::domain_error when the denominator vanishes.
double eoc(const RefinementHierarchy& hier, int base_level,
           const std::vector<Eigen::Vector3d>& coarse, const std::vector<Eigen::Vector3d>& mid,
           const std::vector<Eigen::Vector3d>& fine);

}  // namespace plateflow
