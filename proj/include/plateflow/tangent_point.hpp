#pragma once

#include "plateflow/dkt.hpp"
#include "plateflow/mesh.hpp"

#include <Eigen/Dense>

#include <vector>

namespace plateflow {

struct TpParams {
    int q = 5;         // tangent-point exponent, >= 2
    double rho = 0;    // coupling weight, >= 0
    enum class Variant { Full, BoundaryDomain, Hierarchical };
    Variant variant = Variant::Full;
    double sigma = 1.0;   // hierarchical selection threshold in (0,1]
    int hier_levels = 1;  // N in the hierarchical quadrature
};

// Slot-level description of the lumped double sum: outer nodes with their
// quadrature weights, inner base weights beta per slot, and per-outer-node
// weight corrections realizing the exclusion sets.
struct TpQuadrature {
    int n_slots = 0;
    std::vector<std::array<int, 3>> tris;  // slot triples
    std::vector<double> tri_area;
    std::vector<double> beta;  // inner base weight per slot

    struct Correction {
        int slot;
        double dw;  // added to the base weight (negative for exclusions)
    };
    std::vector<std::vector<Correction>> corrections;  // per outer node
    std::vector<int> outer;                            // outer slot ids
    std::vector<double> outer_weight;                  // beta_z or gamma_z
};

struct TpAssembly {
    double energy = 0;
    Eigen::VectorXd gradient;  // 9*n_slots; exact derivative of the energy
    Eigen::VectorXd density;   // tp_y per slot (zero off the outer set)
    long pair_evaluations = 0;
};

// Tangent-point radius with the +infinity convention for nu.(p-pt) = 0.
// Throws std::domain_error for coincident points.
double tp_radius(const Eigen::Vector3d& p, const Eigen::Vector3d& p_tilde,
                 const Eigen::Vector3d& nu);

TpQuadrature make_full_quadrature(const TriMesh& mesh, const DofLayout& layout,
                                  const ExclusionTable& excl);
TpQuadrature make_boundary_quadrature(const TriMesh& mesh, const DofLayout& layout,
                                      const ExclusionTable& excl);

// Hierarchical quadrature (greedy per-level selection with threshold sigma).
// The hierarchy's finest level must be the working mesh of `layout`.
TpQuadrature make_hier_quadrature(const DeformationState& state,
                                  const RefinementHierarchy& hier, const DofLayout& layout,
                                  int q, double sigma);

// Assembles energy, nodal density and (optionally) the gradient of the
// discrete tangent-point potential. Deterministic for any thread count:
// outer nodes are processed in fixed blocks that are reduced in block order.
TpAssembly assemble_tp(const DeformationState& state, const TpQuadrature& quad, int q,
                       bool with_gradient, int threads = 1);

// Visualization pseudo-force field (no exponent q, no coupling rho).
std::vector<Eigen::Vector3d> tp_force_field(const DeformationState& state,
                                            const TpQuadrature& quad);

}  // namespace plateflow
