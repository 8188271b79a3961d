#pragma once

#include "plateflow/dkt.hpp"
#include "plateflow/mesh.hpp"

#include <Eigen/Dense>

namespace plateflow {

struct BendingParams {
    enum class Model { Single, Bilayer };
    Model model = Model::Single;
    double alpha = 0;                     // material mismatch (bilayer only)
    Eigen::Vector3d force{0, 0, 0};       // constant body force f
    double domain_area = 0;               // |omega|
};

// Signed energy contributions; total equals their sum.
struct EnergyReport {
    double total = 0;
    double bending = 0;      // 1/2 y^T S y
    double cross = 0;        // -alpha * lumped cross term (bilayer)
    double alpha_const = 0;  // alpha^2 |omega| (bilayer)
    double force_part = 0;   // -(f,y)_h
    double rho_tp = 0;       // rho * TP_h
    double delta_iso = 0;
};

// Element-wise lumped cross term  sum_T (|T|/3) sum_{z in T} (div grad_h y)|_T(z) . nu_y(z).
double bilayer_cross_term(const DeformationState& state, const TriMesh& mesh,
                          const DofLayout& layout, const DiscreteGradientMap& gmap);

// First variation of the cross term (product rule over both factors),
// assembled over the full dof vector.
Eigen::VectorXd bilayer_cross_variation(const DeformationState& state, const TriMesh& mesh,
                                        const DofLayout& layout,
                                        const DiscreteGradientMap& gmap);

// b_f of the lumped force functional: (f, psi_i)_h.
Eigen::VectorXd force_vector(const BendingParams& params, const SdktOperator& sdkt,
                             const DofLayout& layout);

EnergyReport bending_energy(const DeformationState& state, const BendingParams& params,
                            const SdktOperator& sdkt, const TriMesh& mesh,
                            const DofLayout& layout, const DiscreteGradientMap& gmap,
                            double rho = 0, double tp_energy = 0);

// Gradient-flow right-hand side  b = -S y + b_f - rho grad TP + alpha d(cross).
// tp_gradient is the exact derivative of tp_energy (may be empty when rho=0).
Eigen::VectorXd bending_rhs(const DeformationState& state, const BendingParams& params,
                            const SdktOperator& sdkt, const TriMesh& mesh,
                            const DofLayout& layout, const DiscreteGradientMap& gmap,
                            double rho, const Eigen::VectorXd& tp_gradient);

// L-infinity nodal isometry error with the entrywise max matrix norm.
double delta_iso(const DeformationState& state, const DofLayout& layout);

}  // namespace plateflow
