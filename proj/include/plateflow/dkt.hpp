#pragma once

#include "plateflow/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <vector>

namespace plateflow {

// Global dof ordering: a slot is a mesh vertex after periodic identification.
// Full index = 9*slot + 3*component + kind, kind in {0:value, 1:d1, 2:d2}.
// Scalar (per-component) index = 3*slot + kind. Glued slave vertices map to
// their master's slot; with a flipped seam the slave's d2 dof carries sign -1.
struct DofLayout {
    int n_mesh_vertices = 0;
    int n_slots = 0;
    std::vector<int> slot;        // per mesh vertex
    std::vector<double> d2sign;   // per mesh vertex, +1 or -1
    std::vector<bool> value_clamped;  // per slot
    std::vector<bool> grad_clamped;   // per slot

    std::vector<int> scalar_free;  // 3*n_slots -> free scalar index or -1
    std::vector<int> full_free;    // 9*n_slots -> free full index or -1
    int n_scalar_free = 0;
    int n_full_free = 0;

    int n_scalar_dofs() const { return 3 * n_slots; }
    int n_full_dofs() const { return 9 * n_slots; }
    int scalar_index(int vertex, int kind) const { return 3 * slot[vertex] + kind; }
    int full_index_slot(int s, int comp, int kind) const { return 9 * s + 3 * comp + kind; }
    int full_index(int vertex, int comp, int kind) const {
        return full_index_slot(slot[vertex], comp, kind);
    }
    double sign(int vertex, int kind) const { return kind == 2 ? d2sign[vertex] : 1.0; }
    bool kind_clamped(int s, int kind) const {
        return kind == 0 ? value_clamped[s] : grad_clamped[s];
    }
};

// dirichlet_vertices get all 9 dofs clamped. anchor_vertex (optional), used
// for scenarios without a clamped boundary, fixes the 3 value dofs only to
// remove the rigid translation from the per-step systems.
DofLayout build_layout(const TriMesh& mesh, const std::vector<int>& dirichlet_vertices,
                       int anchor_vertex = -1);

// A deformation y in W_h^3 stored as the coefficient vector over DofLayout.
struct DeformationState {
    Eigen::VectorXd dofs;  // length 9*n_slots

    Eigen::Vector3d position(int s) const {
        return {dofs[9 * s], dofs[9 * s + 3], dofs[9 * s + 6]};
    }
    // Columns d1 y(z), d2 y(z) of the nodal deformation gradient.
    Eigen::Matrix<double, 3, 2> gradient(int s) const {
        Eigen::Matrix<double, 3, 2> g;
        for (int c = 0; c < 3; ++c)
            for (int d = 0; d < 2; ++d) g(c, d) = dofs[9 * s + 3 * c + 1 + d];
        return g;
    }
    Eigen::Vector3d normal(int s) const {
        const auto g = gradient(s);
        return Eigen::Vector3d(g.col(0)).cross(Eigen::Vector3d(g.col(1)));
    }
};

// Per-triangle operator of the discrete gradient: maps the 9 local scalar
// W_h dofs to the 12 local Theta_h^2 dofs (2-vector values at the 3 vertices
// and the 3 edge midpoints; theta-dof index = 2*node + component with nodes
// v0,v1,v2,m01,m12,m20).
struct DiscreteGradientMap {
    using LocalOp = Eigen::Matrix<double, 12, 9>;
    std::vector<LocalOp> op;                         // per triangle
    std::vector<Eigen::Matrix<double, 3, 2>> glam;   // barycentric gradients (rows)

    // Gradients of the 6 P2 shape functions at barycentric coordinates lam.
    static Eigen::Matrix<double, 6, 2> p2_shape_gradients(
        const Eigen::Matrix<double, 3, 2>& glam, const Eigen::Vector3d& lam);
    static Eigen::Matrix<double, 6, 1> p2_shape_values(const Eigen::Vector3d& lam);

    // Row vectors (1x9) of (div grad_h w)|_T at the three triangle vertices.
    Eigen::Matrix<double, 3, 9> divergence_rows(int t) const;
};

DiscreteGradientMap build_gradient_map(const TriMesh& mesh);

// Sparse operator of the bilinear form (grad grad_h . , grad grad_h .) on the
// scalar dof layout, plus the lumped vertex weights beta_z (per slot).
struct SdktOperator {
    Eigen::SparseMatrix<double> S;  // 3*n_slots x 3*n_slots, symmetric PSD
    std::vector<double> beta;       // per slot

    // y^T S y summed over the 3 deformation components.
    double quadratic_form(const Eigen::VectorXd& full) const;
    // S y per component, assembled into a full (9*n_slots) vector.
    Eigen::VectorXd apply(const Eigen::VectorXd& full) const;
    // Full 9K sparse replication (block structure over components).
    Eigen::SparseMatrix<double> replicate3() const;
};

SdktOperator assemble_sdkt(const TriMesh& mesh, const DiscreteGradientMap& map,
                           const DofLayout& layout);

// Lumped L2 inner product of two nodal 3-vector fields given per slot.
double lumped_product(const SdktOperator& sdkt, const std::vector<Eigen::Vector3d>& v,
                      const std::vector<Eigen::Vector3d>& w);

// P1 prolongation of coarse nodal 3-vectors to the next finer hierarchy level.
std::vector<Eigen::Vector3d> prolongate_p1(const RefinementHierarchy& hier, int coarse_level,
                                           const std::vector<Eigen::Vector3d>& coarse);

// L2 norm of a P1 nodal 3-vector field (exact element mass matrix).
double p1_l2_norm(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& nodal);

}  // namespace plateflow
