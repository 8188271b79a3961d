#include "plateflow/energy.hpp"

#include <cmath>
#include <stdexcept>

namespace plateflow {

namespace {

// Local scalar dofs (value, d1, d2 per vertex) of one deformation component
// in the element's own chart (sign-mapped across flipped seams).
Eigen::Matrix<double, 9, 1> local_scalar_dofs(const DeformationState& state,
                                              const DofLayout& layout,
                                              const std::array<int, 3>& tri, int comp) {
    Eigen::Matrix<double, 9, 1> loc;
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
            loc[3 * j + k] =
                layout.sign(tri[j], k) * state.dofs[layout.full_index(tri[j], comp, k)];
    return loc;
}

// Nodal deformation gradient of vertex v in the element chart.
Eigen::Matrix<double, 3, 2> local_gradient(const DeformationState& state,
                                           const DofLayout& layout, int v) {
    Eigen::Matrix<double, 3, 2> g = state.gradient(layout.slot[v]);
    g.col(1) *= layout.d2sign[v];
    return g;
}

}  // namespace

double bilayer_cross_term(const DeformationState& state, const TriMesh& mesh,
                          const DofLayout& layout, const DiscreteGradientMap& gmap) {
    double total = 0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        const auto div_rows = gmap.divergence_rows(t);
        Eigen::Matrix<double, 9, 1> loc[3];
        for (int c = 0; c < 3; ++c) loc[c] = local_scalar_dofs(state, layout, tri, c);
        const double w = mesh.area[t] / 3.0;
        for (int j = 0; j < 3; ++j) {
            Eigen::Vector3d div;
            for (int c = 0; c < 3; ++c) div[c] = div_rows.row(j).dot(loc[c]);
            const auto g = local_gradient(state, layout, tri[j]);
            const Eigen::Vector3d nu = Eigen::Vector3d(g.col(0)).cross(Eigen::Vector3d(g.col(1)));
            total += w * div.dot(nu);
        }
    }
    return total;
}

Eigen::VectorXd bilayer_cross_variation(const DeformationState& state, const TriMesh& mesh,
                                        const DofLayout& layout,
                                        const DiscreteGradientMap& gmap) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(layout.n_full_dofs());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        const auto div_rows = gmap.divergence_rows(t);
        Eigen::Matrix<double, 9, 1> loc[3];
        for (int c = 0; c < 3; ++c) loc[c] = local_scalar_dofs(state, layout, tri, c);
        const double w = mesh.area[t] / 3.0;
        for (int j = 0; j < 3; ++j) {
            const int v = tri[j];
            Eigen::Vector3d div;
            for (int c = 0; c < 3; ++c) div[c] = div_rows.row(j).dot(loc[c]);
            const auto g = local_gradient(state, layout, v);
            const Eigen::Vector3d f1 = g.col(0), f2 = g.col(1);
            const Eigen::Vector3d nu = f1.cross(f2);

            // (div grad_h phi) . nu : scatter the divergence rows.
            for (int c = 0; c < 3; ++c)
                for (int jj = 0; jj < 3; ++jj)
                    for (int k = 0; k < 3; ++k)
                        out[layout.full_index(tri[jj], c, k)] +=
                            w * nu[c] * div_rows(j, 3 * jj + k) * layout.sign(tri[jj], k);

            // div . (d1 phi x f2 + f1 x d2 phi) : gradient dofs of vertex v.
            const Eigen::Vector3d h1 = f2.cross(div);  // e_c . (f2 x div) = (e_c x f2).div
            const Eigen::Vector3d h2 = div.cross(f1);  // (f1 x e_c).div
            for (int c = 0; c < 3; ++c) {
                out[layout.full_index(v, c, 1)] += w * h1[c] * layout.sign(v, 1);
                out[layout.full_index(v, c, 2)] += w * h2[c] * layout.sign(v, 2);
            }
        }
    }
    return out;
}

Eigen::VectorXd force_vector(const BendingParams& params, const SdktOperator& sdkt,
                             const DofLayout& layout) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(layout.n_full_dofs());
    for (int s = 0; s < layout.n_slots; ++s)
        for (int c = 0; c < 3; ++c)
            if (params.force[c] != 0) b[9 * s + 3 * c] = params.force[c] * sdkt.beta[s];
    return b;
}

EnergyReport bending_energy(const DeformationState& state, const BendingParams& params,
                            const SdktOperator& sdkt, const TriMesh& mesh,
                            const DofLayout& layout, const DiscreteGradientMap& gmap,
                            double rho, double tp_energy) {
    EnergyReport rep;
    rep.bending = 0.5 * sdkt.quadratic_form(state.dofs);
    if (params.model == BendingParams::Model::Bilayer) {
        rep.cross = -params.alpha * bilayer_cross_term(state, mesh, layout, gmap);
        rep.alpha_const = params.alpha * params.alpha * params.domain_area;
    }
    if (params.force.squaredNorm() > 0) {
        double fp = 0;
        for (int s = 0; s < layout.n_slots; ++s)
            fp += sdkt.beta[s] * params.force.dot(state.position(s));
        rep.force_part = -fp;
    }
    rep.rho_tp = rho * tp_energy;
    rep.delta_iso = delta_iso(state, layout);
    rep.total = rep.bending + rep.cross + rep.alpha_const + rep.force_part + rep.rho_tp;
    return rep;
}

Eigen::VectorXd bending_rhs(const DeformationState& state, const BendingParams& params,
                            const SdktOperator& sdkt, const TriMesh& mesh,
                            const DofLayout& layout, const DiscreteGradientMap& gmap,
                            double rho, const Eigen::VectorXd& tp_gradient) {
    Eigen::VectorXd b = -sdkt.apply(state.dofs) + force_vector(params, sdkt, layout);
    if (rho != 0) {
        if (tp_gradient.size() != b.size())
            throw std::invalid_argument("bending_rhs: tangent-point gradient layout mismatch");
        b -= rho * tp_gradient;
    }
    if (params.model == BendingParams::Model::Bilayer)
        b += params.alpha * bilayer_cross_variation(state, mesh, layout, gmap);
    return b;
}

double delta_iso(const DeformationState& state, const DofLayout& layout) {
    double worst = 0;
    for (int s = 0; s < layout.n_slots; ++s) {
        const auto g = state.gradient(s);
        const Eigen::Matrix2d m = g.transpose() * g - Eigen::Matrix2d::Identity();
        worst = std::max(worst, m.cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace plateflow
