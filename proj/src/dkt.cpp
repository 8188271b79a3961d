#include "plateflow/dkt.hpp"

#include <cmath>
#include <stdexcept>

namespace plateflow {

DofLayout build_layout(const TriMesh& mesh, const std::vector<int>& dirichlet_vertices,
                       int anchor_vertex) {
    DofLayout lay;
    lay.n_mesh_vertices = mesh.num_vertices();
    lay.slot.resize(mesh.num_vertices());
    lay.d2sign.assign(mesh.num_vertices(), 1.0);

    std::vector<int> master(mesh.num_vertices(), -1);
    std::vector<bool> flip(mesh.num_vertices(), false);
    for (const auto& g : mesh.gluing) {
        master[g.slave] = g.master;
        flip[g.slave] = g.flip;
    }

    int next = 0;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (master[v] < 0) lay.slot[v] = next++;
    lay.n_slots = next;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (master[v] >= 0) {
            int m = master[v];
            if (master[m] >= 0) throw std::invalid_argument("chained gluing not supported");
            lay.slot[v] = lay.slot[m];
            if (flip[v]) lay.d2sign[v] = -1.0;
        }

    lay.value_clamped.assign(lay.n_slots, false);
    lay.grad_clamped.assign(lay.n_slots, false);
    for (int v : dirichlet_vertices) {
        lay.value_clamped[lay.slot[v]] = true;
        lay.grad_clamped[lay.slot[v]] = true;
    }
    if (anchor_vertex >= 0) lay.value_clamped[lay.slot[anchor_vertex]] = true;

    lay.scalar_free.assign(lay.n_scalar_dofs(), -1);
    lay.full_free.assign(lay.n_full_dofs(), -1);
    lay.n_scalar_free = 0;
    lay.n_full_free = 0;
    for (int s = 0; s < lay.n_slots; ++s)
        for (int k = 0; k < 3; ++k) {
            if (lay.kind_clamped(s, k)) continue;
            lay.scalar_free[3 * s + k] = lay.n_scalar_free++;
            for (int c = 0; c < 3; ++c) lay.full_free[9 * s + 3 * c + k] = -2;  // mark
        }
    for (int i = 0; i < lay.n_full_dofs(); ++i)
        if (lay.full_free[i] == -2) lay.full_free[i] = lay.n_full_free++;
    return lay;
}

Eigen::Matrix<double, 6, 2> DiscreteGradientMap::p2_shape_gradients(
    const Eigen::Matrix<double, 3, 2>& glam, const Eigen::Vector3d& lam) {
    Eigen::Matrix<double, 6, 2> dn;
    for (int j = 0; j < 3; ++j) dn.row(j) = (4 * lam[j] - 1) * glam.row(j);
    const int ea[3] = {0, 1, 2}, eb[3] = {1, 2, 0};  // edges 01, 12, 20
    for (int e = 0; e < 3; ++e)
        dn.row(3 + e) = 4 * (lam[ea[e]] * glam.row(eb[e]) + lam[eb[e]] * glam.row(ea[e]));
    return dn;
}

Eigen::Matrix<double, 6, 1> DiscreteGradientMap::p2_shape_values(const Eigen::Vector3d& lam) {
    Eigen::Matrix<double, 6, 1> n;
    for (int j = 0; j < 3; ++j) n[j] = lam[j] * (2 * lam[j] - 1);
    const int ea[3] = {0, 1, 2}, eb[3] = {1, 2, 0};
    for (int e = 0; e < 3; ++e) n[3 + e] = 4 * lam[ea[e]] * lam[eb[e]];
    return n;
}

Eigen::Matrix<double, 3, 9> DiscreteGradientMap::divergence_rows(int t) const {
    Eigen::Matrix<double, 3, 9> rows;
    for (int j = 0; j < 3; ++j) {
        Eigen::Vector3d lam = Eigen::Vector3d::Zero();
        lam[j] = 1.0;
        const auto dn = p2_shape_gradients(glam[t], lam);
        Eigen::Matrix<double, 1, 12> div = Eigen::Matrix<double, 1, 12>::Zero();
        for (int n = 0; n < 6; ++n) {
            div(0, 2 * n + 0) = dn(n, 0);  // d1 theta_1
            div(0, 2 * n + 1) = dn(n, 1);  // d2 theta_2
        }
        rows.row(j) = div * op[t];
    }
    return rows;
}

DiscreteGradientMap build_gradient_map(const TriMesh& mesh) {
    DiscreteGradientMap map;
    const int nt = mesh.num_triangles();
    map.op.resize(nt);
    map.glam.resize(nt);

    for (int t = 0; t < nt; ++t) {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector2d p0 = mesh.vertices[tri[0]];
        const Eigen::Vector2d p1 = mesh.vertices[tri[1]];
        const Eigen::Vector2d p2 = mesh.vertices[tri[2]];

        Eigen::Matrix2d J;
        J.col(0) = p1 - p0;
        J.col(1) = p2 - p0;
        const double det = J.determinant();
        if (!(det > 1e-14 * J.norm() * J.norm()))
            throw std::invalid_argument("degenerate triangle in gradient map");
        const Eigen::Matrix2d Jinv = J.inverse();
        Eigen::Matrix<double, 3, 2>& glam = map.glam[t];
        glam.row(1) = Jinv.row(0);
        glam.row(2) = Jinv.row(1);
        glam.row(0) = -glam.row(1) - glam.row(2);

        DiscreteGradientMap::LocalOp G = DiscreteGradientMap::LocalOp::Zero();
        // Vertex nodes: theta(z_j) = grad w(z_j).
        for (int j = 0; j < 3; ++j)
            for (int c = 0; c < 2; ++c) G(2 * j + c, 3 * j + 1 + c) = 1.0;

        // Midpoint nodes: tangential value from the cubic Hermite edge trace,
        // normal value from averaged endpoint gradients.
        const int ea[3] = {0, 1, 2}, eb[3] = {1, 2, 0};
        const Eigen::Vector2d pts[3] = {p0, p1, p2};
        for (int e = 0; e < 3; ++e) {
            const int a = ea[e], b = eb[e];
            const Eigen::Vector2d d = pts[b] - pts[a];
            const double L = d.norm();
            const Eigen::Vector2d tv = d / L;
            const Eigen::Vector2d nv(-tv.y(), tv.x());
            for (int c = 0; c < 2; ++c) {
                const int row = 2 * (3 + e) + c;
                G(row, 3 * a + 0) += -1.5 / L * tv[c];
                G(row, 3 * b + 0) += 1.5 / L * tv[c];
                for (int dd = 0; dd < 2; ++dd) {
                    G(row, 3 * a + 1 + dd) += -0.25 * tv[dd] * tv[c] + 0.5 * nv[dd] * nv[c];
                    G(row, 3 * b + 1 + dd) += -0.25 * tv[dd] * tv[c] + 0.5 * nv[dd] * nv[c];
                }
            }
        }
        map.op[t] = G;
    }
    return map;
}

SdktOperator assemble_sdkt(const TriMesh& mesh, const DiscreteGradientMap& map,
                           const DofLayout& layout) {
    SdktOperator out;
    out.beta.assign(layout.n_slots, 0.0);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(mesh.num_triangles()) * 81);

    const Eigen::Vector3d qpts[3] = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};

    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double w = mesh.area[t] / 3.0;
        for (int j = 0; j < 3; ++j) out.beta[layout.slot[tri[j]]] += w;

        Eigen::Matrix<double, 9, 9> K = Eigen::Matrix<double, 9, 9>::Zero();
        for (const auto& lam : qpts) {
            const auto dn = DiscreteGradientMap::p2_shape_gradients(map.glam[t], lam);
            Eigen::Matrix<double, 4, 12> B = Eigen::Matrix<double, 4, 12>::Zero();
            for (int n = 0; n < 6; ++n)
                for (int c = 0; c < 2; ++c)
                    for (int d = 0; d < 2; ++d) B(2 * c + d, 2 * n + c) = dn(n, d);
            const Eigen::Matrix<double, 4, 9> P = B * map.op[t];
            K += w * P.transpose() * P;
        }

        int gdof[9];
        double sgn[9];
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                gdof[3 * j + k] = layout.scalar_index(tri[j], k);
                sgn[3 * j + k] = layout.sign(tri[j], k);
            }
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j)
                trip.emplace_back(gdof[i], gdof[j], sgn[i] * sgn[j] * K(i, j));
    }

    out.S.resize(layout.n_scalar_dofs(), layout.n_scalar_dofs());
    out.S.setFromTriplets(trip.begin(), trip.end());
    out.S.makeCompressed();
    return out;
}

double SdktOperator::quadratic_form(const Eigen::VectorXd& full) const {
    const int n = S.rows();
    double total = 0;
    Eigen::VectorXd comp(n);
    for (int c = 0; c < 3; ++c) {
        for (int s = 0; s < n / 3; ++s)
            for (int k = 0; k < 3; ++k) comp[3 * s + k] = full[9 * s + 3 * c + k];
        total += comp.dot(S * comp);
    }
    return total;
}

Eigen::VectorXd SdktOperator::apply(const Eigen::VectorXd& full) const {
    const int n = S.rows();
    Eigen::VectorXd out(3 * n);
    Eigen::VectorXd comp(n);
    for (int c = 0; c < 3; ++c) {
        for (int s = 0; s < n / 3; ++s)
            for (int k = 0; k < 3; ++k) comp[3 * s + k] = full[9 * s + 3 * c + k];
        const Eigen::VectorXd r = S * comp;
        for (int s = 0; s < n / 3; ++s)
            for (int k = 0; k < 3; ++k) out[9 * s + 3 * c + k] = r[3 * s + k];
    }
    return out;
}

Eigen::SparseMatrix<double> SdktOperator::replicate3() const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(S.nonZeros()) * 3);
    for (int col = 0; col < S.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(S, col); it; ++it) {
            const int si = it.row() / 3, ki = it.row() % 3;
            const int sj = it.col() / 3, kj = it.col() % 3;
            for (int c = 0; c < 3; ++c)
                trip.emplace_back(9 * si + 3 * c + ki, 9 * sj + 3 * c + kj, it.value());
        }
    Eigen::SparseMatrix<double> R(3 * S.rows(), 3 * S.cols());
    R.setFromTriplets(trip.begin(), trip.end());
    R.makeCompressed();
    return R;
}

double lumped_product(const SdktOperator& sdkt, const std::vector<Eigen::Vector3d>& v,
                      const std::vector<Eigen::Vector3d>& w) {
    double s = 0;
    for (size_t i = 0; i < sdkt.beta.size(); ++i) s += sdkt.beta[i] * v[i].dot(w[i]);
    return s;
}

std::vector<Eigen::Vector3d> prolongate_p1(const RefinementHierarchy& hier, int coarse_level,
                                           const std::vector<Eigen::Vector3d>& coarse) {
    if (coarse_level + 1 >= hier.num_levels())
        throw std::invalid_argument("prolongate_p1: no finer level");
    if (static_cast<int>(coarse.size()) != hier.levels[coarse_level].num_vertices())
        throw std::invalid_argument("prolongate_p1: nodal field size mismatch");
    const auto& pe = hier.parent_edge[coarse_level + 1];
    std::vector<Eigen::Vector3d> fine(pe.size());
    for (size_t v = 0; v < pe.size(); ++v)
        fine[v] = 0.5 * (coarse[pe[v][0]] + coarse[pe[v][1]]);
    return fine;
}

double p1_l2_norm(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& nodal) {
    double total = 0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector3d& a = nodal[tri[0]];
        const Eigen::Vector3d& b = nodal[tri[1]];
        const Eigen::Vector3d& c = nodal[tri[2]];
        total += mesh.area[t] / 6.0 *
                 (a.dot(a) + b.dot(b) + c.dot(c) + a.dot(b) + b.dot(c) + a.dot(c));
    }
    return std::sqrt(total);
}

}  // namespace plateflow
