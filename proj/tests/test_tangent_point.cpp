#include "plateflow/tangent_point.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace plateflow;

namespace {

// Graph deformation y = (z1, z2, w(z)) with exact nodal gradients.
DeformationState graph_state(const TriMesh& mesh, const DofLayout& layout) {
    DeformationState st;
    st.dofs = Eigen::VectorXd::Zero(layout.n_full_dofs());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const int s = layout.slot[v];
        const double x = mesh.vertices[v][0], y = mesh.vertices[v][1];
        const double w = 0.4 * x * x + 0.3 * x * y - 0.2 * y * y;
        const double wx = 0.8 * x + 0.3 * y, wy = 0.3 * x - 0.4 * y;
        const double vals[3] = {x, y, w};
        const double d1[3] = {1, 0, wx};
        const double d2[3] = {0, 1, wy};
        for (int c = 0; c < 3; ++c) {
            st.dofs[9 * s + 3 * c + 0] = vals[c];
            st.dofs[9 * s + 3 * c + 1] = d1[c];
            st.dofs[9 * s + 3 * c + 2] = d2[c];
        }
    }
    return st;
}

}  // namespace

TEST_CASE("tp_radius on a sphere, flat pairs, coincident points") {
    const Eigen::Vector3d p{0, 0, 1}, nu{0, 0, 1};
    for (double t : {0.3, 1.2, 2.9}) {
        const Eigen::Vector3d pt{std::sin(t), 0, std::cos(t)};
        CHECK(tp_radius(p, pt, nu) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(tp_radius(p, {1, 0, 1}, nu) == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(tp_radius(p, p, nu), std::domain_error);
}

TEST_CASE("full quadrature matches a brute-force double sum") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.25);
    const DofLayout layout = build_layout(mesh, {});
    const ExclusionTable excl = exclusion_table(mesh);
    const TpQuadrature quad = make_full_quadrature(mesh, layout, excl);
    const DeformationState st = graph_state(mesh, layout);
    const int q = 5;
    const TpAssembly as = assemble_tp(st, quad, q, false);

    // literal sum over outer vertices, admissible triangles and their corners
    double oracle = 0;
    for (int z = 0; z < mesh.num_vertices(); ++z) {
        const Eigen::Vector3d yz = st.position(z);
        const auto g = st.gradient(z);
        const Eigen::Vector3d nu = Eigen::Vector3d(g.col(0)).cross(Eigen::Vector3d(g.col(1)));
        double tp = 0;
        for (int t = 0; t < mesh.num_triangles(); ++t) {
            if (!excl.is_admissible(z, t)) continue;
            for (int i = 0; i < 3; ++i) {
                const int s = mesh.triangles[t][i];
                const Eigen::Vector3d d = yz - st.position(s);
                tp += mesh.area[t] / 3.0 * std::pow(std::abs(nu.dot(d)), q) /
                      std::pow(d.squaredNorm(), q);
            }
        }
        oracle += quad.beta[z] * tp / q;
    }
    CHECK(as.energy == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(as.energy > 0);
}

TEST_CASE("gradient matches finite differences") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.25);
    const DofLayout layout = build_layout(mesh, {});
    const TpQuadrature quad = make_full_quadrature(mesh, layout, exclusion_table(mesh));
    DeformationState st = graph_state(mesh, layout);
    const int q = 5;
    const TpAssembly as = assemble_tp(st, quad, q, true);

    const double eps = 1e-6;
    for (int k = 0; k < layout.n_full_dofs(); k += 37) {
        const double save = st.dofs[k];
        st.dofs[k] = save + eps;
        const double ep = assemble_tp(st, quad, q, false).energy;
        st.dofs[k] = save - eps;
        const double em = assemble_tp(st, quad, q, false).energy;
        st.dofs[k] = save;
        const double fd = (ep - em) / (2 * eps);
        CHECK(as.gradient[k] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("assembly is bitwise deterministic across thread counts") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.125);
    const DofLayout layout = build_layout(mesh, {});
    const TpQuadrature quad = make_full_quadrature(mesh, layout, exclusion_table(mesh));
    const DeformationState st = graph_state(mesh, layout);
    const TpAssembly a1 = assemble_tp(st, quad, 5, true, 1);
    const TpAssembly a3 = assemble_tp(st, quad, 5, true, 3);
    CHECK(a1.energy == a3.energy);
    CHECK((a1.gradient - a3.gradient).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a1.density - a3.density).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("boundary quadrature restricts the outer sum to the boundary") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.25);
    const DofLayout layout = build_layout(mesh, {});
    const TpQuadrature quad = make_boundary_quadrature(mesh, layout, exclusion_table(mesh));
    double total = 0;
    for (size_t i = 0; i < quad.outer.size(); ++i) {
        CHECK(mesh.boundary_vertex[quad.outer[i]]);
        total += quad.outer_weight[i];
    }
    CHECK(total == doctest::Approx(4.0).epsilon(1e-13));  // unit square perimeter
    CHECK(quad.outer.size() == 16);
}

TEST_CASE("hierarchical quadrature with sigma=1 reproduces the full sum") {
    const RefinementHierarchy hier = build_hierarchy(build_halved_squares(0, 1, 0, 1, 0.5), 2);
    const TriMesh& fine = hier.finest();
    const DofLayout layout = build_layout(fine, {});
    const DeformationState st = graph_state(fine, layout);
    const TpQuadrature full = make_full_quadrature(fine, layout, exclusion_table(fine));
    const TpQuadrature hq = make_hier_quadrature(st, hier, layout, 5, 1.0);
    const TpAssembly af = assemble_tp(st, full, 5, true);
    const TpAssembly ah = assemble_tp(st, hq, 5, true);
    CHECK(af.energy == ah.energy);
    CHECK((af.gradient - ah.gradient).lpNorm<Eigen::Infinity>() == 0.0);

    // a smaller threshold keeps some coarse triangles and fewer pair evaluations
    const TpQuadrature hs = make_hier_quadrature(st, hier, layout, 5, 0.5);
    const TpAssembly asm5 = assemble_tp(st, hs, 5, false);
    CHECK(asm5.pair_evaluations < af.pair_evaluations);
    CHECK(asm5.energy > 0);
}

TEST_CASE("flat configurations carry no tangent-point energy") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.25);
    const DofLayout layout = build_layout(mesh, {});
    const TpQuadrature quad = make_full_quadrature(mesh, layout, exclusion_table(mesh));
    DeformationState st;
    st.dofs = Eigen::VectorXd::Zero(layout.n_full_dofs());
    for (int s = 0; s < layout.n_slots; ++s) {
        st.dofs[9 * s + 0] = mesh.vertices[s][0];
        st.dofs[9 * s + 3] = mesh.vertices[s][1];
        st.dofs[9 * s + 1] = 1;  // d1 y1
        st.dofs[9 * s + 5] = 1;  // d2 y2
    }
    const TpAssembly as = assemble_tp(st, quad, 5, true);
    CHECK(as.energy == 0.0);
    CHECK(as.gradient.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(as.density.lpNorm<Eigen::Infinity>() == 0.0);
}
