#include "plateflow/dkt.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace plateflow;

namespace {

using Fn = std::function<double(double, double)>;

// Scalar dof vector (per slot) interpolating w with gradient (wx, wy).
Eigen::VectorXd interpolate(const TriMesh& mesh, const DofLayout& layout, const Fn& w,
                            const Fn& wx, const Fn& wy) {
    Eigen::VectorXd dofs = Eigen::VectorXd::Zero(layout.n_scalar_dofs());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const auto& z = mesh.vertices[v];
        dofs[layout.scalar_index(v, 0)] = w(z[0], z[1]);
        dofs[layout.scalar_index(v, 1)] = wx(z[0], z[1]);
        dofs[layout.scalar_index(v, 2)] = layout.sign(v, 2) * wy(z[0], z[1]);
    }
    return dofs;
}

struct GradientErrors {
    double grad = 0, hess = 0;  // L2 errors of grad_h w - grad w, grad grad_h w - D2 w
};

GradientErrors measure(const TriMesh& mesh, const Fn& w, const Fn& wx, const Fn& wy,
                       const std::function<Eigen::Matrix2d(double, double)>& hess) {
    const DofLayout layout = build_layout(mesh, {});
    const DiscreteGradientMap gmap = build_gradient_map(mesh);
    const Eigen::VectorXd dofs = interpolate(mesh, layout, w, wx, wy);

    GradientErrors err;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        Eigen::Matrix<double, 9, 1> local;
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k)
                local[3 * i + k] =
                    layout.sign(tri[i], k) * dofs[layout.scalar_index(tri[i], k)];
        const Eigen::Matrix<double, 12, 1> theta = gmap.op[t] * local;

        // edge midpoint quadrature, weight |T|/3
        const Eigen::Vector3d lams[3] = {{0.5, 0.5, 0}, {0, 0.5, 0.5}, {0.5, 0, 0.5}};
        for (const auto& lam : lams) {
            Eigen::Vector2d x = Eigen::Vector2d::Zero();
            for (int i = 0; i < 3; ++i) x += lam[i] * mesh.vertices[tri[i]];
            const auto shp = DiscreteGradientMap::p2_shape_values(lam);
            const auto gshp = DiscreteGradientMap::p2_shape_gradients(gmap.glam[t], lam);
            Eigen::Vector2d th = Eigen::Vector2d::Zero();
            Eigen::Matrix2d dth = Eigen::Matrix2d::Zero();
            for (int n = 0; n < 6; ++n)
                for (int c = 0; c < 2; ++c) {
                    th[c] += shp[n] * theta[2 * n + c];
                    dth.row(c) += gshp.row(n) * theta[2 * n + c];
                }
            const Eigen::Vector2d ge = th - Eigen::Vector2d{wx(x[0], x[1]), wy(x[0], x[1])};
            const Eigen::Matrix2d he = dth - hess(x[0], x[1]);
            err.grad += mesh.area[t] / 3 * ge.squaredNorm();
            err.hess += mesh.area[t] / 3 * he.squaredNorm();
        }
    }
    err.grad = std::sqrt(err.grad);
    err.hess = std::sqrt(err.hess);
    return err;
}

}  // namespace

TEST_CASE("discrete gradient reproduces quadratics exactly") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.25);
    const auto err = measure(
        mesh, [](double x, double y) { return x * x + 0.5 * x * y - y * y; },
        [](double x, double y) { return 2 * x + 0.5 * y; },
        [](double x, double y) { return 0.5 * x - 2 * y; },
        [](double, double) { return (Eigen::Matrix2d() << 2, 0.5, 0.5, -2).finished(); });
    CHECK(err.grad < 1e-10);
    CHECK(err.hess < 1e-10);
}

TEST_CASE("energy of quadratic fields is exact") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.25);
    const DofLayout layout = build_layout(mesh, {});
    const DiscreteGradientMap gmap = build_gradient_map(mesh);
    const SdktOperator sdkt = assemble_sdkt(mesh, gmap, layout);

    const Eigen::VectorXd scalar =
        interpolate(mesh, layout, [](double x, double) { return x * x; },
                    [](double x, double) { return 2 * x; }, [](double, double) { return 0.0; });
    Eigen::VectorXd full = Eigen::VectorXd::Zero(layout.n_full_dofs());
    for (int s = 0; s < layout.n_slots; ++s)
        for (int k = 0; k < 3; ++k) full[9 * s + k] = scalar[3 * s + k];
    CHECK(sdkt.quadratic_form(full) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("interpolation error rates") {
    auto w = [](double x, double y) { return std::sin(x) * std::cos(y); };
    auto wx = [](double x, double y) { return std::cos(x) * std::cos(y); };
    auto wy = [](double x, double y) { return -std::sin(x) * std::sin(y); };
    auto h2 = [&](double x, double y) {
        Eigen::Matrix2d H;
        H << -std::sin(x) * std::cos(y), -std::cos(x) * std::sin(y),
            -std::cos(x) * std::sin(y), -std::sin(x) * std::cos(y);
        return H;
    };
    double prev_g = 0, prev_h = 0;
    for (int k = 2; k <= 4; ++k) {
        const TriMesh mesh = build_halved_squares(0, 1, 0, 1, std::pow(2.0, -k));
        const auto err = measure(mesh, w, wx, wy, h2);
        if (k > 2) {
            CHECK(std::log2(prev_g / err.grad) > 1.9);
            CHECK(std::log2(prev_h / err.hess) > 0.9);
        }
        prev_g = err.grad;
        prev_h = err.hess;
    }
}

TEST_CASE("lumped weights sum to the domain area") {
    const TriMesh mesh = build_halved_squares(-5, 5, 0, 1, 0.25);
    const DofLayout layout = build_layout(mesh, {});
    const SdktOperator sdkt = assemble_sdkt(mesh, build_gradient_map(mesh), layout);
    double total = 0;
    for (double b : sdkt.beta) total += b;
    CHECK(total == doctest::Approx(10.0).epsilon(1e-13));
}

TEST_CASE("layout with dirichlet and flipped gluing") {
    TriMesh mesh = build_halved_squares(0, 2, 0, 1, 0.5);
    glue_periodic_x(mesh, 0, 2, 0, 1, true);
    const DofLayout layout = build_layout(mesh, {});
    CHECK(layout.n_slots == mesh.num_vertices() - 3);
    for (const auto& g : mesh.gluing) {
        CHECK(layout.slot[g.slave] == layout.slot[g.master]);
        CHECK(layout.d2sign[g.slave] == -1.0);
    }

    const TriMesh plain = build_halved_squares(0, 1, 0, 1, 0.5);
    const DofLayout clamped = build_layout(plain, {0, 1, 2});
    CHECK(clamped.value_clamped[clamped.slot[0]]);
    CHECK(clamped.grad_clamped[clamped.slot[1]]);
    CHECK(clamped.n_full_free == 9 * (clamped.n_slots - 3));
    CHECK(clamped.n_scalar_free == 3 * (clamped.n_slots - 3));
}

TEST_CASE("anchor clamps values only") {
    const TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.5);
    const DofLayout layout = build_layout(mesh, {}, 4);
    CHECK(layout.value_clamped[layout.slot[4]]);
    CHECK(!layout.grad_clamped[layout.slot[4]]);
    CHECK(layout.n_full_free == 9 * layout.n_slots - 3);
}

TEST_CASE("p1 prolongation and norms") {
    const RefinementHierarchy hier = build_hierarchy(build_halved_squares(0, 1, 0, 1, 0.5), 2);
    const TriMesh& coarse = hier.levels[0];
    const TriMesh& fine = hier.levels[1];

    // a linear field prolongates exactly
    auto lin = [](const Eigen::Vector2d& z) {
        return Eigen::Vector3d{1 + 2 * z[0] - z[1], z[0], 3 * z[1]};
    };
    std::vector<Eigen::Vector3d> cvals(coarse.num_vertices());
    for (int v = 0; v < coarse.num_vertices(); ++v) cvals[v] = lin(coarse.vertices[v]);
    const auto fvals = prolongate_p1(hier, 0, cvals);
    REQUIRE(static_cast<int>(fvals.size()) == fine.num_vertices());
    for (int v = 0; v < fine.num_vertices(); ++v)
        CHECK((fvals[v] - lin(fine.vertices[v])).norm() < 1e-14);

    // exact L2 norms of constant and linear fields on the unit square
    std::vector<Eigen::Vector3d> cst(fine.num_vertices(), Eigen::Vector3d{3, 0, 4});
    CHECK(p1_l2_norm(fine, cst) == doctest::Approx(5.0).epsilon(1e-13));
    std::vector<Eigen::Vector3d> xf(fine.num_vertices());
    for (int v = 0; v < fine.num_vertices(); ++v) xf[v] = {fine.vertices[v][0], 0, 0};
    CHECK(p1_l2_norm(fine, xf) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-13));

    // lumped product of constants integrates the dot product over the domain
    const DofLayout layout = build_layout(fine, {});
    const SdktOperator sdkt = assemble_sdkt(fine, build_gradient_map(fine), layout);
    std::vector<Eigen::Vector3d> a(layout.n_slots, Eigen::Vector3d{1, 2, 3});
    std::vector<Eigen::Vector3d> b(layout.n_slots, Eigen::Vector3d{4, -1, 2});
    CHECK(lumped_product(sdkt, a, b) == doctest::Approx(8.0).epsilon(1e-13));
}
