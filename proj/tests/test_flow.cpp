#include "plateflow/flow.hpp"

#include <doctest.h>

#include <cmath>

using namespace plateflow;

namespace {

struct Fixture {
    TriMesh mesh;
    DofLayout layout;
    DiscreteGradientMap gmap;
    SdktOperator sdkt;
    Eigen::SparseMatrix<double> s_free;

    explicit Fixture(double hhat, const std::vector<int>& dirichlet = {}, int anchor = -1)
        : mesh(build_halved_squares(0, 1, 0, 1, hhat)),
          layout(build_layout(mesh, dirichlet, anchor)),
          gmap(build_gradient_map(mesh)),
          sdkt(assemble_sdkt(mesh, gmap, layout)),
          s_free(restrict_free(sdkt.replicate3(), layout)) {}

    DeformationState flat() const {
        DeformationState st;
        st.dofs = Eigen::VectorXd::Zero(layout.n_full_dofs());
        for (int s = 0; s < layout.n_slots; ++s) {
            st.dofs[9 * s + 0] = mesh.vertices[s][0];
            st.dofs[9 * s + 3] = mesh.vertices[s][1];
            st.dofs[9 * s + 1] = 1;
            st.dofs[9 * s + 5] = 1;
        }
        return st;
    }
};

std::vector<int> left_edge(const TriMesh& mesh) {
    std::vector<int> out;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (mesh.vertices[v][0] == 0.0) out.push_back(v);
    return out;
}

}  // namespace

TEST_CASE("constraint matrix: rows, sparsity and flat-state pattern") {
    const Fixture fx(0.5);
    const DeformationState st = fx.flat();
    const ConstraintMatrix cm = constraint_matrix(st, fx.layout);
    CHECK(cm.A.rows() == 3 * fx.layout.n_slots);
    CHECK(cm.A.cols() == fx.layout.n_full_free);

    // flat identity gradients: rows are (2 d1, 0), (0, 2 d2), (d2, d1) per component
    Eigen::VectorXd w = Eigen::VectorXd::Zero(fx.layout.n_full_free);
    const int s = fx.layout.slot[4];
    w[fx.layout.full_free[fx.layout.full_index_slot(s, 0, 1)]] = 1.0;  // d1 w1 = 1
    const Eigen::VectorXd r = cm.A * w;
    CHECK(r[3 * s + 0] == 2.0);  // d1 y . d1 w
    CHECK(r[3 * s + 1] == 0.0);
    CHECK(r[3 * s + 2] == 0.0);
    Eigen::VectorXd w2 = Eigen::VectorXd::Zero(fx.layout.n_full_free);
    w2[fx.layout.full_free[fx.layout.full_index_slot(s, 1, 2)]] = 1.0;  // d2 w2 = 1
    const Eigen::VectorXd r2 = cm.A * w2;
    CHECK(r2[3 * s + 1] == 2.0);
    CHECK(r2[3 * s + 2] == 0.0);
    Eigen::VectorXd w3 = Eigen::VectorXd::Zero(fx.layout.n_full_free);
    w3[fx.layout.full_free[fx.layout.full_index_slot(s, 1, 1)]] = 1.0;  // d1 w2 = 1
    CHECK((cm.A * w3)[3 * s + 2] == 1.0);  // mixed row sees d2 y2 = 1
}

TEST_CASE("null space basis annihilates the constraint") {
    const Fixture fx(0.25);
    DeformationState st = fx.flat();
    // generic curved state
    for (int s = 0; s < fx.layout.n_slots; ++s) {
        const double x = fx.mesh.vertices[s][0];
        st.dofs[9 * s + 6] = 0.2 * std::sin(2 * x);
        st.dofs[9 * s + 7] = 0.4 * std::cos(2 * x);
    }
    const ConstraintMatrix cm = constraint_matrix(st, fx.layout);
    const NullSpaceBasis ns = null_space_basis(st, fx.layout);
    CHECK(ns.degenerate_slots.empty());
    CHECK(ns.C.cols() == 6 * fx.layout.n_slots);
    const Eigen::SparseMatrix<double> AC = cm.A * ns.C;
    CHECK(Eigen::MatrixXd(AC).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("saddle and null-space solvers agree") {
    const Fixture fx(0.25, left_edge(build_halved_squares(0, 1, 0, 1, 0.25)));
    DeformationState st = fx.flat();
    BendingParams params;
    params.force = {0, 0, 1e-2};
    params.domain_area = 1.0;
    const Eigen::VectorXd b = bending_rhs(st, params, fx.sdkt, fx.mesh, fx.layout, fx.gmap, 0,
                                          Eigen::VectorXd());
    FlowConfig cfg;
    cfg.tau = 0.05;
    cfg.solver = FlowConfig::Solver::Saddle;
    const StepResult saddle = flow_step(st, b, fx.sdkt, fx.s_free, fx.layout, cfg);
    cfg.solver = FlowConfig::Solver::NullSpace;
    const StepResult nulls = flow_step(st, b, fx.sdkt, fx.s_free, fx.layout, cfg);
    CHECK(saddle.dt_norm > 0);
    CHECK((saddle.dt - nulls.dt).lpNorm<Eigen::Infinity>() <
          1e-8 * (1 + saddle.dt.lpNorm<Eigen::Infinity>()));
    CHECK(saddle.dt_norm == doctest::Approx(nulls.dt_norm).epsilon(1e-8));

    // Dirichlet dofs never move
    for (int v : left_edge(fx.mesh))
        for (int k = 0; k < 9; ++k) CHECK(saddle.dt[9 * fx.layout.slot[v] + k] == 0.0);

    // the step satisfies the linearized constraint
    const ConstraintMatrix cm = constraint_matrix(st, fx.layout);
    Eigen::VectorXd dt_free(fx.layout.n_full_free);
    for (int i = 0; i < 9 * fx.layout.n_slots; ++i)
        if (fx.layout.full_free[i] >= 0) dt_free[fx.layout.full_free[i]] = nulls.dt[i];
    CHECK((cm.A * dt_free).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("stationary flat plate with no forcing stops immediately") {
    const Fixture fx(0.5, left_edge(build_halved_squares(0, 1, 0, 1, 0.5)));
    FlowProblem prob;
    prob.mesh = &fx.mesh;
    prob.layout = &fx.layout;
    prob.sdkt = &fx.sdkt;
    prob.gmap = &fx.gmap;
    prob.bending.domain_area = 1.0;
    prob.tp.rho = 0;
    prob.quad = make_full_quadrature(fx.mesh, fx.layout, exclusion_table(fx.mesh));
    prob.initial = fx.flat().dofs;
    FlowConfig cfg;
    cfg.tau = 0.05;
    cfg.eps_stop = 1e-3;
    cfg.relax_iters = 0;
    const FlowResult res = run_flow(prob, cfg);
    CHECK(res.converged);
    CHECK(res.iterations <= 1);
    CHECK(res.abort_reason.empty());
    CHECK((res.state.dofs - prob.initial).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("energy decreases along the flow under a body force") {
    const Fixture fx(0.25, left_edge(build_halved_squares(0, 1, 0, 1, 0.25)));
    FlowProblem prob;
    prob.mesh = &fx.mesh;
    prob.layout = &fx.layout;
    prob.sdkt = &fx.sdkt;
    prob.gmap = &fx.gmap;
    prob.bending.force = {0, 0, 5e-3};
    prob.bending.domain_area = 1.0;
    prob.tp.rho = 0;
    prob.quad = make_full_quadrature(fx.mesh, fx.layout, exclusion_table(fx.mesh));
    prob.initial = fx.flat().dofs;
    FlowConfig cfg;
    cfg.tau = 0.025;
    cfg.eps_stop = 1e-4;
    cfg.max_iter = 400;
    cfg.relax_iters = 0;
    const FlowResult res = run_flow(prob, cfg);
    CHECK(res.converged);
    REQUIRE(res.log.size() > 2);
    for (size_t i = 1; i < res.log.size(); ++i)
        CHECK(res.log[i].energy <= res.log[i - 1].energy + 1e-12);
    CHECK(res.log.back().delta_iso < 0.05);  // small deflection stays near isometric
    CHECK(res.state.dofs[6] == prob.initial[6]);  // clamped corner
}

TEST_CASE("eoc recovers the rate of a synthetic second-order sequence") {
    const RefinementHierarchy hier =
        build_hierarchy(build_halved_squares(0, 1, 0, 1, 0.25), 3);
    auto sample = [&](int level, double h) {
        const TriMesh& m = hier.levels[level];
        std::vector<Eigen::Vector3d> out(m.num_vertices());
        for (int v = 0; v < m.num_vertices(); ++v) {
            const double x = m.vertices[v][0], y = m.vertices[v][1];
            // linear limit (exact under P1 prolongation) plus an O(h^2) defect
            out[v] = Eigen::Vector3d{x, y, x + 2 * y} +
                     h * h * Eigen::Vector3d{std::cos(3 * x), std::sin(2 * y), x * y};
        }
        return out;
    };
    const double rate = eoc(hier, 0, sample(0, 0.25), sample(1, 0.125), sample(2, 0.0625));
    CHECK(rate == doctest::Approx(2.0).epsilon(0.1));

    // identical sequences have a vanishing denominator
    const auto same = sample(2, 0.0);
    CHECK_THROWS_AS(eoc(hier, 0, sample(0, 0.0), sample(1, 0.0), same), std::domain_error);
}
