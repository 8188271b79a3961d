#include "plateflow/flow.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace plateflow {

ConstraintMatrix constraint_matrix(const DeformationState& state, const DofLayout& layout) {
    ConstraintMatrix cm;
    std::vector<Eigen::Triplet<double>> trip;
    for (int s = 0; s < layout.n_slots; ++s) {
        if (layout.grad_clamped[s]) continue;
        const auto g = state.gradient(s);
        const Eigen::Vector3d f1 = g.col(0), f2 = g.col(1);
        const int base = static_cast<int>(cm.row_slot.size()) * 3;
        cm.row_slot.push_back(s);
        for (int c = 0; c < 3; ++c) {
            const int c1 = layout.full_free[layout.full_index_slot(s, c, 1)];
            const int c2 = layout.full_free[layout.full_index_slot(s, c, 2)];
            trip.emplace_back(base + 0, c1, 2 * f1[c]);
            trip.emplace_back(base + 1, c2, 2 * f2[c]);
            trip.emplace_back(base + 2, c1, f2[c]);
            trip.emplace_back(base + 2, c2, f1[c]);
        }
    }
    cm.A.resize(static_cast<int>(cm.row_slot.size()) * 3, layout.n_full_free);
    cm.A.setFromTriplets(trip.begin(), trip.end());
    cm.A.makeCompressed();
    return cm;
}

NullSpaceBasis null_space_basis(const DeformationState& state, const DofLayout& layout) {
    NullSpaceBasis basis;
    std::vector<Eigen::Triplet<double>> trip;
    int col = 0;
    for (int s = 0; s < layout.n_slots; ++s) {
        // Free value shifts.
        if (!layout.value_clamped[s]) {
            for (int c = 0; c < 3; ++c) {
                const int r = layout.full_free[layout.full_index_slot(s, c, 0)];
                trip.emplace_back(r, col++, 1.0);
            }
        }
        if (layout.grad_clamped[s]) continue;

        // Exact local kernel of the 3x6 vertex constraint block; gradient dof
        // order (c=0..2, d1) then (c=0..2, d2).
        const auto g = state.gradient(s);
        const Eigen::Vector3d f1 = g.col(0), f2 = g.col(1);
        Eigen::Matrix<double, 3, 6> B = Eigen::Matrix<double, 3, 6>::Zero();
        for (int c = 0; c < 3; ++c) {
            B(0, c) = 2 * f1[c];
            B(1, 3 + c) = 2 * f2[c];
            B(2, c) = f2[c];
            B(2, 3 + c) = f1[c];
        }
        Eigen::JacobiSVD<Eigen::Matrix<double, 3, 6>> svd(
            B, Eigen::ComputeFullU | Eigen::ComputeFullV);
        if (svd.singularValues()[2] <= 1e-12 * svd.singularValues()[0]) {
            basis.degenerate_slots.push_back(s);
            continue;
        }
        for (int k = 3; k < 6; ++k) {
            const auto v = svd.matrixV().col(k);
            for (int c = 0; c < 3; ++c) {
                const int r1 = layout.full_free[layout.full_index_slot(s, c, 1)];
                const int r2 = layout.full_free[layout.full_index_slot(s, c, 2)];
                if (v[c] != 0) trip.emplace_back(r1, col, v[c]);
                if (v[3 + c] != 0) trip.emplace_back(r2, col, v[3 + c]);
            }
            ++col;
        }
    }
    basis.C.resize(layout.n_full_free, col);
    basis.C.setFromTriplets(trip.begin(), trip.end());
    basis.C.makeCompressed();
    return basis;
}

Eigen::SparseMatrix<double> restrict_free(const Eigen::SparseMatrix<double>& S_full,
                                          const DofLayout& layout) {
    std::vector<Eigen::Triplet<double>> trip;
    for (int col = 0; col < S_full.outerSize(); ++col) {
        const int fc = layout.full_free[col];
        if (fc < 0) continue;
        for (Eigen::SparseMatrix<double>::InnerIterator it(S_full, col); it; ++it) {
            const int fr = layout.full_free[it.row()];
            if (fr >= 0) trip.emplace_back(fr, fc, it.value());
        }
    }
    Eigen::SparseMatrix<double> out(layout.n_full_free, layout.n_full_free);
    out.setFromTriplets(trip.begin(), trip.end());
    out.makeCompressed();
    return out;
}

namespace {

Eigen::VectorXd restrict_vector(const Eigen::VectorXd& full, const DofLayout& layout) {
    Eigen::VectorXd out(layout.n_full_free);
    for (int i = 0; i < layout.n_full_dofs(); ++i)
        if (layout.full_free[i] >= 0) out[layout.full_free[i]] = full[i];
    return out;
}

Eigen::VectorXd scatter_vector(const Eigen::VectorXd& free, const DofLayout& layout) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(layout.n_full_dofs());
    for (int i = 0; i < layout.n_full_dofs(); ++i)
        if (layout.full_free[i] >= 0) out[i] = free[layout.full_free[i]];
    return out;
}

}  // namespace

StepResult flow_step(const DeformationState& state, const Eigen::VectorXd& b,
                     const SdktOperator& sdkt, const Eigen::SparseMatrix<double>& S_free,
                     const DofLayout& layout, const FlowConfig& config) {
    StepResult res;
    const Eigen::VectorXd b_free = restrict_vector(b, layout);
    const double fac = 1.0 + config.tau;

    if (config.solver == FlowConfig::Solver::Saddle) {
        const ConstraintMatrix cm = constraint_matrix(state, layout);
        const int n = layout.n_full_free;
        const int m = cm.A.rows();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(S_free.nonZeros() + 2 * cm.A.nonZeros());
        for (int col = 0; col < S_free.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(S_free, col); it; ++it)
                trip.emplace_back(it.row(), col, fac * it.value());
        for (int col = 0; col < cm.A.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(cm.A, col); it; ++it) {
                trip.emplace_back(n + it.row(), col, it.value());
                trip.emplace_back(col, n + it.row(), it.value());
            }
        Eigen::SparseMatrix<double> K(n + m, n + m);
        K.setFromTriplets(trip.begin(), trip.end());
        K.makeCompressed();

        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
        rhs.head(n) = b_free;

        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(K);
        if (lu.info() != Eigen::Success)
            throw std::runtime_error("flow_step: singular saddle-point factorization");
        const Eigen::VectorXd sol = lu.solve(rhs);
        res.dt = scatter_vector(sol.head(n), layout);
        res.lambda = sol.tail(m);
    } else {
        const NullSpaceBasis basis = null_space_basis(state, layout);
        if (!basis.degenerate_slots.empty())
            throw std::runtime_error("flow_step: rank-deficient nodal gradients at " +
                                     std::to_string(basis.degenerate_slots.size()) +
                                     " vertices");
        const Eigen::SparseMatrix<double> M =
            (fac * basis.C.transpose() * S_free * basis.C).pruned();
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
        ldlt.compute(M);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("flow_step: reduced system factorization failed");
        const Eigen::VectorXd xhat = ldlt.solve(basis.C.transpose() * b_free);
        res.dt = scatter_vector(basis.C * xhat, layout);
    }
    res.dt_norm = std::sqrt(std::max(0.0, sdkt.quadratic_form(res.dt)));
    return res;
}

namespace {

IterationRecord make_record(int k, const FlowProblem& prob, const DeformationState& y,
                            double rho, double tp_energy, double dt_norm, double wall_ms) {
    const EnergyReport rep = bending_energy(y, prob.bending, *prob.sdkt, *prob.mesh,
                                            *prob.layout, *prob.gmap, rho, tp_energy);
    IterationRecord rec;
    rec.k = k;
    rec.energy = rep.total;
    rec.bending = rep.bending + rep.cross + rep.alpha_const + rep.force_part;
    rec.tp = tp_energy;
    rec.delta_iso = rep.delta_iso;
    rec.dt_norm = dt_norm;
    rec.wall_ms = wall_ms;
    return rec;
}

}  // namespace

FlowResult run_flow(const FlowProblem& prob, const FlowConfig& config,
                    const std::function<void(int, const DeformationState&)>& on_record) {
    FlowResult result;
    result.state.dofs = prob.initial;
    const DofLayout& layout = *prob.layout;
    const Eigen::SparseMatrix<double> S_free = restrict_free(prob.sdkt->replicate3(), layout);

    const double relax_eps =
        config.relax_threshold > 0 ? config.relax_threshold : 10 * config.eps_stop;

    auto assemble = [&](double rho) {
        TpAssembly tp;
        if (rho != 0)
            tp = assemble_tp(result.state, prob.quad, prob.tp.q, true, config.threads);
        return tp;
    };

    auto advance = [&](double rho, const TpAssembly& tp) {
        const Eigen::VectorXd b =
            bending_rhs(result.state, prob.bending, *prob.sdkt, *prob.mesh, layout,
                        *prob.gmap, rho, tp.gradient);
        StepResult step = flow_step(result.state, b, *prob.sdkt, S_free, layout, config);
        result.state.dofs += config.tau * step.dt;
        return step.dt_norm;
    };

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto wall_ms = [&]() {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    // Warm-start relaxation at rho = 0. The threshold applies only once
    // ||d_t y||_* has exceeded it: symmetric initial states start almost
    // stationary and need the transient to develop first.
    bool armed = false;
    for (int k = 1; k <= config.relax_iters; ++k) {
        const TpAssembly none;
        const double dtn = advance(0.0, none);
        result.relax_log.push_back(make_record(k, prob, result.state, 0, 0, dtn, wall_ms()));
        if (!std::isfinite(result.relax_log.back().energy)) {
            result.abort_reason = "energy blow-up during relaxation";
            return result;
        }
        armed = armed || dtn >= relax_eps;
        if (armed && dtn < relax_eps) break;
    }

    const double rho = prob.tp.rho;
    TpAssembly tp = assemble(rho);

    auto record = [&](int k, double dtn) {
        result.log.push_back(make_record(k, prob, result.state, rho, tp.energy, dtn, wall_ms()));
        if (on_record) on_record(k, result.state);
    };
    record(0, 0.0);

    armed = false;
    for (int k = 1; k <= config.max_iter; ++k) {
        const double dtn = advance(rho, tp);
        tp = assemble(rho);  // at the new state; reused by the next step
        result.iterations = k;

        armed = armed || dtn >= config.eps_stop;
        // Unarmed stop only for genuinely stationary data (floor well below
        // the scale a symmetry-breaking force induces).
        const bool stop =
            dtn < config.eps_stop && (armed || dtn < 1e-4 * config.eps_stop);
        if (k % config.record_every == 0 || stop || k == config.max_iter) record(k, dtn);

        if (!std::isfinite(result.log.empty() ? 0.0 : result.log.back().energy) ||
            !std::isfinite(dtn)) {
            result.abort_reason = "energy blow-up at iteration " + std::to_string(k);
            return result;
        }
        if (stop) {
            result.converged = true;
            break;
        }
    }
    return result;
}

double eoc(const RefinementHierarchy& hier, int base_level,
           const std::vector<Eigen::Vector3d>& coarse, const std::vector<Eigen::Vector3d>& mid,
           const std::vector<Eigen::Vector3d>& fine) {
    if (base_level + 2 >= hier.num_levels())
        throw std::invalid_argument("eoc: hierarchy needs 3 levels from base_level");

    auto diff_norm = [&](int level, const std::vector<Eigen::Vector3d>& c,
                         const std::vector<Eigen::Vector3d>& f) {
        auto p = prolongate_p1(hier, level, c);
        for (size_t i = 0; i < p.size(); ++i) p[i] -= f[i];
        return p1_l2_norm(hier.levels[level + 1], p);
    };

    const double e1 = diff_norm(base_level, coarse, mid);
    const double e2 = diff_norm(base_level + 1, mid, fine);
    if (e2 == 0) throw std::domain_error("eoc: zero denominator");
    return std::log2(e1 / e2);
}

}  // namespace plateflow
