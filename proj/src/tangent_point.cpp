#include "plateflow/tangent_point.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace plateflow {

namespace {

double ipow(double x, int e) {
    double r = 1;
    while (e > 0) {
        if (e & 1) r *= x;
        x *= x;
        e >>= 1;
    }
    return r;
}

// Union over glued copies of each slot's excluded triangle set.
std::vector<std::vector<int>> slot_exclusions(const TriMesh& mesh, const DofLayout& layout,
                                              const ExclusionTable& excl) {
    std::vector<std::vector<int>> ex(layout.n_slots);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        auto& dst = ex[layout.slot[v]];
        dst.insert(dst.end(), excl.excluded[v].begin(), excl.excluded[v].end());
    }
    for (auto& e : ex) {
        std::sort(e.begin(), e.end());
        e.erase(std::unique(e.begin(), e.end()), e.end());
    }
    return ex;
}

std::vector<TpQuadrature::Correction> corrections_for(
    int outer_slot, const std::vector<int>& excluded_tris,
    const std::vector<std::array<int, 3>>& tris, const std::vector<double>& tri_area) {
    std::map<int, double> dw;
    for (int t : excluded_tris) {
        const double w = tri_area[t] / 3.0;
        for (int s : tris[t])
            if (s != outer_slot) dw[s] -= w;
    }
    std::vector<TpQuadrature::Correction> out;
    out.reserve(dw.size());
    for (const auto& [s, w] : dw) out.push_back({s, w});
    return out;
}

}  // namespace

double tp_radius(const Eigen::Vector3d& p, const Eigen::Vector3d& p_tilde,
                 const Eigen::Vector3d& nu) {
    const Eigen::Vector3d d = p - p_tilde;
    const double n2 = d.squaredNorm();
    if (n2 == 0) throw std::domain_error("tp_radius: coincident points");
    const double den = 2 * std::abs(nu.dot(d));
    if (den == 0) return std::numeric_limits<double>::infinity();
    return n2 / den;
}

TpQuadrature make_full_quadrature(const TriMesh& mesh, const DofLayout& layout,
                                  const ExclusionTable& excl) {
    TpQuadrature q;
    q.n_slots = layout.n_slots;
    q.tris.reserve(mesh.num_triangles());
    for (const auto& tri : mesh.triangles)
        q.tris.push_back({layout.slot[tri[0]], layout.slot[tri[1]], layout.slot[tri[2]]});
    q.tri_area = mesh.area;

    q.beta.assign(q.n_slots, 0.0);
    for (size_t t = 0; t < q.tris.size(); ++t)
        for (int s : q.tris[t]) q.beta[s] += q.tri_area[t] / 3.0;

    const auto ex = slot_exclusions(mesh, layout, excl);
    q.outer.resize(q.n_slots);
    std::iota(q.outer.begin(), q.outer.end(), 0);
    q.outer_weight = q.beta;
    q.corrections.resize(q.n_slots);
    for (int s = 0; s < q.n_slots; ++s)
        q.corrections[s] = corrections_for(s, ex[s], q.tris, q.tri_area);
    return q;
}

TpQuadrature make_boundary_quadrature(const TriMesh& mesh, const DofLayout& layout,
                                      const ExclusionTable& excl) {
    TpQuadrature q;
    q.n_slots = layout.n_slots;
    q.tris.reserve(mesh.num_triangles());
    for (const auto& tri : mesh.triangles)
        q.tris.push_back({layout.slot[tri[0]], layout.slot[tri[1]], layout.slot[tri[2]]});
    q.tri_area = mesh.area;
    q.beta.assign(q.n_slots, 0.0);
    for (size_t t = 0; t < q.tris.size(); ++t)
        for (int s : q.tris[t]) q.beta[s] += q.tri_area[t] / 3.0;

    // gamma_z: half the summed lengths of incident physical boundary edges.
    // Seam edges of glued meshes are not physical boundary.
    std::vector<bool> glued(mesh.num_vertices(), false);
    for (const auto& g : mesh.gluing) glued[g.slave] = glued[g.master] = true;
    std::vector<double> gamma(q.n_slots, 0.0);
    for (const auto& side : mesh.sides) {
        if (!side.boundary) continue;
        if (glued[side.a] && glued[side.b]) continue;
        gamma[layout.slot[side.a]] += 0.5 * side.length;
        gamma[layout.slot[side.b]] += 0.5 * side.length;
    }

    const auto ex = slot_exclusions(mesh, layout, excl);
    for (int s = 0; s < q.n_slots; ++s) {
        if (gamma[s] == 0) continue;
        q.outer.push_back(s);
        q.outer_weight.push_back(gamma[s]);
        q.corrections.push_back(corrections_for(s, ex[s], q.tris, q.tri_area));
    }
    return q;
}

namespace {

struct WorkingTri {
    int level;
    int tri;  // index within hier.levels[level]
};

// Mixed-level quadrature: the outer integral always runs over every fine
// vertex with its fine lumped weight; the inner integral runs over the
// working set. Vertex indices of every level embed into the finest mesh, so
// coordinates come from the finest level. Hierarchical quadrature does not
// support glued meshes (slot == vertex). Finest-level triangles reuse the
// geometric exclusion rule of the full quadrature; for unrefined coarser
// triangles only corner incidence excludes (a fine vertex hanging on a coarse
// edge is not a singular pair, and dropping the triangle would lose its mass).
TpQuadrature mixed_quadrature(const RefinementHierarchy& hier, const DofLayout& layout,
                              const std::vector<WorkingTri>& work) {
    const TriMesh& fine = hier.finest();
    const int finest_level = hier.num_levels() - 1;
    TpQuadrature wq;
    wq.n_slots = layout.n_slots;
    double hmin = std::numeric_limits<double>::infinity();
    for (const auto& wt : work) {
        const TriMesh& m = hier.levels[wt.level];
        const auto& tri = m.triangles[wt.tri];
        wq.tris.push_back({layout.slot[tri[0]], layout.slot[tri[1]], layout.slot[tri[2]]});
        wq.tri_area.push_back(m.area[wt.tri]);
        if (wt.level == finest_level) {
            double longest = 0;
            for (int e = 0; e < 3; ++e) {
                const auto& a = m.vertices[tri[e]];
                const auto& b = m.vertices[tri[(e + 1) % 3]];
                longest = std::max(longest, (b - a).norm());
            }
            hmin = std::min(hmin, longest);
        }
    }
    if (!std::isfinite(hmin)) hmin = fine.h_min;
    wq.beta.assign(wq.n_slots, 0.0);
    for (size_t t = 0; t < wq.tris.size(); ++t)
        for (int s : wq.tris[t]) wq.beta[s] += wq.tri_area[t] / 3.0;

    std::vector<double> beta_fine(wq.n_slots, 0.0);
    for (int t = 0; t < fine.num_triangles(); ++t)
        for (int v : fine.triangles[t]) beta_fine[v] += fine.area[t] / 3.0;

    const double radius = hmin / 2;
    for (int z = 0; z < wq.n_slots; ++z) {
        const Eigen::Vector2d& p = fine.vertices[z];
        std::vector<int> excluded;
        for (size_t t = 0; t < work.size(); ++t) {
            const TriMesh& m = hier.levels[work[t].level];
            const auto& tri = m.triangles[work[t].tri];
            if (work[t].level == finest_level) {
                const double d = point_triangle_distance(
                    p, m.vertices[tri[0]], m.vertices[tri[1]], m.vertices[tri[2]]);
                if (d < radius) excluded.push_back(static_cast<int>(t));
            } else if (tri[0] == z || tri[1] == z || tri[2] == z) {
                excluded.push_back(static_cast<int>(t));
            }
        }
        wq.outer.push_back(z);
        wq.outer_weight.push_back(beta_fine[z]);
        wq.corrections.push_back(corrections_for(z, excluded, wq.tris, wq.tri_area));
    }
    return wq;
}

// Contribution of each working triangle to the outer integral: the fine
// nodal interpolant of the potential density integrated over the triangle's
// fine descendants.
std::vector<double> working_contributions(const DeformationState& state,
                                          const RefinementHierarchy& hier,
                                          const DofLayout& layout,
                                          const std::vector<WorkingTri>& work, int q) {
    const TpQuadrature wq = mixed_quadrature(hier, layout, work);
    const TpAssembly asms = assemble_tp(state, wq, q, false);

    const TriMesh& fine = hier.finest();
    const int finest_level = hier.num_levels() - 1;
    // ancestor of each fine triangle at every level
    std::vector<std::vector<int>> anc(hier.num_levels());
    anc[finest_level].resize(fine.num_triangles());
    std::iota(anc[finest_level].begin(), anc[finest_level].end(), 0);
    for (int l = finest_level - 1; l >= 0; --l) {
        anc[l].resize(fine.num_triangles());
        for (int t = 0; t < fine.num_triangles(); ++t)
            anc[l][t] = hier.parent[l + 1][anc[l + 1][t]];
    }
    std::vector<std::vector<size_t>> owner_of(hier.num_levels());
    for (int l = 0; l <= finest_level; ++l)
        owner_of[l].assign(hier.levels[l].num_triangles(), work.size());
    for (size_t i = 0; i < work.size(); ++i) owner_of[work[i].level][work[i].tri] = i;

    std::vector<double> contrib(work.size(), 0.0);
    for (int t = 0; t < fine.num_triangles(); ++t) {
        size_t owner = work.size();
        for (int l = finest_level; l >= 0 && owner == work.size(); --l)
            owner = owner_of[l][anc[l][t]];
        double c = 0;
        for (int v : fine.triangles[t]) c += fine.area[t] / 3.0 * asms.density[v];
        contrib[owner] += c;
    }
    return contrib;
}

}  // namespace

TpQuadrature make_hier_quadrature(const DeformationState& state,
                                  const RefinementHierarchy& hier, const DofLayout& layout,
                                  int q, double sigma) {
    if (!hier.finest().gluing.empty())
        throw std::invalid_argument("hierarchical quadrature does not support glued meshes");
    const int N = hier.num_levels();

    std::vector<WorkingTri> work;
    for (int t = 0; t < hier.levels[0].num_triangles(); ++t) work.push_back({0, t});

    for (int round = 0; round + 1 < N; ++round) {
        const auto contrib = working_contributions(state, hier, layout, work, q);
        const double total = std::accumulate(contrib.begin(), contrib.end(), 0.0);
        if (total <= 0) break;  // flat or contact-free state: keep coarse

        std::vector<size_t> order(work.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return contrib[a] > contrib[b]; });

        std::vector<char> selected(work.size(), 0);
        double cum = 0;
        for (size_t i : order) {
            if (cum >= sigma * total) break;
            selected[i] = 1;
            cum += contrib[i];
        }

        std::vector<WorkingTri> next;
        for (size_t i = 0; i < work.size(); ++i) {
            if (selected[i] && work[i].level + 1 < N) {
                for (int c = 0; c < 4; ++c)
                    next.push_back({work[i].level + 1, 4 * work[i].tri + c});
            } else {
                next.push_back(work[i]);
            }
        }
        work = std::move(next);
    }

    return mixed_quadrature(hier, layout, work);
}

namespace {

struct BlockResult {
    double energy = 0;
    Eigen::VectorXd grad;  // empty unless gradient requested and block touched
    long pairs = 0;
};

constexpr int kBlockSize = 32;

}  // namespace

TpAssembly assemble_tp(const DeformationState& state, const TpQuadrature& quad, int q,
                       bool with_gradient, int threads) {
    if (q < 2) throw std::invalid_argument("tangent-point exponent must be >= 2");
    const int n = quad.n_slots;
    TpAssembly out;
    out.density = Eigen::VectorXd::Zero(n);
    if (with_gradient) out.gradient = Eigen::VectorXd::Zero(9 * n);

    const int n_outer = static_cast<int>(quad.outer.size());
    const int n_blocks = (n_outer + kBlockSize - 1) / kBlockSize;
    std::vector<BlockResult> blocks(n_blocks);

    std::atomic<int> next_block{0};
    std::atomic<bool> failed{false};

    auto worker = [&]() {
        Eigen::Vector3d pos_s;
        while (true) {
            const int b = next_block.fetch_add(1);
            if (b >= n_blocks || failed.load()) break;
            BlockResult& res = blocks[b];
            if (with_gradient) res.grad = Eigen::VectorXd::Zero(9 * n);
            const int lo = b * kBlockSize, hi = std::min(n_outer, lo + kBlockSize);

            for (int io = lo; io < hi; ++io) {
                const int z = quad.outer[io];
                const double wz = quad.outer_weight[io];
                const Eigen::Vector3d yz = state.position(z);
                const auto g = state.gradient(z);
                const Eigen::Vector3d f1 = g.col(0), f2 = g.col(1);
                const Eigen::Vector3d nu = f1.cross(f2);
                double dens = 0;

                auto pair = [&](int s, double w) {
                    const Eigen::Vector3d d = yz - state.position(s);
                    const double n2 = d.squaredNorm();
                    if (n2 == 0) {
                        failed.store(true);
                        return;
                    }
                    res.pairs++;
                    const double a = nu.dot(d);
                    if (a == 0) return;  // sign(0) := 0, flat pair contributes nothing
                    const double aa = std::abs(a);
                    const double sg = a > 0 ? 1.0 : -1.0;
                    const double aq = ipow(aa, q);
                    const double n2q = ipow(n2, q);
                    dens += w * aq / (n2q * q);
                    if (!with_gradient) return;
                    const double R = (aq / aa) / (n2q * n2);
                    const double F = wz * w * R;
                    const Eigen::Vector3d vc = F * (sg * n2 * nu - 2 * aa * d);
                    const Eigen::Vector3d g1 = (F * sg * n2) * f2.cross(d);
                    const Eigen::Vector3d g2 = (F * sg * n2) * d.cross(f1);
                    for (int c = 0; c < 3; ++c) {
                        res.grad[9 * z + 3 * c + 0] += vc[c];
                        res.grad[9 * s + 3 * c + 0] -= vc[c];
                        res.grad[9 * z + 3 * c + 1] += g1[c];
                        res.grad[9 * z + 3 * c + 2] += g2[c];
                    }
                };

                for (int s = 0; s < n; ++s) {
                    if (s == z) continue;
                    const double w = quad.beta[s];
                    if (w != 0) pair(s, w);
                    if (failed.load()) return;
                }
                for (const auto& c : quad.corrections[io]) {
                    pair(c.slot, c.dw);
                    if (failed.load()) return;
                }
                out.density[z] += dens;  // block-owned outer node, no race
                res.energy += wz * dens;
            }
        }
    };

    const int nthreads = std::max(1, std::min(threads, n_blocks));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed.load())
        throw std::domain_error(
            "tangent-point assembly: coincident nodal positions across an admissible pair "
            "(self-intersecting configuration)");

    // Deterministic reduction in fixed block order, independent of threads.
    for (const auto& b : blocks) {
        out.energy += b.energy;
        out.pair_evaluations += b.pairs;
        if (with_gradient && b.grad.size() > 0) out.gradient += b.grad;
    }
    return out;
}

std::vector<Eigen::Vector3d> tp_force_field(const DeformationState& state,
                                            const TpQuadrature& quad) {
    const int n = quad.n_slots;
    std::vector<Eigen::Vector3d> force(n, Eigen::Vector3d::Zero());
    for (size_t io = 0; io < quad.outer.size(); ++io) {
        const int z = quad.outer[io];
        const Eigen::Vector3d yz = state.position(z);
        const Eigen::Vector3d nu = state.normal(z);
        Eigen::Vector3d f = Eigen::Vector3d::Zero();
        auto pair = [&](int s, double w) {
            const Eigen::Vector3d d = yz - state.position(s);
            const double n2 = d.squaredNorm();
            if (n2 == 0) throw std::domain_error("tp_force_field: coincident points");
            for (int i = 0; i < 3; ++i) f[i] += w * nu[i] * std::abs(d[i]) / n2;
        };
        for (int s = 0; s < n; ++s) {
            if (s == z) continue;
            if (quad.beta[s] != 0) pair(s, quad.beta[s]);
        }
        for (const auto& c : quad.corrections[io]) pair(c.slot, c.dw);
        force[z] = f;
    }
    return force;
}

}  // namespace plateflow
