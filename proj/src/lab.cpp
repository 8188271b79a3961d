#include "plateflow/lab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace plateflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCoordTol = 1e-9;

using Frame = Eigen::Matrix<double, 3, 2>;

void set_node(Eigen::VectorXd& dofs, const DofLayout& layout, int vertex,
              const Eigen::Vector3d& y, const Frame& g) {
    const int s = layout.slot[vertex];
    const double sg = layout.d2sign[vertex];
    for (int c = 0; c < 3; ++c) {
        dofs[9 * s + 3 * c + 0] = y[c];
        dofs[9 * s + 3 * c + 1] = g(c, 0);
        dofs[9 * s + 3 * c + 2] = sg * g(c, 1);
    }
}

Frame identity_frame() {
    Frame g;
    g << 1, 0, 0, 1, 0, 0;
    return g;
}

struct Recipe {
    std::function<TriMesh(double)> mesher;
    std::function<int(const TriMesh&)> anchor;  // -1 when a Dirichlet set exists
    std::function<std::vector<int>(const TriMesh&)> dirichlet;
    std::function<void(const TriMesh&, const DofLayout&, Eigen::VectorXd&)> initial;
    BendingParams bending;
    double beta_default = 1.0;  // rho = (hhat/2)^beta unless rho_of is set
    std::function<double(double)> rho_of;  // hhat -> rho
    std::function<double(double)> tau_of;  // hhat -> tau
    int q = 5;
    int relax_iters = 0;
};

std::vector<int> vertices_where(const TriMesh& mesh,
                                const std::function<bool(double, double)>& pred) {
    std::vector<int> out;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (pred(mesh.vertices[v][0], mesh.vertices[v][1])) out.push_back(v);
    return out;
}

Recipe strip_recipe(bool twisted) {
    Recipe r;
    r.mesher = [](double h) { return build_halved_squares(-5, 5, 0, 1, h); };
    r.dirichlet = [](const TriMesh& m) {
        return vertices_where(m, [](double x, double) {
            return std::abs(std::abs(x) - 5) < kCoordTol;
        });
    };
    r.bending.force = {0, 0, 1e-6};
    r.bending.domain_area = 10;
    r.tau_of = [](double h) { return h / 10; };
    if (!twisted) {
        r.initial = [](const TriMesh& m, const DofLayout& layout, Eigen::VectorXd& dofs) {
            for (int v = 0; v < m.num_vertices(); ++v) {
                const auto& z = m.vertices[v];
                set_node(dofs, layout, v, {0.1 * z[0], z[1], 0}, identity_frame());
            }
        };
        // Long enough to release the in-plane compression artifact, short
        // enough that the rho=0 transient has not yet self-crossed.
        r.relax_iters = 20;
    } else {
        // Ruled 180-degree twist extending the boundary data; nodal frames
        // are the boundary frames rotated about the strip axis, so the nodal
        // isometry holds exactly.
        r.initial = [](const TriMesh& m, const DofLayout& layout, Eigen::VectorXd& dofs) {
            for (int v = 0; v < m.num_vertices(); ++v) {
                const auto& z = m.vertices[v];
                const double th = kPi * (z[0] + 5) / 10, s = z[1] - 0.5;
                const Eigen::Vector3d y{0.1 * z[0], 0.5 + s * std::cos(th), s * std::sin(th)};
                Frame g;
                g.col(0) = Eigen::Vector3d{1, 0, 0};
                g.col(1) = Eigen::Vector3d{0, std::cos(th), std::sin(th)};
                set_node(dofs, layout, v, y, g);
            }
        };
        r.relax_iters = 20;
    }
    return r;
}

Recipe ribbon_recipe(bool trefoil) {
    Recipe r;
    const bool flip = !trefoil;  // 5 half-twists close up with a flipped seam
    r.mesher = [flip](double h) {
        TriMesh m = build_halved_squares(0, 50, 0, 1, h);
        glue_periodic_x(m, 0, 50, 0, 1, flip);
        return m;
    };
    r.anchor = [](const TriMesh&) { return 0; };
    r.bending.domain_area = 50;
    r.relax_iters = 100;
    if (!trefoil) {
        constexpr double K = 5;
        r.tau_of = [](double h) { return h / 10; };
        r.rho_of = [](double h) { return h; };
        r.initial = [](const TriMesh& m, const DofLayout& layout, Eigen::VectorXd& dofs) {
            for (int v = 0; v < m.num_vertices(); ++v) {
                const auto& z = m.vertices[v];
                const double a = 2 * kPi * z[0] / 50, b = K * kPi * z[0] / 50;
                const double ca = std::cos(a), sa = std::sin(a);
                const double cb = std::cos(b), sb = std::sin(b);
                const Eigen::Vector3d y{(6 + sb) * ca, (6 + sb) * sa, (z[1] - 0.5) * cb};
                Frame g;
                g.col(0) = Eigen::Vector3d{-sa, ca, 0};
                g.col(1) = Eigen::Vector3d{ca * sb, sa * sb, cb};
                set_node(dofs, layout, v, y, g);
            }
        };
    } else {
        r.tau_of = [](double h) { return h / 50; };
        r.rho_of = [](double h) { return h / 2; };
        r.initial = [](const TriMesh& m, const DofLayout& layout, Eigen::VectorXd& dofs) {
            for (int v = 0; v < m.num_vertices(); ++v) {
                const auto& z = m.vertices[v];
                const double a = 6 * kPi * z[0] / 50, b = 4 * kPi * z[0] / 50;
                const double da = 6 * kPi / 50, db = 4 * kPi / 50;
                const double rad = 3 + std::cos(a);
                const Eigen::Vector3d y{rad * std::cos(b), rad * std::sin(b),
                                        std::sin(a) + z[1]};
                const double du1 = -da * std::sin(a) * std::cos(b) - rad * db * std::sin(b);
                const double du2 = -da * std::sin(a) * std::sin(b) + rad * db * std::cos(b);
                const double eta = 1.0 / std::hypot(du1, du2);
                Frame g;
                g.col(0) = Eigen::Vector3d{eta * du1, eta * du2, 0};
                g.col(1) = Eigen::Vector3d{0, 0, 1};
                set_node(dofs, layout, v, y, g);
            }
        };
    }
    return r;
}

void flat_initial(const TriMesh& m, const DofLayout& layout, Eigen::VectorXd& dofs) {
    for (int v = 0; v < m.num_vertices(); ++v) {
        const auto& z = m.vertices[v];
        set_node(dofs, layout, v, {z[0], z[1], 0}, identity_frame());
    }
}

Recipe oshape_recipe() {
    Recipe r;
    r.mesher = [](double h) { return build_oshape(h); };
    r.dirichlet = [](const TriMesh& m) {
        return vertices_where(m, [](double x, double y) {
            return (std::abs(x + 5) < kCoordTol && y <= -1 + kCoordTol) ||
                   (std::abs(y + 2) < kCoordTol && x <= -4 + kCoordTol);
        });
    };
    r.initial = flat_initial;
    r.bending.model = BendingParams::Model::Bilayer;
    r.bending.alpha = 0.75;
    r.bending.domain_area = 24;
    r.tau_of = [](double h) { return h; };
    r.rho_of = [](double h) { return h; };
    return r;
}

Recipe coiling_recipe(double length) {
    Recipe r;
    r.mesher = [length](double h) { return build_halved_squares(0, length, 0, 1, h); };
    r.dirichlet = [](const TriMesh& m) {
        return vertices_where(m, [](double x, double) { return std::abs(x) < kCoordTol; });
    };
    r.initial = flat_initial;
    r.bending.model = BendingParams::Model::Bilayer;
    r.bending.alpha = 1;
    r.bending.domain_area = length;
    r.tau_of = [](double h) { return h / 20; };
    r.rho_of = [](double h) { return h / 400; };
    r.q = 8;
    return r;
}

Recipe recipe_for(const std::string& name) {
    if (name == "compressed_strip") return strip_recipe(false);
    if (name == "twisted_strip") return strip_recipe(true);
    if (name == "closed_ribbon") return ribbon_recipe(false);
    if (name == "trefoil") return ribbon_recipe(true);
    if (name == "oshape_bilayer") return oshape_recipe();
    if (name == "coiling_bilayer_short") return coiling_recipe(10);
    if (name == "coiling_bilayer_long") return coiling_recipe(20);
    throw std::invalid_argument("unknown scenario: " + name);
}

}  // namespace

Scenario build_scenario(const std::string& name, int level, const ScenarioOverrides& ov) {
    const Recipe r = recipe_for(name);
    Scenario scn;
    scn.name = name;
    scn.level = level;
    const double hhat = std::pow(2.0, -level);

    scn.tp.q = ov.q.value_or(r.q);
    scn.tp.variant = ov.variant.value_or(TpParams::Variant::Full);
    scn.tp.sigma = ov.sigma.value_or(1.0);
    scn.tp.hier_levels = ov.hier_levels.value_or(1);
    if (ov.rho)
        scn.tp.rho = *ov.rho;
    else if (ov.beta)
        scn.tp.rho = std::pow(hhat / 2, *ov.beta);
    else if (r.rho_of)
        scn.tp.rho = r.rho_of(hhat);
    else
        scn.tp.rho = std::pow(hhat / 2, r.beta_default);

    const int depth =
        scn.tp.variant == TpParams::Variant::Hierarchical ? scn.tp.hier_levels : 1;
    if (depth > level + 1)
        throw std::invalid_argument("hierarchy depth exceeds refinement level");
    scn.hier = build_hierarchy(r.mesher(hhat * std::pow(2.0, depth - 1)), depth);

    const TriMesh& mesh = scn.mesh();
    std::vector<int> dirichlet;
    int anchor = -1;
    if (r.dirichlet)
        dirichlet = r.dirichlet(mesh);
    else
        anchor = r.anchor(mesh);
    scn.layout = build_layout(mesh, dirichlet, anchor);

    scn.initial = Eigen::VectorXd::Zero(scn.layout.n_full_dofs());
    r.initial(mesh, scn.layout, scn.initial);

    scn.bending = r.bending;

    scn.flow.tau = ov.tau.value_or(r.tau_of(hhat));
    scn.flow.eps_stop = ov.eps_stop.value_or(1e-3);
    scn.flow.max_iter = ov.max_iter.value_or(1000000);
    scn.flow.relax_iters = ov.relax_iters.value_or(r.relax_iters);
    scn.flow.record_every = ov.record_every.value_or(1);
    scn.flow.threads = ov.threads.value_or(1);
    scn.flow.solver = ov.solver.value_or(FlowConfig::Solver::NullSpace);
    return scn;
}

TpQuadrature scenario_quadrature(const Scenario& scn, const DeformationState& state) {
    switch (scn.tp.variant) {
        case TpParams::Variant::BoundaryDomain:
            return make_boundary_quadrature(scn.mesh(), scn.layout,
                                            exclusion_table(scn.mesh()));
        case TpParams::Variant::Hierarchical:
            return make_hier_quadrature(state, scn.hier, scn.layout, scn.tp.q, scn.tp.sigma);
        default:
            return make_full_quadrature(scn.mesh(), scn.layout, exclusion_table(scn.mesh()));
    }
}

ScenarioSystem build_system(const Scenario& scn) {
    ScenarioSystem sys;
    sys.gmap = build_gradient_map(scn.mesh());
    sys.sdkt = assemble_sdkt(scn.mesh(), sys.gmap, scn.layout);
    DeformationState init;
    init.dofs = scn.initial;
    sys.quad = scenario_quadrature(scn, init);
    return sys;
}

FlowResult run_scenario(const Scenario& scn, const ScenarioSystem& sys,
                        const std::function<void(int, const DeformationState&)>& on_record) {
    FlowProblem prob;
    prob.mesh = &scn.mesh();
    prob.layout = &scn.layout;
    prob.sdkt = &sys.sdkt;
    prob.gmap = &sys.gmap;
    prob.bending = scn.bending;
    prob.tp = scn.tp;
    prob.quad = sys.quad;
    prob.initial = scn.initial;
    return run_flow(prob, scn.flow, on_record);
}

// ---------------------------------------------------------------------------
// Injectivity oracle
// ---------------------------------------------------------------------------

namespace {

double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    return (b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0];
}

bool point_in_tri_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                     const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const double d1 = orient2d(a, b, p), d2 = orient2d(b, c, p), d3 = orient2d(c, a, p);
    const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(neg && pos);
}

bool segments_intersect_2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                           const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
    const double d1 = orient2d(c, d, a), d2 = orient2d(c, d, b);
    const double d3 = orient2d(a, b, c), d4 = orient2d(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
        ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    auto on = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
        return orient2d(p, q, r) == 0 && r[0] >= std::min(p[0], q[0]) &&
               r[0] <= std::max(p[0], q[0]) && r[1] >= std::min(p[1], q[1]) &&
               r[1] <= std::max(p[1], q[1]);
    };
    return on(c, d, a) || on(c, d, b) || on(a, b, c) || on(a, b, d);
}

// Coplanar case: project onto the dominant axis of the triangle normal.
bool seg_tri_coplanar(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                      const Eigen::Vector3d& p, const Eigen::Vector3d& q,
                      const Eigen::Vector3d& r, const Eigen::Vector3d& n) {
    int drop = 0;
    if (std::abs(n[1]) > std::abs(n[drop])) drop = 1;
    if (std::abs(n[2]) > std::abs(n[drop])) drop = 2;
    const int i = (drop + 1) % 3, j = (drop + 2) % 3;
    auto pr = [&](const Eigen::Vector3d& v) { return Eigen::Vector2d(v[i], v[j]); };
    const Eigen::Vector2d a2 = pr(a), b2 = pr(b), p2 = pr(p), q2 = pr(q), r2 = pr(r);
    if (point_in_tri_2d(a2, p2, q2, r2) || point_in_tri_2d(b2, p2, q2, r2)) return true;
    return segments_intersect_2d(a2, b2, p2, q2) || segments_intersect_2d(a2, b2, q2, r2) ||
           segments_intersect_2d(a2, b2, r2, p2);
}

bool segment_triangle_intersect(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                const Eigen::Vector3d& p, const Eigen::Vector3d& q,
                                const Eigen::Vector3d& r) {
    const Eigen::Vector3d n = (q - p).cross(r - p);
    const double da = n.dot(a - p), db = n.dot(b - p);
    if ((da > 0 && db > 0) || (da < 0 && db < 0)) return false;
    if (da == 0 && db == 0) return seg_tri_coplanar(a, b, p, q, r, n);
    const double t = da / (da - db);
    const Eigen::Vector3d x = a + t * (b - a);
    const double s1 = n.dot((q - p).cross(x - p));
    const double s2 = n.dot((r - q).cross(x - q));
    const double s3 = n.dot((p - r).cross(x - r));
    return s1 >= 0 && s2 >= 0 && s3 >= 0;
}

}  // namespace

bool triangles_intersect(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1,
                         const Eigen::Vector3d& r1, const Eigen::Vector3d& p2,
                         const Eigen::Vector3d& q2, const Eigen::Vector3d& r2) {
    return segment_triangle_intersect(p1, q1, p2, q2, r2) ||
           segment_triangle_intersect(q1, r1, p2, q2, r2) ||
           segment_triangle_intersect(r1, p1, p2, q2, r2) ||
           segment_triangle_intersect(p2, q2, p1, q1, r1) ||
           segment_triangle_intersect(q2, r2, p1, q1, r1) ||
           segment_triangle_intersect(r2, p2, p1, q1, r1);
}

std::vector<std::pair<int, int>> check_injectivity(const DeformationState& state,
                                                   const TriMesh& mesh,
                                                   const DofLayout& layout) {
    const int nt = mesh.num_triangles();
    std::vector<std::array<Eigen::Vector3d, 3>> pos(nt);
    std::vector<std::array<int, 3>> slots(nt);
    std::vector<Eigen::AlignedBox3d> box(nt);
    for (int t = 0; t < nt; ++t) {
        for (int i = 0; i < 3; ++i) {
            slots[t][i] = layout.slot[mesh.triangles[t][i]];
            pos[t][i] = state.position(slots[t][i]);
            box[t].extend(pos[t][i]);
        }
    }
    auto share_slot = [&](int s, int t) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (slots[s][i] == slots[t][j]) return true;
        return false;
    };
    std::vector<std::pair<int, int>> hits;
    for (int s = 0; s < nt; ++s)
        for (int t = s + 1; t < nt; ++t) {
            if (!box[s].intersects(box[t]) || share_slot(s, t)) continue;
            if (triangles_intersect(pos[s][0], pos[s][1], pos[s][2], pos[t][0], pos[t][1],
                                    pos[t][2]))
                hits.emplace_back(s, t);
        }
    return hits;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

std::vector<double> iso_violation_field(const DeformationState& state,
                                        const DofLayout& layout) {
    std::vector<double> out(layout.n_slots, 0.0);
    for (int s = 0; s < layout.n_slots; ++s) {
        const auto g = state.gradient(s);
        const Eigen::Matrix2d e = g.transpose() * g - Eigen::Matrix2d::Identity();
        out[s] = e.cwiseAbs().maxCoeff();
    }
    return out;
}

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

}  // namespace

void write_vtu(const std::string& path, const TriMesh& mesh, const DofLayout& layout,
               const DeformationState& state, const std::vector<double>& tp_density,
               const std::vector<Eigen::Vector3d>& f_tp,
               const std::vector<double>& iso_violation) {
    std::ofstream out = open_out(path);
    const int nv = mesh.num_vertices(), nt = mesh.num_triangles();
    out << "<?xml version=\"1.0\"?>\n"
        << "<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n"
        << "<UnstructuredGrid>\n"
        << "<Piece NumberOfPoints=\"" << nv << "\" NumberOfCells=\"" << nt << "\">\n";
    out << "<Points>\n<DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n";
    for (int v = 0; v < nv; ++v) {
        const Eigen::Vector3d p = state.position(layout.slot[v]);
        out << fmt17(p[0]) << ' ' << fmt17(p[1]) << ' ' << fmt17(p[2]) << '\n';
    }
    out << "</DataArray>\n</Points>\n<Cells>\n"
        << "<DataArray type=\"Int32\" Name=\"connectivity\" format=\"ascii\">\n";
    for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    out << "</DataArray>\n<DataArray type=\"Int32\" Name=\"offsets\" format=\"ascii\">\n";
    for (int t = 1; t <= nt; ++t) out << 3 * t << '\n';
    out << "</DataArray>\n<DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n";
    for (int t = 0; t < nt; ++t) out << 5 << '\n';
    out << "</DataArray>\n</Cells>\n<PointData>\n";
    out << "<DataArray type=\"Float64\" Name=\"tp_density\" format=\"ascii\">\n";
    for (int v = 0; v < nv; ++v) out << fmt17(tp_density[layout.slot[v]]) << '\n';
    out << "</DataArray>\n"
        << "<DataArray type=\"Float64\" Name=\"f_tp\" NumberOfComponents=\"3\" "
           "format=\"ascii\">\n";
    for (int v = 0; v < nv; ++v) {
        const auto& f = f_tp[layout.slot[v]];
        out << fmt17(f[0]) << ' ' << fmt17(f[1]) << ' ' << fmt17(f[2]) << '\n';
    }
    out << "</DataArray>\n"
        << "<DataArray type=\"Float64\" Name=\"iso_violation\" format=\"ascii\">\n";
    for (int v = 0; v < nv; ++v) out << fmt17(iso_violation[layout.slot[v]]) << '\n';
    out << "</DataArray>\n</PointData>\n</Piece>\n</UnstructuredGrid>\n</VTKFile>\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_csv(const std::string& path, const std::vector<IterationRecord>& log) {
    std::ofstream out = open_out(path);
    out << "iter,E_h,E_bend,TP_h,delta_iso,dt_norm,wall_ms\n";
    for (const auto& r : log)
        out << r.k << ',' << fmt17(r.energy) << ',' << fmt17(r.bending) << ','
            << fmt17(r.tp) << ',' << fmt17(r.delta_iso) << ',' << fmt17(r.dt_norm) << ','
            << fmt17(r.wall_ms) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<IterationRecord> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<IterationRecord> log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        double f[7];
        for (int i = 0; i < 7; ++i) {
            if (!std::getline(ss, tok, ',')) throw std::runtime_error("bad csv row: " + path);
            f[i] = std::stod(tok);
        }
        IterationRecord r;
        r.k = static_cast<int>(f[0]);
        r.energy = f[1];
        r.bending = f[2];
        r.tp = f[3];
        r.delta_iso = f[4];
        r.dt_norm = f[5];
        r.wall_ms = f[6];
        log.push_back(r);
    }
    return log;
}

RunArtifacts write_outputs(const Scenario& scn, const ScenarioSystem& sys,
                           const FlowResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string base = out_dir + "/" + scn.name;

    RunArtifacts art;
    art.csv_path = base + "_log.csv";
    write_csv(art.csv_path, result.log);
    if (!result.relax_log.empty()) write_csv(base + "_relax.csv", result.relax_log);

    const TpAssembly tp = assemble_tp(result.state, sys.quad, scn.tp.q, false);
    std::vector<double> density(tp.density.data(), tp.density.data() + tp.density.size());
    const std::string vtu = base + "_final.vtu";
    write_vtu(vtu, scn.mesh(), scn.layout, result.state, density,
              tp_force_field(result.state, sys.quad),
              iso_violation_field(result.state, scn.layout));
    art.vtu_paths.push_back(vtu);

    if (!result.log.empty()) {
        const auto& last = result.log.back();
        art.final_energy = last.energy;
        art.final_tp = last.tp;
        art.final_delta_iso = last.delta_iso;
    }
    art.iterations = result.iterations;
    art.converged = result.converged;
    art.injective = check_injectivity(result.state, scn.mesh(), scn.layout).empty();
    return art;
}

double scenario_eoc(const std::string& name, int base_level, const ScenarioOverrides& ov) {
    // Red refinement of a halved-squares mesh reproduces halved squares at
    // half pitch, so the per-level scenario meshes are geometric copies of
    // the hierarchy levels; solutions are transferred by coordinate lookup.
    const Recipe r = recipe_for(name);
    const RefinementHierarchy hier =
        build_hierarchy(r.mesher(std::pow(2.0, -base_level)), 3);

    std::array<std::vector<Eigen::Vector3d>, 3> nodal;
    for (int j = 0; j < 3; ++j) {
        const Scenario scn = build_scenario(name, base_level + j, ov);
        const ScenarioSystem sys = build_system(scn);
        const FlowResult res = run_scenario(scn, sys);
        if (!res.abort_reason.empty())
            throw std::runtime_error("eoc run aborted: " + res.abort_reason);

        const double scale = std::pow(2.0, base_level + j + 1);
        std::map<std::pair<long, long>, int> by_coord;
        for (int v = 0; v < scn.mesh().num_vertices(); ++v) {
            const auto& z = scn.mesh().vertices[v];
            by_coord[{std::lround(z[0] * scale), std::lround(z[1] * scale)}] = v;
        }
        const TriMesh& level_mesh = hier.levels[j];
        nodal[j].resize(level_mesh.num_vertices());
        for (int v = 0; v < level_mesh.num_vertices(); ++v) {
            const auto& z = level_mesh.vertices[v];
            const auto it =
                by_coord.find({std::lround(z[0] * scale), std::lround(z[1] * scale)});
            if (it == by_coord.end())
                throw std::runtime_error("eoc: hierarchy/scenario mesh mismatch");
            nodal[j][v] = res.state.position(scn.layout.slot[it->second]);
        }
    }
    return eoc(hier, 0, nodal[0], nodal[1], nodal[2]);
}

// ---------------------------------------------------------------------------
// Gradient audit
// ---------------------------------------------------------------------------

GradientCheckReport run_gradient_check(unsigned seed, int directions, double tol) {
    TriMesh mesh = build_halved_squares(0, 1, 0, 1, 0.5);
    DofLayout layout = build_layout(mesh, {});
    DiscreteGradientMap gmap = build_gradient_map(mesh);

    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unif(-0.05, 0.05);

    DeformationState state;
    state.dofs.resize(layout.n_full_dofs());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const auto& z = mesh.vertices[v];
        set_node(state.dofs, layout, v, {z[0], z[1], 0.3 * std::sin(z[0] + z[1])},
                 identity_frame());
    }
    for (int i = 0; i < state.dofs.size(); ++i) state.dofs[i] += unif(rng);

    const TpQuadrature quad = make_full_quadrature(mesh, layout, exclusion_table(mesh));
    const int q = 5;
    const double eps = 1e-5;

    auto directional = [&](const std::function<double(const DeformationState&)>& energy,
                           const Eigen::VectorXd& grad) {
        double worst = 0;
        std::normal_distribution<double> gauss;
        for (int d = 0; d < directions; ++d) {
            Eigen::VectorXd dir(state.dofs.size());
            for (int i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
            dir.normalize();
            DeformationState plus = state, minus = state;
            plus.dofs += eps * dir;
            minus.dofs -= eps * dir;
            const double fd = (energy(plus) - energy(minus)) / (2 * eps);
            const double gd = grad.dot(dir);
            worst = std::max(worst, std::abs(fd - gd) / std::max(1e-12, std::abs(gd)));
        }
        return worst;
    };

    GradientCheckReport rep;
    const TpAssembly tp = assemble_tp(state, quad, q, true);
    rep.tp_max_rel = directional(
        [&](const DeformationState& s) { return assemble_tp(s, quad, q, false).energy; },
        tp.gradient);
    rep.cross_max_rel = directional(
        [&](const DeformationState& s) { return bilayer_cross_term(s, mesh, layout, gmap); },
        bilayer_cross_variation(state, mesh, layout, gmap));
    rep.pass = rep.tp_max_rel <= tol && rep.cross_max_rel <= tol;
    return rep;
}

}  // namespace plateflow
