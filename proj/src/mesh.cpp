#include "plateflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace plateflow {

double TriMesh::total_area() const {
    double s = 0;
    for (double a : area) s += a;
    return s;
}

void TriMesh::finalize() {
    const int nt = num_triangles();
    area.assign(nt, 0);
    tri_sides.assign(nt, {-1, -1, -1});
    sides.clear();

    std::map<std::pair<int, int>, int> side_of;
    std::vector<int> side_count;

    for (int t = 0; t < nt; ++t) {
        const auto& tri = triangles[t];
        const Eigen::Vector2d& p0 = vertices[tri[0]];
        const Eigen::Vector2d& p1 = vertices[tri[1]];
        const Eigen::Vector2d& p2 = vertices[tri[2]];
        const double a2 = (p1.x() - p0.x()) * (p2.y() - p0.y()) -
                          (p2.x() - p0.x()) * (p1.y() - p0.y());
        if (a2 <= 0) throw std::invalid_argument("triangle with non-positive area (not CCW)");
        area[t] = 0.5 * a2;

        for (int e = 0; e < 3; ++e) {
            int u = tri[e], v = tri[(e + 1) % 3];
            auto key = std::minmax(u, v);
            auto it = side_of.find(key);
            int si;
            if (it == side_of.end()) {
                si = static_cast<int>(sides.size());
                side_of.emplace(key, si);
                Side s;
                s.a = key.first;
                s.b = key.second;
                const Eigen::Vector2d pa = vertices[s.a], pb = vertices[s.b];
                s.midpoint = 0.5 * (pa + pb);
                s.length = (pb - pa).norm();
                s.tangent = (pb - pa) / s.length;
                s.normal = Eigen::Vector2d(-s.tangent.y(), s.tangent.x());
                sides.push_back(s);
                side_count.push_back(0);
            } else {
                si = it->second;
            }
            side_count[si]++;
            tri_sides[t][e] = si;
        }
    }

    boundary_vertex.assign(vertices.size(), false);
    for (size_t si = 0; si < sides.size(); ++si) {
        sides[si].boundary = (side_count[si] == 1);
        if (sides[si].boundary) {
            boundary_vertex[sides[si].a] = true;
            boundary_vertex[sides[si].b] = true;
        }
    }

    h_min = std::numeric_limits<double>::infinity();
    for (int t = 0; t < nt; ++t) {
        double longest = 0;
        for (int e = 0; e < 3; ++e) longest = std::max(longest, sides[tri_sides[t][e]].length);
        h_min = std::min(h_min, longest);
    }
}

namespace {

int checked_cell_count(double lo, double hi, double hhat, const char* axis) {
    if (hhat <= 0) throw std::invalid_argument("hhat must be positive");
    const double n_real = (hi - lo) / hhat;
    const int n = static_cast<int>(std::llround(n_real));
    if (n < 1 || std::abs(n_real - n) > 1e-9 * std::max(1.0, std::abs(n_real)))
        throw std::invalid_argument(std::string("range along ") + axis +
                                    " is not an integer multiple of hhat");
    return n;
}

}  // namespace

TriMesh build_halved_squares(double x0, double x1, double y0, double y1, double hhat,
                             bool diag_bltr) {
    const int nx = checked_cell_count(x0, x1, hhat, "x");
    const int ny = checked_cell_count(y0, y1, hhat, "y");

    TriMesh m;
    m.hhat = hhat;
    m.vertices.reserve(static_cast<size_t>(nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            m.vertices.emplace_back(x0 + i * hhat, y0 + j * hhat);

    auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int v00 = vid(i, j), v10 = vid(i + 1, j);
            const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
            if (diag_bltr) {
                m.triangles.push_back({v00, v10, v11});
                m.triangles.push_back({v00, v11, v01});
            } else {
                m.triangles.push_back({v00, v10, v01});
                m.triangles.push_back({v10, v11, v01});
            }
        }
    m.finalize();
    return m;
}

TriMesh build_oshape(double hhat) {
    const int per_unit = checked_cell_count(0.0, 1.0, hhat, "x");
    (void)per_unit;
    const int nx = checked_cell_count(-5.0, 5.0, hhat, "x");
    const int ny = checked_cell_count(-2.0, 2.0, hhat, "y");

    TriMesh m;
    m.hhat = hhat;
    // Grid vertices of the bounding rectangle; unused hole vertices are
    // dropped by compaction below.
    std::vector<int> remap(static_cast<size_t>(nx + 1) * (ny + 1), -1);
    auto gid = [nx](int i, int j) { return j * (nx + 1) + i; };

    std::vector<std::array<int, 3>> tris_grid;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double cx = -5.0 + (i + 0.5) * hhat;
            const double cy = -2.0 + (j + 0.5) * hhat;
            const bool in_hole = (cx > -4.0 && cx < 4.0 && cy > -1.0 && cy < 1.0);
            if (in_hole) continue;
            const int v00 = gid(i, j), v10 = gid(i + 1, j);
            const int v01 = gid(i, j + 1), v11 = gid(i + 1, j + 1);
            tris_grid.push_back({v00, v10, v11});
            tris_grid.push_back({v00, v11, v01});
        }

    for (auto& tri : tris_grid)
        for (int& v : tri) {
            if (remap[v] < 0) {
                remap[v] = m.num_vertices();
                const int i = v % (nx + 1), j = v / (nx + 1);
                m.vertices.emplace_back(-5.0 + i * hhat, -2.0 + j * hhat);
            }
            v = remap[v];
        }
    m.triangles = std::move(tris_grid);
    m.finalize();
    return m;
}

void glue_periodic_x(TriMesh& mesh, double x_left, double x_right, double y0, double y1,
                     bool flip) {
    const double tol = 1e-9 * std::max(1.0, std::abs(x_right - x_left));
    std::vector<int> left, right;
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        if (std::abs(mesh.vertices[v].x() - x_left) < tol) left.push_back(v);
        if (std::abs(mesh.vertices[v].x() - x_right) < tol) right.push_back(v);
    }
    if (left.size() != right.size() || left.empty())
        throw std::invalid_argument("periodic gluing: seam vertex counts do not match");

    for (int vr : right) {
        const double y = mesh.vertices[vr].y();
        const double y_target = flip ? (y0 + y1 - y) : y;
        int partner = -1;
        for (int vl : left)
            if (std::abs(mesh.vertices[vl].y() - y_target) < tol) {
                partner = vl;
                break;
            }
        if (partner < 0) throw std::invalid_argument("periodic gluing: no partner vertex");
        mesh.gluing.push_back({vr, partner, flip});
    }
}

std::pair<TriMesh, std::vector<int>> red_refine(const TriMesh& mesh) {
    TriMesh fine;
    fine.hhat = mesh.hhat / 2;
    fine.vertices = mesh.vertices;

    std::map<std::pair<int, int>, int> midpoint_of;
    auto midpoint = [&](int u, int v) {
        auto key = std::minmax(u, v);
        auto it = midpoint_of.find(key);
        if (it != midpoint_of.end()) return it->second;
        const int id = fine.num_vertices();
        fine.vertices.push_back(0.5 * (mesh.vertices[u] + mesh.vertices[v]));
        midpoint_of.emplace(key, id);
        return id;
    };

    std::vector<int> parent;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangles[t];
        const int m01 = midpoint(tri[0], tri[1]);
        const int m12 = midpoint(tri[1], tri[2]);
        const int m20 = midpoint(tri[2], tri[0]);
        fine.triangles.push_back({tri[0], m01, m20});
        fine.triangles.push_back({m01, tri[1], m12});
        fine.triangles.push_back({m20, m12, tri[2]});
        fine.triangles.push_back({m01, m12, m20});
        for (int c = 0; c < 4; ++c) parent.push_back(t);
    }

    // Seam identifications transfer to seam edge midpoints.
    if (!mesh.gluing.empty()) {
        std::map<int, std::pair<int, bool>> master_of;
        for (const auto& g : mesh.gluing) master_of[g.slave] = {g.master, g.flip};
        fine.gluing = mesh.gluing;
        for (const auto& [key, mid] : midpoint_of) {
            auto ia = master_of.find(key.first);
            auto ib = master_of.find(key.second);
            if (ia == master_of.end() || ib == master_of.end()) continue;
            auto pkey = std::minmax(ia->second.first, ib->second.first);
            auto it = midpoint_of.find(pkey);
            if (it != midpoint_of.end())
                fine.gluing.push_back({mid, it->second, ia->second.second});
        }
    }

    fine.finalize();
    return {std::move(fine), std::move(parent)};
}

RefinementHierarchy build_hierarchy(TriMesh coarse, int n_levels) {
    if (n_levels < 1) throw std::invalid_argument("hierarchy needs at least one level");
    RefinementHierarchy h;
    h.levels.push_back(std::move(coarse));
    h.parent.emplace_back();
    h.parent_edge.emplace_back();
    for (int l = 1; l < n_levels; ++l) {
        auto [fine, parent] = red_refine(h.levels.back());
        const TriMesh& prev = h.levels.back();

        std::vector<std::array<int, 2>> pe(fine.num_vertices());
        for (int v = 0; v < prev.num_vertices(); ++v) pe[v] = {v, v};
        // Recover midpoint parents from the child triangles: child 3 of each
        // parent is the midpoint triangle (m01, m12, m20).
        for (int t = 0; t < prev.num_triangles(); ++t) {
            const auto& tri = prev.triangles[t];
            const auto& mids = fine.triangles[4 * t + 3];
            pe[mids[0]] = {tri[0], tri[1]};
            pe[mids[1]] = {tri[1], tri[2]};
            pe[mids[2]] = {tri[2], tri[0]};
        }

        h.levels.push_back(std::move(fine));
        h.parent.push_back(std::move(parent));
        h.parent_edge.push_back(std::move(pe));
    }
    return h;
}

double point_triangle_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    auto seg_dist = [&](const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
        const Eigen::Vector2d d = v - u;
        const double t = std::clamp((p - u).dot(d) / d.squaredNorm(), 0.0, 1.0);
        return (p - (u + t * d)).norm();
    };
    auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
        return u.x() * v.y() - u.y() * v.x();
    };
    const double s0 = cross(b - a, p - a);
    const double s1 = cross(c - b, p - b);
    const double s2 = cross(a - c, p - c);
    if (s0 >= 0 && s1 >= 0 && s2 >= 0) return 0.0;  // inside (CCW triangle)
    return std::min({seg_dist(a, b), seg_dist(b, c), seg_dist(c, a)});
}

bool ExclusionTable::is_admissible(int vertex, int tri) const {
    const auto& ex = excluded[vertex];
    return !std::binary_search(ex.begin(), ex.end(), tri);
}

std::vector<int> ExclusionTable::admissible(int vertex, int num_triangles) const {
    std::vector<int> out;
    out.reserve(num_triangles - excluded[vertex].size());
    for (int t = 0; t < num_triangles; ++t)
        if (is_admissible(vertex, t)) out.push_back(t);
    return out;
}

ExclusionTable exclusion_table(const TriMesh& mesh) {
    ExclusionTable tab;
    tab.radius = mesh.h_min / 2;
    tab.excluded.resize(mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const Eigen::Vector2d& p = mesh.vertices[v];
        for (int t = 0; t < mesh.num_triangles(); ++t) {
            const auto& tri = mesh.triangles[t];
            const double d = point_triangle_distance(p, mesh.vertices[tri[0]],
                                                     mesh.vertices[tri[1]],
                                                     mesh.vertices[tri[2]]);
            if (d < tab.radius) tab.excluded[v].push_back(t);
        }
    }
    return tab;
}

}  // namespace plateflow
