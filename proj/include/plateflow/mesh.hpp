#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <utility>
#include <vector>

namespace plateflow {

// A side (edge) of the triangulation. Tangent points from endpoint a to
// endpoint b; the normal is the tangent rotated by +90 degrees.
struct Side {
    int a = -1, b = -1;
    Eigen::Vector2d midpoint{0, 0};
    Eigen::Vector2d tangent{0, 0};
    Eigen::Vector2d normal{0, 0};
    double length = 0;
    bool boundary = false;
};

// Identification of two vertices across a periodic seam. With flip=true the
// pairing is (0,x2) ~ (L,1-x2) and the partner's d2 gradient dof changes sign.
struct GluePair {
    int slave = -1;
    int master = -1;
    bool flip = false;
};

struct TriMesh {
    std::vector<Eigen::Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;  // CCW vertex indices
    std::vector<Side> sides;
    std::vector<std::array<int, 3>> tri_sides;  // side index per local edge (01,12,20)
    std::vector<double> area;                   // per triangle
    std::vector<bool> boundary_vertex;
    std::vector<GluePair> gluing;
    double hhat = 0;   // grid square side length for structured meshes
    double h_min = 0;  // min over triangles of the longest triangle edge

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
    double total_area() const;

    // Computes sides, areas, h_min and boundary tags from vertices/triangles.
    void finalize();
};

// Structured mesh of halved squares on (x0,x1) x (y0,y1). The range lengths
// must be integer multiples of hhat. diag_bltr selects the default
// bottom-left-to-top-right diagonal.
TriMesh build_halved_squares(double x0, double x1, double y0, double y1, double hhat,
                             bool diag_bltr = true);

// O-shaped domain (-5,5)x(-2,2) \ [-4,4]x[-1,1] meshed with halved squares.
TriMesh build_oshape(double hhat);

// Adds periodic vertex identifications between the x=x_left and x=x_right
// boundary columns. With flip, (x_left, y) pairs with (x_right, y0+y1-y).
void glue_periodic_x(TriMesh& mesh, double x_left, double x_right, double y0, double y1,
                     bool flip);

// Red refinement: each triangle is split into 4 congruent children via edge
// midpoints. Coarse vertices keep their indices; midpoint vertices are
// appended. Returns the refined mesh and the parent triangle of each child.
std::pair<TriMesh, std::vector<int>> red_refine(const TriMesh& mesh);

struct RefinementHierarchy {
    std::vector<TriMesh> levels;                           // coarsest first
    std::vector<std::vector<int>> parent;                  // per level>0: fine tri -> coarse tri
    std::vector<std::vector<std::array<int, 2>>> parent_edge;  // per level>0: new vertex -> coarse endpoints

    int num_levels() const { return static_cast<int>(levels.size()); }
    const TriMesh& finest() const { return levels.back(); }
};

// Builds n_levels meshes by repeated red refinement of `coarse`.
RefinementHierarchy build_hierarchy(TriMesh coarse, int n_levels);

// Per-vertex admissible triangle sets for the tangent-point inner integral.
// A triangle is excluded iff its distance to the vertex is strictly below
// h_min/2; tangency is kept so that on halved-square meshes the admissible
// set is exactly the set of triangles not containing the vertex.
struct ExclusionTable {
    std::vector<std::vector<int>> excluded;  // per vertex, sorted triangle indices
    double radius = 0;                       // h_min/2

    bool is_admissible(int vertex, int tri) const;
    std::vector<int> admissible(int vertex, int num_triangles) const;
};

ExclusionTable exclusion_table(const TriMesh& mesh);

// Exact 2D point-to-triangle distance (0 if the point lies in the triangle).
double point_triangle_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b, const Eigen::Vector2d& c);

}  // namespace plateflow
