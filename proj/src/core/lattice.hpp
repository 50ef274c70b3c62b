#pragma once

#include <complex>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/common.hpp"

namespace ddtau {

using Mat2 = Eigen::Matrix2d;

// Finite 2m x 2n grid graph with the classical real Kasteleyn signing:
// horizontal edges +1, vertical edge {(x,y),(x,y+1)} gets (-1)^x.
// Vertex (x,y) is black iff x+y is even; embedded at delta*(x+1) + i*delta*(y+1),
// so every vertex sits at distance >= delta above and to the right of the axes.
struct LatticeDomain {
  int m = 0;  // grid has 2m vertex columns
  int n = 0;  // and 2n vertex rows
  double delta = 1.0;

  struct Edge {
    int u = 0, v = 0;     // vertex ids, u < v
    double sign = 1.0;    // Kasteleyn sign
    bool horizontal = true;
  };

  std::vector<Edge> edges;
  std::vector<int> white_index;  // per vertex: index among whites, or -1
  std::vector<int> black_index;  // per vertex: index among blacks, or -1
  std::vector<int> whites;       // white index -> vertex id
  std::vector<int> blacks;       // black index -> vertex id

  int cols() const { return 2 * m; }
  int rows() const { return 2 * n; }
  int vertex_count() const { return cols() * rows(); }
  int face_cols() const { return cols() - 1; }
  int face_rows() const { return rows() - 1; }
  int face_count() const { return face_cols() * face_rows(); }

  int vid(int x, int y) const { return x + cols() * y; }
  int vx(int id) const { return id % cols(); }
  int vy(int id) const { return id / cols(); }
  static bool black_parity(int x, int y) { return ((x + y) & 1) == 0; }
  bool is_black(int id) const { return black_parity(vx(id), vy(id)); }

  cplx embed(int x, int y) const { return {delta * (x + 1), delta * (y + 1)}; }
  cplx embed(int id) const { return embed(vx(id), vy(id)); }

  bool face_in_range(int fx, int fy) const {
    return fx >= 0 && fx < face_cols() && fy >= 0 && fy < face_rows();
  }
  cplx face_center(int fx, int fy) const {
    return {delta * (fx + 1.5), delta * (fy + 1.5)};
  }

  // edge lookup by unordered endpoint pair; -1 if absent
  int edge_between(int a, int b) const;
  const Edge& edge(int e) const { return edges[e]; }

 private:
  friend LatticeDomain build_domain(int, int, double);
  std::unordered_map<int64_t, int> edge_map_;
};

LatticeDomain build_domain(int m, int n, double delta);

// true iff every bounded face carries an odd number of -1 signs
bool validate_kasteleyn(const LatticeDomain& dom);

// Simple dual path from a puncture face to the outer face through the bottom
// boundary. `faces` lists the dual vertices visited (starting at the puncture
// face, ending at a face with fy == 0); the final crossing exits downward
// through the bottom edge of the last face. Each crossing records the crossed
// primal edge and whether its black endpoint lies on the left of the path
// direction (oriented puncture -> boundary).
struct CutPath {
  int face_x = 0, face_y = 0;
  std::vector<std::pair<int, int>> faces;
  struct Crossing {
    int edge = 0;
    bool black_left = false;
  };
  std::vector<Crossing> crossings;
};

CutPath build_cut(const LatticeDomain& dom, int face_x, int face_y);

// Replace a cut by a homotopic dual path (same puncture, simple, ending at the
// bottom). Crossings and side flags are recomputed.
CutPath deform_cut(const LatticeDomain& dom, const CutPath& cut,
                   const std::vector<std::pair<int, int>>& new_faces);

// Punctures with branch cuts and the unipotent generators Id + N_i.
struct Representation {
  std::vector<CutPath> cuts;
  std::vector<Mat2> nilpotents;

  bool trivial() const {
    for (const auto& N : nilpotents)
      if (N.cwiseAbs().maxCoeff() > 0.0) return false;
    return true;
  }
};

// Validates nilpotency of the generators and pairwise disjointness of the cut
// paths (faces and crossed edges).
Representation make_representation(const LatticeDomain& dom,
                                   std::vector<CutPath> cuts,
                                   std::vector<Mat2> nilpotents);

void check_nilpotent(const Mat2& N);

// JSON serialization of domain + cuts ({m,n,delta,punctures,cuts}); the
// inverse parser accepts exactly this schema.
std::string domain_to_json(const LatticeDomain& dom, const Representation* rep);
void domain_from_json(const std::string& text, LatticeDomain& dom_out,
                      std::vector<CutPath>& cuts_out);

}  // namespace ddtau
