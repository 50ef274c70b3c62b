#include "core/lattice.hpp"

#include <algorithm>
#include <array>
#include <set>

#include <nlohmann/json.hpp>

namespace ddtau {

int LatticeDomain::edge_between(int a, int b) const {
  if (a > b) std::swap(a, b);
  auto it = edge_map_.find(static_cast<int64_t>(a) * vertex_count() + b);
  return it == edge_map_.end() ? -1 : it->second;
}

LatticeDomain build_domain(int m, int n, double delta) {
  require(m >= 1 && n >= 1, "build_domain: m,n must be >= 1");
  require(delta > 0.0, "build_domain: delta must be positive");

  LatticeDomain d;
  d.m = m;
  d.n = n;
  d.delta = delta;
  const int C = d.cols(), R = d.rows();

  d.white_index.assign(C * R, -1);
  d.black_index.assign(C * R, -1);
  for (int y = 0; y < R; ++y)
    for (int x = 0; x < C; ++x) {
      int id = d.vid(x, y);
      if (LatticeDomain::black_parity(x, y)) {
        d.black_index[id] = static_cast<int>(d.blacks.size());
        d.blacks.push_back(id);
      } else {
        d.white_index[id] = static_cast<int>(d.whites.size());
        d.whites.push_back(id);
      }
    }

  auto push_edge = [&](int u, int v, double sign, bool horizontal) {
    if (u > v) std::swap(u, v);
    LatticeDomain::Edge e{u, v, sign, horizontal};
    d.edge_map_[static_cast<int64_t>(u) * C * R + v] =
        static_cast<int>(d.edges.size());
    d.edges.push_back(e);
  };
  for (int y = 0; y < R; ++y)
    for (int x = 0; x < C; ++x) {
      if (x + 1 < C) push_edge(d.vid(x, y), d.vid(x + 1, y), 1.0, true);
      if (y + 1 < R)
        push_edge(d.vid(x, y), d.vid(x, y + 1), (x % 2 == 0) ? 1.0 : -1.0,
                  false);
    }
  return d;
}

bool validate_kasteleyn(const LatticeDomain& d) {
  for (int fy = 0; fy < d.face_rows(); ++fy)
    for (int fx = 0; fx < d.face_cols(); ++fx) {
      int ids[4][2] = {{d.vid(fx, fy), d.vid(fx + 1, fy)},
                       {d.vid(fx, fy + 1), d.vid(fx + 1, fy + 1)},
                       {d.vid(fx, fy), d.vid(fx, fy + 1)},
                       {d.vid(fx + 1, fy), d.vid(fx + 1, fy + 1)}};
      int minus = 0;
      for (auto& uv : ids) {
        int e = d.edge_between(uv[0], uv[1]);
        if (e < 0) return false;
        if (d.edges[e].sign < 0.0) ++minus;
      }
      if (minus % 2 == 0) return false;
    }
  return true;
}

namespace {

// Crossed primal edge between two adjacent faces, plus the dual-step direction.
// For the final boundary exit pass to = {fx, -1}.
CutPath::Crossing crossing_between(const LatticeDomain& d,
                                   std::pair<int, int> from,
                                   std::pair<int, int> to) {
  auto [fx, fy] = from;
  auto [gx, gy] = to;
  int dx = gx - fx, dy = gy - fy;
  require(std::abs(dx) + std::abs(dy) == 1, "cut: dual step must be adjacent");
  int u, v;
  if (dy == -1) {  // down: bottom side of face(fx,fy)
    u = d.vid(fx, fy);
    v = d.vid(fx + 1, fy);
  } else if (dy == 1) {  // up: top side
    u = d.vid(fx, fy + 1);
    v = d.vid(fx + 1, fy + 1);
  } else if (dx == -1) {  // left side
    u = d.vid(fx, fy);
    v = d.vid(fx, fy + 1);
  } else {  // right side
    u = d.vid(fx + 1, fy);
    v = d.vid(fx + 1, fy + 1);
  }
  int e = d.edge_between(u, v);
  require(e >= 0, "cut: crossing refers to a missing edge");

  // left-of-direction test: cross(dir, p - midpoint) > 0
  const auto& ed = d.edge(e);
  cplx pu = d.embed(ed.u), pv = d.embed(ed.v);
  cplx mid = 0.5 * (pu + pv);
  cplx dir(static_cast<double>(dx), static_cast<double>(dy));
  auto cross = [](cplx a, cplx b) {
    return a.real() * b.imag() - a.imag() * b.real();
  };
  int left_vertex = cross(dir, pu - mid) > 0.0 ? ed.u : ed.v;
  return {e, d.is_black(left_vertex)};
}

CutPath make_cut_from_faces(const LatticeDomain& d,
                            std::vector<std::pair<int, int>> faces) {
  require(!faces.empty(), "cut: empty face path");
  for (auto [fx, fy] : faces)
    require(d.face_in_range(fx, fy), "cut: face out of range");
  std::set<std::pair<int, int>> seen(faces.begin(), faces.end());
  require(seen.size() == faces.size(), "cut: dual path must be simple");
  require(faces.back().second == 0, "cut: path must end at the bottom row");

  CutPath c;
  c.face_x = faces.front().first;
  c.face_y = faces.front().second;
  c.faces = std::move(faces);
  for (size_t i = 0; i + 1 < c.faces.size(); ++i)
    c.crossings.push_back(crossing_between(d, c.faces[i], c.faces[i + 1]));
  // exit through the bottom boundary
  auto last = c.faces.back();
  c.crossings.push_back(crossing_between(d, last, {last.first, -1}));

  std::set<int> edges_seen;
  for (const auto& cr : c.crossings)
    require(edges_seen.insert(cr.edge).second,
            "cut: an edge is crossed more than once");
  return c;
}

}  // namespace

CutPath build_cut(const LatticeDomain& d, int face_x, int face_y) {
  require(d.face_in_range(face_x, face_y), "build_cut: face out of range");
  std::vector<std::pair<int, int>> faces;
  for (int fy = face_y; fy >= 0; --fy) faces.emplace_back(face_x, fy);
  return make_cut_from_faces(d, std::move(faces));
}

CutPath deform_cut(const LatticeDomain& d, const CutPath& cut,
                   const std::vector<std::pair<int, int>>& new_faces) {
  require(!new_faces.empty() && new_faces.front().first == cut.face_x &&
              new_faces.front().second == cut.face_y,
          "deform_cut: path must start at the same puncture face");
  return make_cut_from_faces(d, new_faces);
}

void check_nilpotent(const Mat2& N) {
  double scale = std::max(1.0, N.cwiseAbs().maxCoeff());
  require(std::abs(N.trace()) <= 1e-12 * scale,
          "representation: generator must be traceless");
  require(std::abs(N.determinant()) <= 1e-12 * scale * scale,
          "representation: generator must have zero determinant");
}

Representation make_representation(const LatticeDomain& d,
                                   std::vector<CutPath> cuts,
                                   std::vector<Mat2> nilpotents) {
  require(cuts.size() == nilpotents.size(),
          "representation: one generator per cut");
  for (const auto& N : nilpotents) check_nilpotent(N);

  std::set<std::pair<int, int>> face_seen;
  std::set<int> edge_seen;
  for (const auto& c : cuts) {
    for (auto f : c.faces)
      require(face_seen.insert(f).second,
              "representation: cut paths must be disjoint");
    for (const auto& cr : c.crossings) {
      require(cr.edge >= 0 && cr.edge < static_cast<int>(d.edges.size()),
              "representation: cut references an edge outside the domain");
      require(edge_seen.insert(cr.edge).second,
              "representation: cuts cross a common edge");
    }
  }
  Representation r;
  r.cuts = std::move(cuts);
  r.nilpotents = std::move(nilpotents);
  return r;
}

std::string domain_to_json(const LatticeDomain& d, const Representation* rep) {
  nlohmann::json j;
  j["m"] = d.m;
  j["n"] = d.n;
  j["delta"] = d.delta;
  j["punctures"] = nlohmann::json::array();
  j["cuts"] = nlohmann::json::array();
  if (rep) {
    for (const auto& c : rep->cuts) {
      j["punctures"].push_back({{"x", c.face_x}, {"y", c.face_y}});
      nlohmann::json edges = nlohmann::json::array();
      for (const auto& cr : c.crossings) {
        const auto& e = d.edge(cr.edge);
        edges.push_back({{d.vx(e.u), d.vy(e.u)}, {d.vx(e.v), d.vy(e.v)}});
      }
      j["cuts"].push_back(edges);
    }
  }
  return j.dump(2);
}

namespace {

// The two faces separated by a primal edge; fy == -1 encodes the outer face
// below the bottom boundary.
std::array<std::pair<int, int>, 2> faces_of_edge(const LatticeDomain& d,
                                                 int e) {
  const auto& ed = d.edge(e);
  int x = d.vx(ed.u), y = d.vy(ed.u);
  if (ed.horizontal) return {{{x, y - 1}, {x, y}}};
  return {{{x - 1, y}, {x, y}}};
}

}  // namespace

void domain_from_json(const std::string& text, LatticeDomain& dom_out,
                      std::vector<CutPath>& cuts_out) {
  nlohmann::json j = nlohmann::json::parse(text);
  dom_out = build_domain(j.at("m").get<int>(), j.at("n").get<int>(),
                         j.at("delta").get<double>());
  cuts_out.clear();
  if (!j.contains("punctures")) return;
  const auto& punctures = j.at("punctures");
  const auto& cuts = j.at("cuts");
  require(punctures.size() == cuts.size(), "domain json: punctures/cuts mismatch");
  for (size_t i = 0; i < punctures.size(); ++i) {
    std::pair<int, int> cur{punctures[i].at("x").get<int>(),
                            punctures[i].at("y").get<int>()};
    std::vector<std::pair<int, int>> faces{cur};
    const auto& edge_list = cuts[i];
    require(!edge_list.empty(), "domain json: empty cut");
    for (size_t k = 0; k + 1 < edge_list.size(); ++k) {
      const auto& pair = edge_list[k];
      int u = dom_out.vid(pair[0][0].get<int>(), pair[0][1].get<int>());
      int v = dom_out.vid(pair[1][0].get<int>(), pair[1][1].get<int>());
      int e = dom_out.edge_between(u, v);
      require(e >= 0, "domain json: cut edge not in domain");
      auto adj = faces_of_edge(dom_out, e);
      require(adj[0] == cur || adj[1] == cur,
              "domain json: cut edges are not a connected dual path");
      cur = (adj[0] == cur) ? adj[1] : adj[0];
      faces.push_back(cur);
    }
    cuts_out.push_back(deform_cut(
        dom_out,
        build_cut(dom_out, faces.front().first, faces.front().second), faces));
  }
}

}  // namespace ddtau
