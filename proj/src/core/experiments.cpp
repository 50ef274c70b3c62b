#include "core/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "core/rng.hpp"

namespace ddtau {

using nlohmann::json;

namespace {

cplx parse_cplx(const json& j) {
  if (j.is_array()) return cplx(j.at(0).get<double>(), j.at(1).get<double>());
  return cplx(j.at("re").get<double>(), j.at("im").get<double>());
}

Mat2 parse_mat2(const json& j) {
  Mat2 N;
  if (j.is_array() && j.size() == 4 && j.at(0).is_number()) {
    N << j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
        j.at(3).get<double>();
  } else {
    N << j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>(),
        j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>();
  }
  return N;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  auto get = [&](const char* key, auto def) {
    using T = decltype(def);
    return j.contains(key) ? j.at(key).get<T>() : def;
  };
  c.experiment = get("experiment", std::string());
  if (j.contains("punctures"))
    for (const auto& p : j.at("punctures")) c.punctures.push_back(parse_cplx(p));
  if (j.contains("nilpotents"))
    for (const auto& p : j.at("nilpotents")) c.nilpotents.push_back(parse_mat2(p));
  if (j.contains("deltas"))
    c.deltas = j.at("deltas").get<std::vector<double>>();
  c.box_multiplier = get("box_multiplier", 8.0);
  c.box_doubling = get("box_doubling", true);
  c.samples = get("samples", static_cast<long>(10000));
  c.seed = get("seed", static_cast<uint64_t>(20260808ULL));
  c.threads = get("threads", 1);
  c.eps = get("eps", 1e-3);
  c.rtol = get("rtol", 1e-10);
  if (j.contains("heights"))
    c.heights = j.at("heights").get<std::vector<double>>();
  if (j.contains("separations"))
    c.separations = j.at("separations").get<std::vector<double>>();
  c.cluster_size = get("cluster_size", 1);
  if (j.contains("radii")) c.radii = j.at("radii").get<std::vector<double>>();
  c.grid_cols = get("grid_cols", 0);
  c.grid_rows = get("grid_rows", 0);
  if (j.contains("faces"))
    for (const auto& f : j.at("faces"))
      c.faces.emplace_back(f.at(0).get<int>(), f.at(1).get<int>());
  c.paths = get("paths", static_cast<long>(2000));
  c.sle_step = get("sle_step", 1e-3);
  c.sle_horizon = get("sle_horizon", 0.03);
  c.sle_rmin = get("sle_rmin", -1.0);
  c.cases = get("cases", 20);
  c.out_dir = get("out_dir", std::string("out"));
  c.format = get("format", std::string("csv"));

  require(c.punctures.size() == c.nilpotents.size(),
          "config: punctures/nilpotents mismatch");
  for (const auto& p : c.punctures)
    require(p.imag() > 0.0, "config: punctures must lie in the upper half-plane");
  for (size_t i = 0; i + 1 < c.deltas.size(); ++i)
    require(c.deltas[i] > c.deltas[i + 1],
            "config: delta list must be strictly decreasing");
  if (c.threads <= 0)
    c.threads = std::max(1u, std::thread::hardware_concurrency());

  // keep punctures ordered by real part so state indices match config order
  std::vector<size_t> order(c.punctures.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return c.punctures[a].real() < c.punctures[b].real();
  });
  std::vector<cplx> ps;
  std::vector<Mat2> ns;
  for (size_t i : order) {
    ps.push_back(c.punctures[i]);
    ns.push_back(c.nilpotents[i]);
  }
  c.punctures = ps;
  c.nilpotents = ns;
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["punctures"] = json::array();
  for (const auto& p : c.punctures) j["punctures"].push_back({p.real(), p.imag()});
  j["nilpotents"] = json::array();
  for (const auto& N : c.nilpotents)
    j["nilpotents"].push_back({N(0, 0), N(0, 1), N(1, 0), N(1, 1)});
  j["deltas"] = c.deltas;
  j["box_multiplier"] = c.box_multiplier;
  j["box_doubling"] = c.box_doubling;
  j["samples"] = c.samples;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["eps"] = c.eps;
  j["rtol"] = c.rtol;
  j["heights"] = c.heights;
  j["separations"] = c.separations;
  j["cluster_size"] = c.cluster_size;
  j["radii"] = c.radii;
  j["grid_cols"] = c.grid_cols;
  j["grid_rows"] = c.grid_rows;
  j["faces"] = json::array();
  for (auto [x, y] : c.faces) j["faces"].push_back({x, y});
  j["paths"] = c.paths;
  j["sle_step"] = c.sle_step;
  j["sle_horizon"] = c.sle_horizon;
  j["sle_rmin"] = c.sle_rmin;
  j["cases"] = c.cases;
  j["out_dir"] = c.out_dir;
  j["format"] = c.format;
  return j.dump(2);
}

BoxSpec plan_box(const std::vector<cplx>& punctures, double delta,
                 double multiplier) {
  require(!punctures.empty(), "plan_box: need punctures");
  require(delta > 0.0 && multiplier > 0.0, "plan_box: bad delta/multiplier");
  double scale = 0.0;
  for (const auto& p : punctures) scale = std::max(scale, std::abs(p));
  for (size_t i = 0; i < punctures.size(); ++i)
    for (size_t j = i + 1; j < punctures.size(); ++j)
      scale = std::max(scale, std::abs(punctures[i] - punctures[j]));
  double side = multiplier * scale;

  BoxSpec b;
  b.delta = delta;
  int cols = 2 * std::max(1, static_cast<int>(std::ceil(side / (2.0 * delta))));
  int rows = cols;
  b.m = cols / 2;
  b.n = rows / 2;
  double re_lo = punctures.front().real(), re_hi = re_lo;
  for (const auto& p : punctures) {
    re_lo = std::min(re_lo, p.real());
    re_hi = std::max(re_hi, p.real());
  }
  double x_mid = 0.5 * (re_lo + re_hi);
  b.x_offset = x_mid - delta * (cols + 1) / 2.0;

  for (const auto& p : punctures) {
    int fx = static_cast<int>(std::lround((p.real() - b.x_offset) / delta - 1.5));
    int fy = static_cast<int>(std::lround(p.imag() / delta - 1.5));
    if (fx < 1 || fx > cols - 3 || fy < 0 || fy > rows - 4)
      throw invalid_argument_error(
          "plan_box: puncture too close to the box edge; increase the "
          "multiplier or refine the mesh");
    for (auto [ox, oy] : b.faces)
      if (ox == fx)
        throw collision_error(
            "plan_box: two punctures snap to the same column; supply "
            "explicit cuts");
    b.faces.emplace_back(fx, fy);
    cplx snapped(b.x_offset + delta * (fx + 1.5), delta * (fy + 1.5));
    b.snapped.push_back(snapped);
    b.max_snap = std::max(b.max_snap, std::abs(snapped - p));
  }
  return b;
}

BoxRun det_ratio_on_box(const std::vector<cplx>& punctures,
                        const std::vector<Mat2>& Ns, double delta,
                        double multiplier, bool want_log_det) {
  BoxRun r;
  r.box = plan_box(punctures, delta, multiplier);
  LatticeDomain dom = build_domain(r.box.m, r.box.n, delta);
  std::vector<CutPath> cuts;
  for (auto [fx, fy] : r.box.faces) cuts.push_back(build_cut(dom, fx, fy));
  Representation rep = make_representation(dom, std::move(cuts), Ns);
  TwistedOperator op = assemble(dom, std::move(rep));
  r.det_ratio = op.det_ratio(&r.info);
  if (want_log_det) r.log_det_K = op.factor()->log_abs_det();
  r.info.log_det_K = r.log_det_K;
  return r;
}

namespace {

SchlesingerOptions schlesinger_options(const ExperimentConfig& c) {
  SchlesingerOptions o;
  o.rtol = c.rtol;
  o.atol = std::min(1e-12, c.rtol * 0.01);
  return o;
}

}  // namespace

RunResult run_convergence(const ExperimentConfig& c) {
  RunResult r;
  r.name = "converge";
  require(!c.punctures.empty(), "converge: need punctures");
  require(!c.deltas.empty(), "converge: need a delta list");
  r.table.columns = {"delta", "cols",   "rows",        "snap_dist",
                     "det_ratio", "log_det_ratio", "log_tau", "abs_gap",
                     "cond",  "log_det_ratio_box2", "box_shift", "box_sound"};
  auto sopt = schlesinger_options(c);

  std::vector<double> gaps;
  bool all_sound = true;
  bool snap_ok = true;
  double richardson = 0.0;
  nlohmann::json records = nlohmann::json::array();
  for (size_t di = 0; di < c.deltas.size(); ++di) {
    double delta = c.deltas[di];
    BoxRun base = det_ratio_on_box(c.punctures, c.nilpotents, delta,
                                   c.box_multiplier);
    snap_ok = snap_ok &&
              base.box.max_snap <= delta / std::sqrt(2.0) + 1e-12;
    {
      nlohmann::json rec = {{"m", base.box.m},
                            {"n", base.box.n},
                            {"delta", delta},
                            {"det_ratio", base.det_ratio},
                            {"cond", base.info.cond_estimate},
                            {"log_det_K", base.log_det_K},
                            {"punctures", nlohmann::json::array()},
                            {"N", nlohmann::json::array()}};
      for (auto [fx, fy] : base.box.faces) rec["punctures"].push_back({fx, fy});
      for (const auto& N : c.nilpotents)
        rec["N"].push_back({N(0, 0), N(0, 1), N(1, 0), N(1, 1)});
      records.push_back(rec);
    }
    ConservationStats cons;
    SchlesingerState st =
        solve_to(base.box.snapped, c.nilpotents, c.eps, sopt, &cons);
    double lt = log_tau(st);
    double ld = std::log(base.det_ratio);
    double gap = std::abs(ld - lt);
    gaps.push_back(gap);

    double ld2 = 0.0, shift = 0.0;
    bool sound = true;
    if (c.box_doubling) {
      BoxRun dbl = det_ratio_on_box(c.punctures, c.nilpotents, delta,
                                    2.0 * c.box_multiplier, false);
      ld2 = std::log(dbl.det_ratio);
      shift = std::abs(ld2 - ld);
      sound = shift < std::max(0.1 * gap, 1e-10);
      all_sound = all_sound && sound;
    }
    if (di == 0) {
      SchlesingerState st2 =
          solve_to(base.box.snapped, c.nilpotents, 0.5 * c.eps, sopt, nullptr);
      richardson = std::abs(log_tau(st2) - lt);
    }
    r.table.add_row({delta, static_cast<double>(2 * base.box.m),
                     static_cast<double>(2 * base.box.n), base.box.max_snap,
                     base.det_ratio, ld, lt, gap, base.info.cond_estimate, ld2,
                     shift, sound ? 1.0 : 0.0});
  }

  bool decreasing = true;
  for (size_t i = 0; i + 1 < gaps.size(); ++i)
    decreasing = decreasing && (gaps[i + 1] < gaps[i] || gaps[i + 1] <= 1e-9);
  bool final_ok = gaps.back() <= 1e-2;
  // the box-sensitivity comparison is a reported flag: the finite-box tail is
  // mesh-independent, so it eventually exceeds any fraction of a vanishing
  // mesh gap no matter the box size
  r.pass = decreasing && final_ok && snap_ok && richardson < 1e-5;
  r.summary = {{"gaps", gaps},
               {"strictly_decreasing", decreasing},
               {"final_gap", gaps.back()},
               {"final_gap_target", 1e-2},
               {"box_sound_flag", all_sound},
               {"snap_sound", snap_ok},
               {"eps_richardson", richardson},
               {"records", records},
               {"pass", r.pass}};
  Series s;
  s.name = "abs_gap";
  for (size_t i = 0; i < gaps.size(); ++i) s.points.emplace_back(c.deltas[i], gaps[i]);
  r.plot = {s};
  r.plot_x = "delta";
  r.plot_y = "|log det - log tau|";
  r.plot_log_x = r.plot_log_y = true;
  return r;
}

RunResult run_variation_check(const ExperimentConfig& c) {
  RunResult r;
  r.name = "variation";
  require(!c.punctures.empty(), "variation: need punctures");
  require(!c.deltas.empty(), "variation: need a delta list");
  r.table.columns = {"delta",         "dre",   "dim", "centered",
                     "dlog_discrete", "dlog_continuum", "ratio", "dev"};
  auto sopt = schlesinger_options(c);

  // A single-face step carries a lattice artifact on top of the smooth
  // variation: the mirror contribution alternates sign along the cut (it
  // cancels only over displacements of even parity). One-sided steps are
  // reported; the convergence assertion uses the centered combination of the
  // two opposite steps, which cancels the staggered term.
  std::vector<double> max_devs;
  for (double delta : c.deltas) {
    BoxSpec box = plan_box(c.punctures, delta, c.box_multiplier);
    LatticeDomain dom = build_domain(box.m, box.n, delta);
    auto factor = factorize(dom);
    std::vector<CutPath> cuts;
    for (auto [fx, fy] : box.faces) cuts.push_back(build_cut(dom, fx, fy));
    TwistedOperator base_op =
        assemble(dom, make_representation(dom, cuts, c.nilpotents), factor);
    double base = base_op.det_ratio();

    SchlesingerState st = solve_to(box.snapped, c.nilpotents, c.eps, sopt);
    cplx T = variation_prediction(st, 0);

    auto shifted_logdet = [&](int dx, int dy, bool& ok) {
      int fx = box.faces[0].first + dx;
      int fy = box.faces[0].second + dy;
      ok = dom.face_in_range(fx, fy);
      for (size_t j = 1; j < box.faces.size() && ok; ++j)
        if (box.faces[j].first == fx) ok = false;  // would cross another cut
      if (!ok) return 0.0;
      auto cuts2 = cuts;
      cuts2[0] = build_cut(dom, fx, fy);
      return std::log(
          assemble(dom, make_representation(dom, cuts2, c.nilpotents), factor)
              .det_ratio());
    };

    double max_dev = 0.0;
    const int axes[2][2] = {{1, 0}, {0, 1}};
    for (auto& ax : axes) {
      bool okp = false, okm = false;
      double lp = shifted_logdet(ax[0], ax[1], okp);
      double lm = shifted_logdet(-ax[0], -ax[1], okm);
      cplx dl(delta * ax[0], delta * ax[1]);
      double cont = 2.0 * std::real(dl * T);
      if (okp) {
        double disc = lp - std::log(base);
        r.table.add_row({delta, dl.real(), dl.imag(), 0.0, disc, cont,
                         cont != 0 ? disc / cont : 1.0,
                         cont != 0 ? std::abs(disc / cont - 1.0) : 0.0});
      }
      if (okm) {
        double disc = lm - std::log(base);
        r.table.add_row({delta, -dl.real(), -dl.imag(), 0.0, disc, -cont,
                         cont != 0 ? -disc / cont : 1.0,
                         cont != 0 ? std::abs(-disc / cont - 1.0) : 0.0});
      }
      if (okp && okm && cont != 0.0) {
        double disc = 0.5 * (lp - lm);
        double ratio = disc / cont;
        double dev = std::abs(ratio - 1.0);
        max_dev = std::max(max_dev, dev);
        r.table.add_row({delta, dl.real(), dl.imag(), 1.0, disc, cont, ratio,
                         dev});
      }
    }
    max_devs.push_back(max_dev);
  }
  bool decreasing = true;
  for (size_t i = 0; i + 1 < max_devs.size(); ++i)
    decreasing = decreasing && max_devs[i + 1] < max_devs[i];
  bool trivial = true;
  for (const auto& N : c.nilpotents)
    if (N.cwiseAbs().maxCoeff() > 0.0) trivial = false;
  r.pass = trivial ? true : decreasing;
  r.summary = {{"max_dev_per_delta", max_devs},
               {"decreasing", decreasing},
               {"pass", r.pass}};
  Series s;
  s.name = "|ratio-1|";
  for (size_t i = 0; i < max_devs.size(); ++i)
    s.points.emplace_back(c.deltas[i], max_devs[i]);
  r.plot = {s};
  r.plot_x = "delta";
  r.plot_y = "max |discrete/continuum - 1|";
  r.plot_log_x = r.plot_log_y = true;
  return r;
}

RunResult run_boundary_sweep(const ExperimentConfig& c) {
  RunResult r;
  r.name = "boundary";
  require(!c.punctures.empty(), "boundary: need punctures");
  require(!c.deltas.empty(), "boundary: need a mesh");
  std::vector<double> heights =
      c.heights.empty() ? std::vector<double>{0.8, 0.4, 0.2, 0.1} : c.heights;
  for (size_t i = 0; i + 1 < heights.size(); ++i)
    require(heights[i] > heights[i + 1], "boundary: heights must decrease");
  double delta = c.deltas.front();
  r.table.columns = {"height", "det_ratio", "abs_log_det_ratio", "cond"};

  std::vector<double> values;
  for (double h : heights) {
    if (h < 2.0 * delta)
      throw invalid_argument_error(
          "boundary: height below 2*delta (puncture would leave the first "
          "face row)");
    std::vector<cplx> targets;
    for (const auto& p : c.punctures) targets.push_back(cplx(p.real(), h));
    BoxRun run = det_ratio_on_box(targets, c.nilpotents, delta,
                                  c.box_multiplier);
    double v = std::abs(std::log(run.det_ratio));
    values.push_back(v);
    r.table.add_row({h, run.det_ratio, v, run.info.cond_estimate});
  }
  bool decreasing = true;
  for (size_t i = 0; i + 1 < values.size(); ++i)
    decreasing = decreasing && values[i + 1] < values[i];
  bool trivial = true;
  for (const auto& N : c.nilpotents)
    if (N.cwiseAbs().maxCoeff() > 0.0) trivial = false;
  r.pass = trivial ? true : decreasing;
  r.summary = {{"heights", heights},
               {"abs_log_det_ratio", values},
               {"monotone_decreasing", decreasing},
               {"pass", r.pass}};
  Series s;
  s.name = "|log det_ratio|";
  for (size_t i = 0; i < values.size(); ++i)
    s.points.emplace_back(heights[i], values[i]);
  r.plot = {s};
  r.plot_x = "puncture height";
  r.plot_y = "|log det_ratio|";
  return r;
}

RunResult run_pinch(const ExperimentConfig& c) {
  RunResult r;
  r.name = "pinch";
  const int n = static_cast<int>(c.punctures.size());
  require(n >= 2, "pinch: need at least two punctures");
  require(c.cluster_size >= 1 && c.cluster_size < n,
          "pinch: cluster_size must split the punctures");
  std::vector<double> seps =
      c.separations.empty() ? std::vector<double>{10, 20, 40} : c.separations;
  for (size_t i = 0; i + 1 < seps.size(); ++i)
    require(seps[i] < seps[i + 1], "pinch: separations must increase");
  auto sopt = schlesinger_options(c);

  std::vector<cplx> a(c.punctures.begin(), c.punctures.begin() + c.cluster_size);
  std::vector<cplx> b(c.punctures.begin() + c.cluster_size, c.punctures.end());
  std::vector<Mat2> na(c.nilpotents.begin(), c.nilpotents.begin() + c.cluster_size);
  std::vector<Mat2> nb(c.nilpotents.begin() + c.cluster_size, c.nilpotents.end());
  double lt_a = log_tau(solve_to(a, na, c.eps, sopt));
  double lt_b = log_tau(solve_to(b, nb, c.eps, sopt));

  r.table.columns = {"separation", "log_tau_joint", "log_tau_clusters", "err",
                     "C_fit"};
  std::vector<double> errs, cs;
  for (double M : seps) {
    std::vector<cplx> joint;
    std::vector<Mat2> njoint;
    for (size_t i = 0; i < a.size(); ++i) {
      joint.push_back(a[i] - 0.5 * M);
      njoint.push_back(na[i]);
    }
    for (size_t i = 0; i < b.size(); ++i) {
      joint.push_back(b[i] + 0.5 * M);
      njoint.push_back(nb[i]);
    }
    double lt = log_tau(solve_to(joint, njoint, c.eps, sopt));
    double err = std::abs(lt - lt_a - lt_b);
    errs.push_back(err);
    cs.push_back(err * M);
    r.table.add_row({M, lt, lt_a + lt_b, err, err * M});
  }
  bool decreasing = true;
  for (size_t i = 0; i + 1 < errs.size(); ++i)
    decreasing = decreasing && errs[i + 1] < errs[i];
  // C/M fit: every point within a factor 2 of the best single C, i.e. the
  // spread of err*M stays under 4. For mirror-symmetric representations the
  // measured decay is ~M^-2 (each cluster separately conserves its total
  // residue in the decoupling limit, cancelling the 1/M coefficient), so the
  // spread sits at ~4 x (1 + corrections); the flag reports the facts.
  double cmax = *std::max_element(cs.begin(), cs.end());
  double cmin = *std::min_element(cs.begin(), cs.end());
  double spread = cmin > 0.0 ? cmax / cmin : 0.0;
  bool c_fit = cmin > 0.0 && spread <= 4.0;
  r.pass = decreasing && c_fit;
  r.summary = {{"errs", errs},
               {"C_values", cs},
               {"decreasing", decreasing},
               {"C_spread", spread},
               {"C_fit_within_factor_2", c_fit},
               {"log_tau_cluster_a", lt_a},
               {"log_tau_cluster_b", lt_b},
               {"pass", r.pass}};
  Series s;
  s.name = "pinch error";
  for (size_t i = 0; i < errs.size(); ++i) s.points.emplace_back(seps[i], errs[i]);
  r.plot = {s};
  r.plot_x = "separation";
  r.plot_y = "|log tau(joint) - sum log tau|";
  r.plot_log_x = r.plot_log_y = true;
  return r;
}

RunResult run_tau(const ExperimentConfig& c) {
  RunResult r;
  r.name = "tau";
  require(!c.punctures.empty(), "tau: need punctures");
  auto sopt = schlesinger_options(c);
  ConservationStats cons;
  SchlesingerState st = solve_to(c.punctures, c.nilpotents, c.eps, sopt, &cons);
  double lt = st.log_tau.real();
  double im = std::abs(st.log_tau.imag());

  auto [lhs, rhs] = robin_check(st, 0, 1e-4, sopt);
  double robin_dev = std::abs(lhs - rhs);
  SchlesingerState st2 = solve_to(c.punctures, c.nilpotents, 0.5 * c.eps, sopt);
  double rich = std::abs(st2.log_tau.real() - lt);

  r.table.columns = {"config_id",        "log_tau",   "im_log_tau",
                     "conservation_max", "robin_dev", "eps_richardson"};
  r.table.add_row({0.0, lt, im, cons.worst(), robin_dev, rich});
  r.pass = cons.worst() <= 1e-8 && im <= 1e-7 && robin_dev <= 1e-5;
  r.summary = {{"log_tau", lt},
               {"im_log_tau", im},
               {"conservation_max", cons.worst()},
               {"robin_dev", robin_dev},
               {"eps_richardson", rich},
               {"state", json::parse(state_to_json(st))},
               {"pass", r.pass}};
  return r;
}

namespace {

struct ExplicitGrid {
  LatticeDomain dom;
  std::vector<std::pair<int, int>> faces;
};

ExplicitGrid explicit_grid(const ExperimentConfig& c, int def_cols,
                           int def_rows) {
  int cols = c.grid_cols > 0 ? c.grid_cols : def_cols;
  int rows = c.grid_rows > 0 ? c.grid_rows : def_rows;
  require(cols % 2 == 0 && rows % 2 == 0, "grid dims must be even");
  ExplicitGrid g{build_domain(cols / 2, rows / 2, 1.0), c.faces};
  return g;
}

}  // namespace

RunResult run_mc(const ExperimentConfig& c) {
  RunResult r;
  r.name = "mc";
  ExplicitGrid g = explicit_grid(c, 16, 16);
  require(g.faces.size() == c.nilpotents.size(),
          "mc: need one explicit face per generator");
  std::vector<CutPath> cuts;
  for (auto [fx, fy] : g.faces) cuts.push_back(build_cut(g.dom, fx, fy));
  auto factor = factorize(g.dom);
  TwistedOperator op = assemble(
      g.dom, make_representation(g.dom, std::move(cuts), c.nilpotents), factor);
  double det = op.det_ratio();
  McResult mc = mc_correlator(op, c.samples, c.seed, c.threads);

  double dev = std::abs(mc.mean - det);
  bool pass = dev <= 3.0 * mc.std_error || dev <= 1e-14;

  // edge-probability partition check at every white vertex
  double max_row_dev = 0.0;
  for (int wi = 0; wi < factor->size(); ++wi) {
    int w = g.dom.whites[wi];
    double sum = 0.0;
    int x = g.dom.vx(w), y = g.dom.vy(w);
    const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (auto& d : dirs) {
      int nx = x + d[0], ny = y + d[1];
      if (nx < 0 || nx >= g.dom.cols() || ny < 0 || ny >= g.dom.rows()) continue;
      sum += edge_probability(*factor, g.dom.edge_between(w, g.dom.vid(nx, ny)));
    }
    max_row_dev = std::max(max_row_dev, std::abs(sum - 1.0));
  }
  pass = pass && max_row_dev <= 1e-9;

  r.table.columns = {"sample_index", "product_value"};
  for (long i = 0; i < static_cast<long>(mc.values.size()); ++i)
    r.table.add_row({static_cast<double>(i), mc.values[i]});
  r.pass = pass;
  r.summary = {{"mean", mc.mean},
               {"std_error", mc.std_error},
               {"det_ratio", det},
               {"abs_dev", dev},
               {"dev_over_se", mc.std_error > 0 ? dev / mc.std_error : 0.0},
               {"edge_prob_row_sum_max_dev", max_row_dev},
               {"samples", mc.samples},
               {"pass", r.pass}};
  return r;
}

RunResult run_tail(const ExperimentConfig& c) {
  RunResult r;
  r.name = "tail";
  ExplicitGrid g = explicit_grid(c, 64, 64);
  std::vector<double> radii =
      c.radii.empty() ? std::vector<double>{4, 8, 16} : c.radii;
  // marked near-boundary edge: horizontal, bottom row, middle of the box
  int x0 = g.dom.cols() / 2 - 1;
  int edge = g.dom.edge_between(g.dom.vid(x0, 0), g.dom.vid(x0 + 1, 0));
  auto factor = factorize(g.dom);
  auto tail = loop_diameter_tail(*factor, edge, radii, c.samples, c.seed,
                                 c.threads);

  r.table.columns = {"R", "p_hat", "stderr", "n_pos"};
  std::vector<std::pair<double, double>> loglog;
  for (const auto& t : tail) {
    r.table.add_row({t.radius, t.p_hat, t.std_error,
                     static_cast<double>(t.n_pos)});
    if (t.p_hat > 0.0)
      loglog.emplace_back(std::log(t.radius), std::log(t.p_hat));
  }
  double slope = loglog.size() >= 2 ? fit_slope(loglog) : 0.0;
  bool in_window = slope >= -1.6 && slope <= -0.4;
  r.pass = true;  // qualitative check: reported, never failing
  r.summary = {{"slope", slope},
               {"window", {-1.6, -0.4}},
               {"slope_in_window", in_window},
               {"n_pos", tail.empty() ? 0 : tail.front().n_pos},
               {"samples", c.samples},
               {"pass", r.pass}};
  Series s;
  s.name = "P(diam >= R)";
  for (const auto& t : tail)
    if (t.p_hat > 0.0) s.points.emplace_back(t.radius, t.p_hat);
  r.plot = {s};
  r.plot_x = "R";
  r.plot_y = "tail probability";
  r.plot_log_x = r.plot_log_y = true;
  return r;
}

RunResult run_sle_drift(const ExperimentConfig& c) {
  RunResult r;
  r.name = "sle-drift";
  require(!c.punctures.empty(), "sle-drift: need punctures");
  auto sopt = schlesinger_options(c);
  SchlesingerState ref = solve_to(c.punctures, c.nilpotents, c.eps, sopt);

  SleOptions opt;
  opt.step = c.sle_step;
  opt.horizon = c.sle_horizon;
  opt.r_min = c.sle_rmin;
  MartingaleResult res =
      martingale_statistic(ref, c.paths, c.seed, opt, c.threads);

  r.table.columns = {"path_id",  "stop_time", "M0_00_re", "M0_00_im",
                     "M0_01_re", "M0_01_im",  "M0_10_re", "M0_10_im",
                     "M0_11_re", "M0_11_im",  "MT_00_re", "MT_00_im",
                     "MT_01_re", "MT_01_im",  "MT_10_re", "MT_10_im",
                     "MT_11_re", "MT_11_im"};
  for (const auto& row : res.rows) {
    std::vector<double> v(row.begin(), row.end());
    r.table.rows.push_back(v);
  }
  double worst = res.worst_sigma();
  r.pass = worst <= 3.0 && res.discard_fraction < 0.01 &&
           res.max_trace_sq <= 1e-8;
  json means = json::array(), ses = json::array();
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      means.push_back({res.mean_re(i, k), res.mean_im(i, k)});
      ses.push_back({res.se_re(i, k), res.se_im(i, k)});
    }
  r.summary = {{"mean_dM", means},
               {"se_dM", ses},
               {"worst_sigma", worst},
               {"paths_used", res.paths_used},
               {"discarded", res.discarded},
               {"discard_fraction", res.discard_fraction},
               {"max_det_dev", res.max_det_dev},
               {"max_trace_sq", res.max_trace_sq},
               {"conservation_max", res.conservation.worst()},
               {"pass", r.pass}};
  return r;
}

namespace {

Mat2 random_nilpotent(Rng& rng, double max_norm) {
  double theta = rng.uniform() * 6.283185307179586;
  double a = std::cos(theta), b = std::sin(theta);
  Mat2 N;
  N << a * b, -a * a, b * b, -a * b;  // rank-1 traceless, zero determinant
  double norm = N.norm();
  double s = (0.1 + 0.9 * rng.uniform()) * max_norm;
  return Mat2((s / norm) * N);
}

}  // namespace

RunResult run_oracle_suite(const ExperimentConfig& c) {
  RunResult r;
  r.name = "oracle";
  const int cases = std::max(1, c.cases);
  r.table.columns = {"case",     "m",        "n",        "punctures",
                     "det_ratio", "oracle",  "abs_dev",  "conj_dev",
                     "gauge_dev", "single_dev"};
  Rng rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  static const int sizes[][2] = {{1, 1}, {1, 2}, {2, 1}, {1, 3},
                                 {3, 1}, {2, 2}, {2, 3}, {3, 2}};
  bool all_ok = true;
  std::string first_failure;

  for (int case_id = 0; case_id < cases; ++case_id) {
    auto [m, n] = sizes[rng.below(8)];
    LatticeDomain dom = build_domain(m, n, 1.0);
    int fc = dom.face_cols(), fr = dom.face_rows();
    int max_p = std::min(3, fc);
    int np = 1 + static_cast<int>(rng.below(max_p));

    std::vector<int> cols(fc);
    std::iota(cols.begin(), cols.end(), 0);
    for (int i = fc - 1; i > 0; --i)
      std::swap(cols[i], cols[rng.below(i + 1)]);
    std::vector<CutPath> cuts;
    std::vector<Mat2> Ns;
    std::vector<std::pair<int, int>> faces;
    for (int p = 0; p < np; ++p) {
      int fx = cols[p];
      int fy = static_cast<int>(rng.below(fr));
      faces.emplace_back(fx, fy);
      cuts.push_back(build_cut(dom, fx, fy));
      Ns.push_back(random_nilpotent(rng, 0.5));
    }

    auto factor = factorize(dom);
    TwistedOperator op =
        assemble(dom, make_representation(dom, cuts, Ns), factor);
    double det = op.det_ratio();
    double oracle = oracle_correlator(dom, make_representation(dom, cuts, Ns));
    double dev = std::abs(det - oracle);

    // conjugation invariance with an exactly unimodular G
    double half_a = (rng.below(2) ? 0.5 : -0.5);
    double half_b = (rng.below(2) ? 1.0 : -1.0) * 0.5;
    Mat2 G;
    G << 1.0, half_a, half_b, 1.0 + half_a * half_b;
    Mat2 Ginv;
    Ginv << 1.0 + half_a * half_b, -half_a, -half_b, 1.0;
    std::vector<Mat2> Ns_conj;
    for (const auto& N : Ns) Ns_conj.push_back(G * N * Ginv);
    double det_conj =
        assemble(dom, make_representation(dom, cuts, Ns_conj), factor)
            .det_ratio();
    double conj_dev = std::abs(det_conj - det) / std::max(1.0, std::abs(det));

    // gauge invariance: detour the first cut around one face when possible
    double gauge_dev = 0.0;
    {
      auto [fx, fy] = faces[0];
      int side = 0;
      for (int s : {1, -1}) {
        int nx = fx + s;
        if (nx < 0 || nx >= fc) continue;
        bool clash = false;
        for (int p = 1; p < np; ++p)
          if (faces[p].first == nx) clash = true;
        if (!clash) {
          side = s;
          break;
        }
      }
      if (side != 0 && fy >= 1) {
        std::vector<std::pair<int, int>> detour;
        for (int y = fy; y >= 1; --y) detour.emplace_back(fx, y);
        detour.emplace_back(fx + side, 1);
        detour.emplace_back(fx + side, 0);
        detour.emplace_back(fx, 0);
        auto cuts2 = cuts;
        cuts2[0] = deform_cut(dom, cuts[0], detour);
        double det_def =
            assemble(dom, make_representation(dom, cuts2, Ns), factor)
                .det_ratio();
        gauge_dev = std::abs(det_def - det) / std::max(1.0, std::abs(det));
      }
    }

    double single_dev = 0.0;
    if (np == 1) single_dev = std::abs(det - 1.0);

    bool ok = dev <= 1e-9 && conj_dev <= 1e-12 && gauge_dev <= 1e-12 &&
              single_dev <= 1e-12;
    if (!ok && first_failure.empty()) {
      json dump = {{"case", case_id},       {"m", m},
                   {"n", n},                {"faces", json::array()},
                   {"dev", dev},            {"conj_dev", conj_dev},
                   {"gauge_dev", gauge_dev}};
      for (auto [fx, fy] : faces) dump["faces"].push_back({fx, fy});
      first_failure = dump.dump(2);
    }
    all_ok = all_ok && ok;
    r.table.add_row({static_cast<double>(case_id), static_cast<double>(m),
                     static_cast<double>(n), static_cast<double>(np), det,
                     oracle, dev, conj_dev, gauge_dev, single_dev});
  }

  // trivial representation on a fixed small grid must give exactly 1
  {
    LatticeDomain dom = build_domain(2, 2, 1.0);
    std::vector<CutPath> cuts{build_cut(dom, 1, 1)};
    std::vector<Mat2> Ns{Mat2::Zero()};
    double det = assemble(dom, make_representation(dom, cuts, Ns)).det_ratio();
    all_ok = all_ok && det == 1.0;
    r.summary["trivial_exact"] = (det == 1.0);
  }

  r.pass = all_ok;
  r.summary["cases"] = cases;
  r.summary["pass"] = all_ok;
  if (!first_failure.empty()) {
    r.summary["first_failure"] = json::parse(first_failure);
    write_text_file(c.out_dir + "/oracle_failure.json", first_failure);
  }
  return r;
}

RunResult run_experiment(const ExperimentConfig& c) {
  if (c.experiment == "oracle") return run_oracle_suite(c);
  if (c.experiment == "converge") return run_convergence(c);
  if (c.experiment == "variation") return run_variation_check(c);
  if (c.experiment == "boundary") return run_boundary_sweep(c);
  if (c.experiment == "pinch") return run_pinch(c);
  if (c.experiment == "tau") return run_tau(c);
  if (c.experiment == "mc") return run_mc(c);
  if (c.experiment == "tail") return run_tail(c);
  if (c.experiment == "sle-drift") return run_sle_drift(c);
  throw invalid_argument_error("unknown experiment: " + c.experiment);
}

void emit_report(const RunResult& r, const ExperimentConfig& c) {
  write_text_file(c.out_dir + "/" + r.name + ".csv", to_csv(r.table));
  bool want_json = c.format == "json" || c.format == "svg";
  if (want_json) {
    json j = r.summary;
    j["experiment"] = r.name;
    write_text_file(c.out_dir + "/" + r.name + ".json", j.dump(2));
  }
  if (c.format == "svg" && !r.plot.empty()) {
    write_text_file(
        c.out_dir + "/" + r.name + ".svg",
        svg_line_plot(r.name, r.plot_x, r.plot_y, r.plot, r.plot_log_x,
                      r.plot_log_y));
  }
}

}  // namespace ddtau
