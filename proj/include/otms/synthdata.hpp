#ifndef OTMS_SYNTHDATA_HPP_
#define OTMS_SYNTHDATA_HPP_

// Synthetic letter scenes observed through rigidly moved strokes (the known
// deformation F_i), a bounded local shuffle (the unknown permutation P_i) and
// a Gaussian measurement matrix:  y_i = A_i P_i F_i x + n_i.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "otms/core.hpp"

namespace otms {

enum class Letter { E, T };

inline std::string_view to_string(Letter l) { return l == Letter::E ? "E" : "T"; }

inline Letter parse_letter(std::string_view s) {
  if (s == "E" || s == "e") return Letter::E;
  if (s == "T" || s == "t") return Letter::T;
  throw Error(ErrorCode::Parse, "unknown letter '" + std::string(s) + "'");
}

struct SceneSpec {
  Letter letter = Letter::E;
  Grid grid{16, 32};
  double level = 1.0;
  // Random offset of the letter from the grid centre, per axis.
  int jitter = 1;
};

struct Scene {
  Signal signal;
  // Strokes; disjoint, union is the support.
  std::vector<SupportSet> components;
  SupportSet support;
};

struct PerturbSpec {
  // Max grid distance a pixel moves under the unknown permutation.
  int displacement_radius = 2;
  // Per-axis range of the rigid stroke shifts that make up F_i.
  int max_shift = 1;
  // Fraction of support pixels that try to swap with a neighbour.
  double swap_fraction = 0.5;
  int max_attempts = 200;
};

namespace detail {

struct Rect {
  int row, col, height, width;
};

// Stroke rectangles relative to the letter's top-left corner (2-px strokes).
inline std::vector<Rect> letter_strokes(Letter letter) {
  if (letter == Letter::E)
    return {{0, 0, 10, 2}, {0, 2, 2, 6}, {4, 2, 2, 5}, {8, 2, 2, 6}};
  return {{0, 0, 2, 10}, {2, 4, 8, 2}};
}

inline std::pair<int, int> letter_extent(Letter letter) {
  int h = 0, w = 0;
  for (const Rect& r : letter_strokes(letter)) {
    h = std::max(h, r.row + r.height);
    w = std::max(w, r.col + r.width);
  }
  return {h, w};
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace detail

inline Scene make_scene(const SceneSpec& spec, Rng& rng) {
  require(spec.level > 0, ErrorCode::InvalidArgument, "stroke level must be positive");
  require(spec.jitter >= 0, ErrorCode::InvalidArgument, "jitter must be >= 0");
  const auto [h, w] = detail::letter_extent(spec.letter);
  const Grid& g = spec.grid;
  require(h + 2 * spec.jitter <= g.rows() && w + 2 * spec.jitter <= g.cols(),
          ErrorCode::LetterDoesNotFit, "letter does not fit in the grid");
  const int top = (g.rows() - h) / 2 + detail::uniform_int(rng, -spec.jitter, spec.jitter);
  const int left = (g.cols() - w) / 2 + detail::uniform_int(rng, -spec.jitter, spec.jitter);

  Scene scene;
  Vector x = Vector::Zero(g.size());
  std::vector<Index> all;
  for (const auto& r : detail::letter_strokes(spec.letter)) {
    std::vector<Index> idx;
    for (int dr = 0; dr < r.height; ++dr)
      for (int dc = 0; dc < r.width; ++dc) idx.push_back(g.index({top + r.row + dr, left + r.col + dc}));
    for (Index n : idx) x[n] = spec.level;
    all.insert(all.end(), idx.begin(), idx.end());
    scene.components.emplace_back(std::move(idx));
  }
  scene.signal = Signal(g, std::move(x));
  scene.support = SupportSet(std::move(all));
  return scene;
}

// Permutation moving each stroke rigidly by a sampled shift. Background
// pixels uncovered by the move take the background values displaced by it,
// in index order.
inline Permutation deformation_from_shifts(const Grid& g, const std::vector<SupportSet>& components,
                                           const std::vector<Coord>& shifts) {
  require(components.size() == shifts.size(), ErrorCode::DimensionMismatch, "one shift per component");
  const Index n = g.size();
  std::vector<Index> source(std::size_t(n), -1);
  std::vector<char> used(std::size_t(n), 0);
  for (std::size_t c = 0; c < components.size(); ++c) {
    for (Index s : components[c].indices()) {
      const Coord p = g.position(s);
      const Coord q{p.row + shifts[c].row, p.col + shifts[c].col};
      require(g.contains(q), ErrorCode::NoCollisionFreePlacement, "shift leaves the grid");
      const Index m = g.index(q);
      require(source[std::size_t(m)] < 0, ErrorCode::NoCollisionFreePlacement, "shifted strokes collide");
      source[std::size_t(m)] = s;
      used[std::size_t(s)] = 1;
    }
  }
  std::vector<Index> free_sources, free_targets;
  for (Index m = 0; m < n; ++m) {
    if (source[std::size_t(m)] < 0 && !used[std::size_t(m)]) {
      source[std::size_t(m)] = m;
      used[std::size_t(m)] = 1;
    }
  }
  for (Index m = 0; m < n; ++m) {
    if (source[std::size_t(m)] < 0) free_targets.push_back(m);
    if (!used[std::size_t(m)]) free_sources.push_back(m);
  }
  for (std::size_t k = 0; k < free_targets.size(); ++k)
    source[std::size_t(free_targets[k])] = free_sources[k];
  return Permutation(std::move(source));
}

inline DeformationOp make_deformation(const Scene& scene, const PerturbSpec& perturb, Rng& rng) {
  require(perturb.max_shift >= 0, ErrorCode::InvalidArgument, "shift range must be >= 0");
  const Grid& g = scene.signal.grid();
  for (int attempt = 0; attempt < perturb.max_attempts; ++attempt) {
    std::vector<Coord> shifts;
    for (std::size_t c = 0; c < scene.components.size(); ++c)
      shifts.push_back({detail::uniform_int(rng, -perturb.max_shift, perturb.max_shift),
                        detail::uniform_int(rng, -perturb.max_shift, perturb.max_shift)});
    try {
      return DeformationOp(deformation_from_shifts(g, scene.components, shifts));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoCollisionFreePlacement) throw;
    }
  }
  throw Error(ErrorCode::NoCollisionFreePlacement, "no collision-free stroke placement found");
}

// Disjoint random transpositions between support pixels and partners within
// `radius`; every pixel moves at most once, so no pixel travels farther than
// `radius`.
inline Permutation make_local_permutation(const Grid& g, const SupportSet& support, int radius,
                                          Rng& rng, double swap_fraction = 0.5) {
  require(radius >= 0, ErrorCode::InvalidArgument, "radius must be >= 0");
  require(swap_fraction >= 0 && swap_fraction <= 1, ErrorCode::InvalidArgument,
          "swap fraction must lie in [0, 1]");
  support.check_within(g.size());
  std::vector<Index> source(std::size_t(g.size()));
  std::iota(source.begin(), source.end(), Index{0});
  if (radius == 0) return Permutation(std::move(source));

  std::vector<Index> order = support.indices();
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> moved(std::size_t(g.size()), 0);
  std::bernoulli_distribution attempt(swap_fraction);
  const double r2 = double(radius) * radius;
  for (Index n : order) {
    if (!attempt(rng) || moved[std::size_t(n)]) continue;
    const Coord p = g.position(n);
    std::vector<Index> partners;
    for (int dr = -radius; dr <= radius; ++dr)
      for (int dc = -radius; dc <= radius; ++dc) {
        const Coord q{p.row + dr, p.col + dc};
        if ((dr == 0 && dc == 0) || dr * dr + dc * dc > r2 || !g.contains(q)) continue;
        if (!moved[std::size_t(g.index(q))]) partners.push_back(g.index(q));
      }
    if (partners.empty()) continue;
    const Index m = partners[std::size_t(detail::uniform_int(rng, 0, int(partners.size()) - 1))];
    std::swap(source[std::size_t(n)], source[std::size_t(m)]);
    moved[std::size_t(n)] = moved[std::size_t(m)] = 1;
  }
  return Permutation(std::move(source));
}

inline double max_displacement(const Permutation& p, const Grid& g) {
  double worst = 0;
  for (Index m = 0; m < p.size(); ++m) worst = std::max(worst, g.squared_distance(m, p[m]));
  return std::sqrt(worst);
}

inline Index measurement_count(double rate, Index n) {
  return Index(std::floor(rate * double(n) + 0.5));
}

struct Measurement {
  Vector y;
  LinearMeasurementOp A;
  Vector noise;
};

// A has i.i.d. N(0, 1/N) entries; noise hits the target SNR exactly.
inline Measurement make_measurement(const Vector& x_i_true, double rate, double snr_db, Rng& rng) {
  require(rate > 0 && rate <= 1, ErrorCode::InvalidArgument, "rate must lie in (0, 1]");
  const Index n = x_i_true.size();
  const Index m = measurement_count(rate, n);
  require(m >= 1, ErrorCode::ZeroRows, "rate yields zero measurements");
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(n)));
  Matrix a(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = normal(rng);
  const Vector clean = a * x_i_true;
  Vector noise = noise_for_snr(clean, snr_db, rng);
  Vector y = clean + noise;
  return {std::move(y), LinearMeasurementOp(std::move(a)), std::move(noise)};
}

struct Instance {
  SceneSpec scene;
  PerturbSpec perturb;
  Signal x_true;
  std::vector<SupportSet> components;
  SupportSet support;
  std::vector<ViewData> views;
  std::vector<Permutation> p_true;
  std::vector<Signal> x_i_true;
  std::vector<Vector> noise;
  std::uint64_t seed = 0;
  double rate = 1.0;
  double snr_db = kNoiseless;

  const Grid& grid() const noexcept { return x_true.grid(); }
};

inline Instance build_instance(const SceneSpec& scene_spec, const PerturbSpec& perturb, int views,
                               double rate, double snr_db, std::uint64_t seed) {
  require(views >= 1, ErrorCode::InvalidArgument, "at least one view is required");
  Instance inst;
  inst.scene = scene_spec;
  inst.perturb = perturb;
  inst.seed = seed;
  inst.rate = rate;
  inst.snr_db = snr_db;

  Rng scene_rng(mix_seed({seed, 1}));
  Scene scene = make_scene(scene_spec, scene_rng);
  inst.x_true = scene.signal;
  inst.components = scene.components;
  inst.support = scene.support;
  const Grid& g = scene_spec.grid;
  for (int i = 0; i < views; ++i) {
    const auto vi = std::uint64_t(i);
    Rng deform_rng(mix_seed({seed, 2, vi}));
    Rng perm_rng(mix_seed({seed, 3, vi}));
    Rng meas_rng(mix_seed({seed, 4, vi}));
    DeformationOp f = make_deformation(scene, perturb, deform_rng);
    const Vector fx = f.apply(inst.x_true.values());
    Permutation p = make_local_permutation(g, SupportSet::of(fx), perturb.displacement_radius,
                                           perm_rng, perturb.swap_fraction);
    Signal xi(g, p.apply(fx));
    Measurement meas = make_measurement(xi.values(), rate, snr_db, meas_rng);
    inst.views.emplace_back(std::move(meas.y), std::move(meas.A), std::move(f));
    inst.p_true.push_back(std::move(p));
    inst.x_i_true.push_back(std::move(xi));
    inst.noise.push_back(std::move(meas.noise));
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Instance files

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline ordered_json vector_json(const Vector& v) {
  return ordered_json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector json_vector(const ordered_json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), Index(v.size()));
}

inline ordered_json matrix_json(const Matrix& m) {
  ordered_json data = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return ordered_json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix json_matrix(const ordered_json& j) {
  const Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  require(Index(data.size()) == rows * cols, ErrorCode::Parse, "matrix data has the wrong length");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[std::size_t(i * cols + j2)].get<double>();
  return m;
}

inline ordered_json permutation_json(const Permutation& p) { return ordered_json(p.source()); }

inline ordered_json snr_json(double snr_db) {
  return is_noiseless(snr_db) ? ordered_json("inf") : ordered_json(snr_db);
}

inline double json_snr(const ordered_json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    require(s == "inf" || s == "noiseless", ErrorCode::Parse, "snr_db must be a number or \"inf\"");
    return kNoiseless;
  }
  return j.get<double>();
}

inline ordered_json deformation_json(const DeformationOp& f) {
  return f.is_permutation() ? permutation_json(f.permutation()) : matrix_json(f.matrix());
}

inline DeformationOp json_deformation(const ordered_json& j) {
  if (j.is_array()) return DeformationOp(Permutation(j.get<std::vector<Index>>()));
  return DeformationOp(json_matrix(j));
}

}  // namespace detail

inline nlohmann::ordered_json instance_to_json(const Instance& inst) {
  using detail::ordered_json;
  ordered_json views = ordered_json::array();
  for (std::size_t i = 0; i < inst.views.size(); ++i) {
    views.push_back(ordered_json{
        {"F", detail::deformation_json(inst.views[i].F)},
        {"P", detail::permutation_json(inst.p_true[i])},
        {"x_true", detail::vector_json(inst.x_i_true[i].values())},
        {"A", detail::matrix_json(inst.views[i].A.matrix())},
        {"y", detail::vector_json(inst.views[i].y)},
        {"noise", detail::vector_json(inst.noise[i])},
    });
  }
  ordered_json components = ordered_json::array();
  for (const auto& c : inst.components) components.push_back(c.indices());
  return ordered_json{
      {"format", "otms-instance"},
      {"version", 1},
      {"grid", {{"rows", inst.grid().rows()}, {"cols", inst.grid().cols()}}},
      {"letter", std::string(to_string(inst.scene.letter))},
      {"level", inst.scene.level},
      {"jitter", inst.scene.jitter},
      {"displacement_radius", inst.perturb.displacement_radius},
      {"max_shift", inst.perturb.max_shift},
      {"swap_fraction", inst.perturb.swap_fraction},
      {"seed", inst.seed},
      {"rate", inst.rate},
      {"snr_db", detail::snr_json(inst.snr_db)},
      {"x_true", detail::vector_json(inst.x_true.values())},
      {"support", inst.support.indices()},
      {"components", std::move(components)},
      {"views", std::move(views)},
  };
}

inline Instance instance_from_json(const nlohmann::ordered_json& j) {
  try {
    require(j.at("format").get<std::string>() == "otms-instance", ErrorCode::Parse,
            "not an instance document");
    Instance inst;
    const Grid g(j.at("grid").at("rows").get<int>(), j.at("grid").at("cols").get<int>());
    inst.scene.letter = parse_letter(j.at("letter").get<std::string>());
    inst.scene.grid = g;
    inst.scene.level = j.at("level").get<double>();
    inst.scene.jitter = j.at("jitter").get<int>();
    inst.perturb.displacement_radius = j.at("displacement_radius").get<int>();
    inst.perturb.max_shift = j.at("max_shift").get<int>();
    inst.perturb.swap_fraction = j.at("swap_fraction").get<double>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.rate = j.at("rate").get<double>();
    inst.snr_db = detail::json_snr(j.at("snr_db"));
    inst.x_true = Signal(g, detail::json_vector(j.at("x_true")));
    inst.support = SupportSet(j.at("support").get<std::vector<Index>>());
    for (const auto& c : j.at("components")) inst.components.emplace_back(c.get<std::vector<Index>>());
    for (const auto& v : j.at("views")) {
      inst.views.emplace_back(detail::json_vector(v.at("y")),
                              LinearMeasurementOp(detail::json_matrix(v.at("A"))),
                              detail::json_deformation(v.at("F")));
      inst.p_true.emplace_back(v.at("P").get<std::vector<Index>>());
      inst.x_i_true.emplace_back(g, detail::json_vector(v.at("x_true")));
      inst.noise.push_back(detail::json_vector(v.at("noise")));
    }
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed instance: ") + e.what());
  }
}

inline void save_instance(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << instance_to_json(inst).dump(1) << '\n';
  require(bool(out), ErrorCode::Io, "failed writing '" + path + "'");
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::Io, "cannot open '" + path + "'");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
  return instance_from_json(j);
}

}  // namespace otms

#endif  // OTMS_SYNTHDATA_HPP_
