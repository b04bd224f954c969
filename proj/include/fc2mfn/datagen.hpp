// Deterministic synthetic InSAR building-scene generator. Scenes are flat
// ground plus rectangular buildings imaged side-looking along increasing
// columns: each building casts a layover strip of width ceil(h/tan(inc))
// on its near-range side (class 2) and a shadow strip of width
// ceil(h*tan(inc)) on its far-range side (class 0); everything else is
// ground (class 1). Layover paints over shadow. Amplitudes follow the
// class reflectivity under multi-look speckle; the interferometric phase
// carries k_z * elevation over building/layover pixels.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fc2mfn/container.hpp"
#include "fc2mfn/rng.hpp"
#include "fc2mfn/training.hpp"

namespace fc2mfn {

constexpr int kClassShadow = 0;
constexpr int kClassGround = 1;
constexpr int kClassLayover = 2;

struct Building {
  int row0 = 0, row1 = 0;  // half-open row range
  int col0 = 0, col1 = 0;  // half-open column range
  double height = 0.0;     // meters
};

struct SceneSpec {
  int h = 64, w = 64;
  std::vector<Building> buildings;
  double incidence = M_PI / 4.0;  // radians; range direction: columns increasing

  void validate() const {
    for (const Building& b : buildings) {
      if (b.row0 < 0 || b.col0 < 0 || b.row1 > h || b.col1 > w || b.row0 >= b.row1 ||
          b.col0 >= b.col1)
        throw ShapeError("scene: building out of bounds");
      if (b.height <= 0.0) throw ShapeError("scene: building height must be positive");
    }
  }
};

struct GenParams {
  int num_scenes = 44;
  int image_h = 64, image_w = 64;
  int buildings_min = 3, buildings_max = 6;
  double height_min = 4.0, height_max = 9.0;
  double refl_shadow = 0.02, refl_ground = 0.5, refl_layover = 2.0;
  int looks = 8;
  double kz = 0.3;  // keeps k_z * height inside (0, pi) for the height range
  double phase_noise = 0.1;
  double incidence = M_PI / 4.0;
  std::uint64_t seed = 1234;
  int train_count = -1;  // -1: split by the 216:96 ratio

  void validate() const {
    if (num_scenes < 1) throw ShapeError("gen: num_scenes must be >= 1");
    if (buildings_min < 1 || buildings_max < buildings_min)
      throw ShapeError("gen: invalid buildings range");
    if (height_min <= 0.0 || height_max < height_min)
      throw ShapeError("gen: invalid height range");
    if (refl_shadow <= 0.0 || refl_ground <= 0.0 || refl_layover <= 0.0)
      throw ShapeError("gen: reflectivities must be positive");
    if (looks < 1) throw ShapeError("gen: looks must be >= 1");
  }
};

inline double wrap_angle(double x) {
  double w = std::remainder(x, 2.0 * M_PI);
  if (w <= -M_PI) w = M_PI;
  return w;
}

inline int layover_width(double height, double incidence) {
  return static_cast<int>(std::ceil(height / std::tan(incidence)));
}

inline int shadow_width(double height, double incidence) {
  return static_cast<int>(std::ceil(height * std::tan(incidence)));
}

inline LabelMap render_labels(const SceneSpec& scene) {
  scene.validate();
  LabelMap m(scene.h, scene.w);
  std::fill(m.v.begin(), m.v.end(), kClassGround);
  auto paint = [&](int r0, int r1, int c0, int c1, int cls) {
    r0 = std::max(r0, 0);
    c0 = std::max(c0, 0);
    r1 = std::min(r1, scene.h);
    c1 = std::min(c1, scene.w);
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) m.v[static_cast<std::size_t>(r) * scene.w + c] = cls;
  };
  // shadow first, layover second: layover wins every overlap
  for (const Building& b : scene.buildings)
    paint(b.row0, b.row1, b.col1, b.col1 + shadow_width(b.height, scene.incidence),
          kClassShadow);
  for (const Building& b : scene.buildings)
    paint(b.row0, b.row1, b.col0 - layover_width(b.height, scene.incidence), b.col0,
          kClassLayover);
  return m;
}

// Height over footprint and layover pixels, 0 elsewhere; overlaps take the
// tallest building.
inline RTensor elevation_map(const SceneSpec& scene) {
  RTensor e(Shape{static_cast<std::size_t>(scene.h), static_cast<std::size_t>(scene.w)});
  for (const Building& b : scene.buildings) {
    const int c0 = std::max(0, b.col0 - layover_width(b.height, scene.incidence));
    for (int r = std::max(0, b.row0); r < std::min(scene.h, b.row1); ++r)
      for (int c = c0; c < std::min(scene.w, b.col1); ++c) {
        double& v = e.data[static_cast<std::size_t>(r) * scene.w + c];
        if (b.height > v) v = b.height;
      }
  }
  return e;
}

struct SarPair {
  CTensor master;  // (1,H,W)
  CTensor slave;   // (1,H,W)
  RTensor phase;   // (H,W), in (-pi, pi]
};

// master = A e^{i psi}, slave = A e^{i(psi - phi)} with per-pixel uniform
// psi, phi = wrap(kz * elevation) + noise, A = reflectivity * multi-look
// speckle. The emitted phase channel is wrap(phi), which equals
// angle(master * conj(slave)) up to floating-point rounding.
inline SarPair render_sar_pair(const SceneSpec& scene, const GenParams& params,
                               std::uint64_t seed) {
  params.validate();
  const LabelMap labels = render_labels(scene);
  const RTensor elev = elevation_map(scene);
  const std::size_t plane = static_cast<std::size_t>(scene.h) * scene.w;
  SarPair out{CTensor(Shape{1, static_cast<std::size_t>(scene.h),
                            static_cast<std::size_t>(scene.w)}),
              CTensor(Shape{1, static_cast<std::size_t>(scene.h),
                            static_cast<std::size_t>(scene.w)}),
              RTensor(Shape{static_cast<std::size_t>(scene.h),
                            static_cast<std::size_t>(scene.w)})};
  SplitMix64 g(seed);
  const double refl[3] = {params.refl_shadow, params.refl_ground, params.refl_layover};
  const double part_sigma = std::sqrt(0.5);  // unit circular complex Gaussian
  for (std::size_t i = 0; i < plane; ++i) {
    double speckle = 0.0;
    for (int l = 0; l < params.looks; ++l) {
      const double gr = g.normal() * part_sigma;
      const double gi = g.normal() * part_sigma;
      speckle += std::sqrt(gr * gr + gi * gi);
    }
    speckle /= params.looks;
    const double amp = refl[labels.v[i]] * speckle;
    const double psi = g.uniform_angle();
    double phi = wrap_angle(params.kz * elev.data[i]);
    if (params.phase_noise > 0.0) phi += g.normal() * params.phase_noise;
    phi = wrap_angle(phi);
    out.master.re[i] = amp * std::cos(psi);
    out.master.im[i] = amp * std::sin(psi);
    out.slave.re[i] = amp * std::cos(psi - phi);
    out.slave.im[i] = amp * std::sin(psi - phi);
    out.phase.data[i] = phi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation

struct ManifestEntry {
  std::string file;
  bool train = true;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  int regenerated = 0;  // scenes redrawn because a class was missing
};

inline int train_split_count(int n, int train_count_override) {
  if (train_count_override >= 0) return std::min(train_count_override, n);
  // the 216:96 ratio, rounded to nearest
  return static_cast<int>(std::floor(static_cast<double>(n) * 216.0 / 312.0 + 0.5));
}

inline SceneSpec sample_scene(const GenParams& params, SplitMix64& g) {
  SceneSpec scene;
  scene.h = params.image_h;
  scene.w = params.image_w;
  scene.incidence = params.incidence;
  const int nb = params.buildings_min +
                 static_cast<int>(g.below(params.buildings_max - params.buildings_min + 1));
  for (int b = 0; b < nb; ++b) {
    Building bd;
    const int span_r = 10 + static_cast<int>(g.below(15));
    const int span_c = 8 + static_cast<int>(g.below(11));
    bd.row0 = static_cast<int>(g.below(std::max(1, scene.h - span_r)));
    bd.col0 = static_cast<int>(g.below(std::max(1, scene.w - span_c)));
    bd.row1 = std::min(scene.h, bd.row0 + span_r);
    bd.col1 = std::min(scene.w, bd.col0 + span_c);
    bd.height = g.uniform(params.height_min, params.height_max);
    scene.buildings.push_back(bd);
  }
  return scene;
}

inline bool has_all_classes(const LabelMap& m) {
  bool seen[3] = {false, false, false};
  for (int v : m.v) seen[v] = true;
  return seen[0] && seen[1] && seen[2];
}

inline Sample generate_sample(const GenParams& params, std::uint64_t master_seed,
                              int index, int* attempts_used = nullptr) {
  const std::uint64_t sample_seed = SplitMix64::derive(master_seed, index);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 64)
      throw ShapeError("datagen: could not draw a scene with all three classes");
    const std::uint64_t attempt_seed = SplitMix64::derive(sample_seed, attempt);
    SplitMix64 g(attempt_seed);
    const SceneSpec scene = sample_scene(params, g);
    const LabelMap labels = render_labels(scene);
    if (!has_all_classes(labels)) continue;
    if (attempts_used) *attempts_used = attempt;
    SarPair pair = render_sar_pair(scene, params, SplitMix64::derive(attempt_seed, 1));
    return Sample{std::move(pair.master), std::move(pair.slave), std::move(pair.phase),
                  labels};
  }
}

inline std::string gen_params_text(const GenParams& p) {
  std::ostringstream os;
  os.precision(17);
  os << "num_scenes = " << p.num_scenes << "\n"
     << "image_h = " << p.image_h << "\n"
     << "image_w = " << p.image_w << "\n"
     << "buildings_min = " << p.buildings_min << "\n"
     << "buildings_max = " << p.buildings_max << "\n"
     << "height_min = " << p.height_min << "\n"
     << "height_max = " << p.height_max << "\n"
     << "refl_shadow = " << p.refl_shadow << "\n"
     << "refl_ground = " << p.refl_ground << "\n"
     << "refl_layover = " << p.refl_layover << "\n"
     << "looks = " << p.looks << "\n"
     << "kz = " << p.kz << "\n"
     << "phase_noise = " << p.phase_noise << "\n"
     << "incidence = " << p.incidence << "\n"
     << "seed = " << p.seed << "\n"
     << "train_count = " << p.train_count << "\n";
  return os.str();
}

inline RTensor labels_tensor(const LabelMap& m) {
  RTensor t(Shape{static_cast<std::size_t>(m.h), static_cast<std::size_t>(m.w)});
  for (std::size_t i = 0; i < m.v.size(); ++i) t.data[i] = m.v[i];
  return t;
}

inline LabelMap labels_from_tensor(const RTensor& t) {
  if (t.shape.size() != 2) throw ShapeError("labels: expected (H,W)");
  LabelMap m(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]));
  for (std::size_t i = 0; i < t.data.size(); ++i) m.v[i] = static_cast<int>(t.data[i]);
  return m;
}

// One container file per sample plus a text manifest. Deterministic:
// sample i draws from stream mix(seed + (i+1)*gamma), scene attempt k from
// mix(sample_seed + (k+1)*gamma) (splitmix64 constants).
inline Manifest generate_dataset(const GenParams& params, const std::string& out_dir) {
  params.validate();
  std::filesystem::create_directories(out_dir);
  Manifest man;
  const int n_train = train_split_count(params.num_scenes, params.train_count);
  for (int i = 0; i < params.num_scenes; ++i) {
    int attempts = 0;
    const Sample s = generate_sample(params, params.seed, i, &attempts);
    man.regenerated += attempts;
    TensorContainer c;
    c.put("master", s.master);
    c.put("slave", s.slave);
    c.put("phase", s.phase);
    c.put("label", labels_tensor(s.labels));
    const std::string file = "sample_" + std::to_string(i) + ".cxt";
    write_container(out_dir + "/" + file, c);
    man.entries.push_back(ManifestEntry{file, i < n_train});
  }
  std::ofstream mf(out_dir + "/manifest.txt");
  if (!mf) throw ContainerError(ContainerErrc::io, "cannot write manifest in " + out_dir);
  mf << "# fc2mfn dataset manifest\n";
  mf << "# rng = splitmix64; sample_seed = mix(seed + (i+1)*0x9E3779B97F4A7C15);"
        " attempt_seed = mix(sample_seed + (k+1)*0x9E3779B97F4A7C15)\n";
  mf << "# regenerated = " << man.regenerated << "\n";
  std::istringstream ps(gen_params_text(params));
  for (std::string line; std::getline(ps, line);) mf << "# " << line << "\n";
  for (const ManifestEntry& e : man.entries)
    mf << e.file << " " << (e.train ? "train" : "test") << "\n";
  return man;
}

struct DataSplit {
  std::vector<Sample> train, test;
};

inline Sample load_sample(const std::string& path) {
  const TensorContainer c = read_container(path);
  Sample s;
  s.master = c.complex_at("master");
  s.slave = c.complex_at("slave");
  s.phase = c.real_at("phase");
  s.labels = labels_from_tensor(c.real_at("label"));
  return s;
}

inline DataSplit load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.txt");
  if (!mf) throw ContainerError(ContainerErrc::io, "cannot read manifest in " + dir);
  DataSplit split;
  for (std::string line; std::getline(mf, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string file, which;
    ls >> file >> which;
    if (file.empty() || (which != "train" && which != "test"))
      throw ContainerError(ContainerErrc::bad_entry, "bad manifest line: " + line);
    Sample s = load_sample(dir + "/" + file);
    (which == "train" ? split.train : split.test).push_back(std::move(s));
  }
  return split;
}

}  // namespace fc2mfn
