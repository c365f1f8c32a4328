#include "sct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sct/error.hpp"
#include "sct/io.hpp"
#include "sct/rng.hpp"

namespace sct::phantom {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct Ellipse {
  double cx, cy;  // mm
  double a, b;    // semi-axes, mm
  double angle;   // rad
  float value;

  // Normalized radius; < 1 inside.
  double rho(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = dx * c + dy * s, v = -dx * s + dy * c;
    return std::sqrt(u * u / (a * a) + v * v / (b * b));
  }

  // Pixel coverage with a linear edge one pixel wide.
  double coverage(double x, double y, double pixel) const {
    const double dist_px = (rho(x, y) - 1.0) * std::min(a, b) / pixel;
    return std::clamp(0.5 - dist_px, 0.0, 1.0);
  }
};

double pixel_x(int col, int size, double p) { return (col - size / 2) * p; }
double pixel_y(int row, int size, double p) { return (size / 2 - row) * p; }

}  // namespace

json PhantomSpec::to_json() const {
  json j = {{"size", size},
            {"pixel_size_mm", pixel_size},
            {"nodule_diameter_mm", nodule_diameter},
            {"n_vessels", n_vessels},
            {"seed", seed}};
  if (nodule_center) j["nodule_center"] = {nodule_center->first, nodule_center->second};
  else j["nodule_center"] = "random";
  return j;
}

PhantomSpec PhantomSpec::from_json(const json& j) {
  PhantomSpec s;
  s.size = j.value("size", s.size);
  s.pixel_size = j.value("pixel_size_mm", s.pixel_size);
  s.nodule_diameter = j.value("nodule_diameter_mm", s.nodule_diameter);
  s.n_vessels = j.value("n_vessels", s.n_vessels);
  s.seed = j.value("seed", s.seed);
  if (j.contains("nodule_center") && j["nodule_center"].is_array()) {
    s.nodule_center = std::make_pair(j["nodule_center"][0].get<double>(), j["nodule_center"][1].get<double>());
  }
  return s;
}

LabeledSlice generate_phantom(const PhantomSpec& spec) {
  if (spec.size <= 0 || spec.size % 2 != 0) throw DataError("phantom size must be positive and even");
  if (!(spec.pixel_size > 0.0)) throw DataError("phantom pixel size must be positive");
  if (spec.nodule_diameter < 0.0) throw DataError("nodule diameter must be non-negative");
  if (spec.n_vessels < 0) throw DataError("vessel count must be non-negative");

  Rng rng(spec.seed);
  const double p = spec.pixel_size;
  const double fov = spec.size / 2.0 * p;  // inscribed circle radius, mm

  const Ellipse body{0.0, rng.uniform(-0.03, 0.03) * fov, fov * rng.uniform(0.80, 0.88), fov * rng.uniform(0.60, 0.68),
                     rng.uniform(-0.05, 0.05), kSoftTissueHU};
  std::vector<Ellipse> lungs;
  for (int side : {-1, 1}) {
    lungs.push_back({side * fov * rng.uniform(0.36, 0.40), body.cy + fov * rng.uniform(0.0, 0.05),
                     fov * rng.uniform(0.22, 0.27), fov * rng.uniform(0.38, 0.45), side * rng.uniform(0.0, 0.15),
                     kLungHU});
  }

  auto in_lung = [&](double x, double y, double margin_mm) {
    for (const auto& l : lungs) {
      const double shrink = 1.0 - margin_mm / std::min(l.a, l.b);
      if (shrink > 0 && l.rho(x, y) < shrink) return true;
    }
    return false;
  };

  std::vector<Ellipse> vessels;
  for (int i = 0; i < spec.n_vessels; ++i) {
    const auto& lung = lungs[rng.below(lungs.size())];
    double x = 0, y = 0;
    for (int tries = 0; tries < 100; ++tries) {
      x = lung.cx + rng.uniform(-lung.a, lung.a);
      y = lung.cy + rng.uniform(-lung.b, lung.b);
      if (lung.rho(x, y) < 0.8) break;
    }
    vessels.push_back({x, y, p * rng.uniform(0.6, 1.2), p * rng.uniform(2.0, 5.0), rng.uniform(0.0, kPi), kVesselHU});
  }

  const double radius = spec.nodule_diameter / 2.0;
  double ncx = 0.0, ncy = 0.0;
  const bool has_nodule = radius > 0.0;
  if (has_nodule) {
    auto fits = [&](double x, double y) {
      // Whole disk plus its soft edge must sit inside one lung field.
      for (const auto& l : lungs) {
        bool all_inside = true;
        for (int k = 0; k < 32 && all_inside; ++k) {
          const double ang = 2.0 * kPi * k / 32;
          const double r = radius + 1.5 * p;
          all_inside = l.rho(x + r * std::cos(ang), y + r * std::sin(ang)) < 1.0 - 0.5 * p / std::min(l.a, l.b);
        }
        if (all_inside) return true;
      }
      return false;
    };
    if (spec.nodule_center) {
      ncx = pixel_x(0, spec.size, p) + spec.nodule_center->first * p;
      ncy = pixel_y(0, spec.size, p) - spec.nodule_center->second * p;
      if (!fits(ncx, ncy)) throw DataError("requested nodule center does not lie inside a lung field");
    } else {
      bool placed = false;
      for (int tries = 0; tries < 500 && !placed; ++tries) {
        const auto& lung = lungs[rng.below(lungs.size())];
        ncx = lung.cx + rng.uniform(-lung.a, lung.a);
        ncy = lung.cy + rng.uniform(-lung.b, lung.b);
        placed = fits(ncx, ncy);
      }
      if (!placed) throw DataError("could not place the nodule inside a lung field");
    }
  }

  LabeledSlice slice;
  slice.image = ImageGrid(spec.size, p, UnitTag::HU, kAirHU);
  slice.nodule_mask = Mask(spec.size, spec.size);
  for (int r = 0; r < spec.size; ++r) {
    for (int c = 0; c < spec.size; ++c) {
      const double x = pixel_x(c, spec.size, p), y = pixel_y(r, spec.size, p);
      double v = kAirHU;
      auto paint = [&](const Ellipse& e) {
        const double alpha = e.coverage(x, y, p);
        v = v * (1.0 - alpha) + e.value * alpha;
      };
      paint(body);
      for (const auto& l : lungs) paint(l);
      for (const auto& vs : vessels) {
        // Vessels only inside the lung parenchyma.
        if (in_lung(x, y, 0.0)) paint(vs);
      }
      if (has_nodule) {
        const double dist = std::hypot(x - ncx, y - ncy);
        const double alpha = std::clamp(radius / p + 0.5 - dist / p, 0.0, 1.0);
        v = v * (1.0 - alpha) + kNoduleHU * alpha;
        if (alpha > 0.5) slice.nodule_mask.set(r, c);
      }
      slice.image.at(r, c) = static_cast<float>(v);
    }
  }
  slice.meta = spec.to_json();
  if (has_nodule) slice.meta["nodule_center_mm"] = {ncx, ncy};
  return slice;
}

fs::path mask_path_for(const fs::path& slice_path) {
  fs::path p = slice_path;
  p += ".mask.json";
  return p;
}

LabeledSlice load_raw_slice(const fs::path& path) { return load_raw_slice(path, io::read_json(io::sidecar_path(path))); }

LabeledSlice load_raw_slice(const fs::path& path, const json& header) {
  LabeledSlice slice;
  slice.image = io::read_raw_image(path, header);
  if (slice.image.unit != UnitTag::HU) throw DataError("slice " + path.string() + " is not HU-tagged");
  const auto mpath = mask_path_for(path);
  if (fs::exists(mpath)) {
    slice.nodule_mask = io::read_mask(mpath);
    if (slice.nodule_mask.width != slice.image.width || slice.nodule_mask.height != slice.image.height) {
      throw DataError("mask " + mpath.string() + " does not match the slice shape");
    }
  } else {
    slice.nodule_mask = Mask(slice.image.width, slice.image.height);
  }
  slice.meta = {{"source", path.string()}};
  return slice;
}

void write_labeled_slice(const fs::path& path, const LabeledSlice& slice) {
  io::write_raw_image(path, slice.image);
  if (slice.diseased()) io::write_mask(mask_path_for(path), slice.nodule_mask);
}

// ---------------------------------------------------------------------------

json DatasetSpec::to_json() const {
  json j = {{"n_subjects", n_subjects},
            {"slices_per_subject", slices_per_subject},
            {"train_fraction", train_fraction},
            {"val_fraction", val_fraction},
            {"study_diseased", study_diseased},
            {"study_healthy", study_healthy},
            {"min_nodule_mm", min_nodule_mm},
            {"max_nodule_mm", max_nodule_mm},
            {"phantom", base.to_json()},
            {"seed", seed}};
  if (n_train) j["n_train"] = *n_train;
  if (n_val) j["n_val"] = *n_val;
  if (n_test) j["n_test"] = *n_test;
  return j;
}

DatasetSpec DatasetSpec::from_json(const json& j) {
  DatasetSpec s;
  s.n_subjects = j.value("n_subjects", s.n_subjects);
  s.slices_per_subject = j.value("slices_per_subject", s.slices_per_subject);
  s.train_fraction = j.value("train_fraction", s.train_fraction);
  s.val_fraction = j.value("val_fraction", s.val_fraction);
  if (j.contains("n_train")) s.n_train = j["n_train"].get<int>();
  if (j.contains("n_val")) s.n_val = j["n_val"].get<int>();
  if (j.contains("n_test")) s.n_test = j["n_test"].get<int>();
  s.study_diseased = j.value("study_diseased", s.study_diseased);
  s.study_healthy = j.value("study_healthy", s.study_healthy);
  s.min_nodule_mm = j.value("min_nodule_mm", s.min_nodule_mm);
  s.max_nodule_mm = j.value("max_nodule_mm", s.max_nodule_mm);
  if (j.contains("phantom")) s.base = PhantomSpec::from_json(j["phantom"]);
  s.seed = j.value("seed", s.seed);
  return s;
}

std::vector<SubjectSplit> assign_splits(const DatasetSpec& spec) {
  int n_train, n_val, n_test;
  if (spec.n_train || spec.n_val || spec.n_test) {
    n_train = spec.n_train.value_or(0);
    n_val = spec.n_val.value_or(0);
    n_test = spec.n_test.value_or(0);
  } else {
    if (spec.n_subjects < 3) throw DataError("need at least three subjects for train/val/test");
    n_train = std::max(1, static_cast<int>(std::lround(spec.train_fraction * spec.n_subjects)));
    n_val = std::max(1, static_cast<int>(std::lround(spec.val_fraction * spec.n_subjects)));
    n_test = spec.n_subjects - n_train - n_val;
    if (n_test < 1) throw DataError("split fractions leave no test subjects");
  }
  std::vector<SubjectSplit> out;
  char id[32];
  int idx = 0;
  auto add = [&](int count, const char* split) {
    for (int i = 0; i < count; ++i) {
      std::snprintf(id, sizeof id, "S%03d", idx++);
      out.push_back({id, split});
    }
  };
  add(n_train, "train");
  add(n_val, "val");
  add(n_test, "test");
  add(spec.study_diseased + spec.study_healthy, "study");
  return out;
}

std::vector<ManifestEntry> build_dataset(const DatasetSpec& spec, const fs::path& dir) {
  if (spec.slices_per_subject <= 0) throw DataError("slices_per_subject must be positive");
  const auto subjects = assign_splits(spec);
  std::vector<ManifestEntry> entries;
  int study_index = 0;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& subj = subjects[s];
    const std::uint64_t subject_seed = derive_seed(spec.seed, s);
    Rng subject_rng(subject_seed);
    double diameter = subject_rng.uniform(spec.min_nodule_mm, spec.max_nodule_mm);
    int n_slices = spec.slices_per_subject;
    if (subj.split == "study") {
      n_slices = 1;
      if (study_index++ >= spec.study_diseased) diameter = 0.0;
    }
    for (int k = 0; k < n_slices; ++k) {
      PhantomSpec ps = spec.base;
      ps.seed = derive_seed(subject_seed, 1000 + k);
      ps.nodule_diameter = diameter;
      ps.nodule_center.reset();
      const auto slice = generate_phantom(ps);
      char name[64];
      std::snprintf(name, sizeof name, "%s/slice%02d.raw", subj.subject_id.c_str(), k);
      write_labeled_slice(dir / name, slice);
      ManifestEntry e;
      e.subject_id = subj.subject_id;
      e.slice_path = name;
      if (slice.diseased()) e.mask_path = mask_path_for(name).string();
      e.split = subj.split;
      e.diseased = slice.diseased();
      entries.push_back(std::move(e));
    }
  }
  io::write_json(dir / "manifest.json", manifest_to_json(entries));
  return entries;
}

json manifest_to_json(const std::vector<ManifestEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    json j = {{"subject_id", e.subject_id}, {"slice_path", e.slice_path}, {"split", e.split}, {"diseased", e.diseased}};
    if (e.mask_path) j["mask_path"] = *e.mask_path;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<ManifestEntry> manifest_from_json(const json& j) {
  if (!j.is_array()) throw DataError("manifest must be a JSON list");
  std::vector<ManifestEntry> out;
  try {
    for (const auto& item : j) {
      ManifestEntry e;
      e.subject_id = item.at("subject_id").get<std::string>();
      e.slice_path = item.at("slice_path").get<std::string>();
      if (item.contains("mask_path")) e.mask_path = item["mask_path"].get<std::string>();
      e.split = item.at("split").get<std::string>();
      e.diseased = item.at("diseased").get<bool>();
      out.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw DataError(std::string("malformed manifest: ") + ex.what());
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) { return manifest_from_json(io::read_json(path)); }

}  // namespace sct::phantom
