// SPDX-License-Identifier: Apache-2.0
#include "treeloss/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "treeloss/io.hpp"

namespace treeloss {

using json = nlohmann::json;

LabelTree gen_tree(const GenSpec& spec) {
  if (spec.tops < 1 || spec.mids < 1 || spec.leaves < 1)
    throw std::invalid_argument("tree shape counts must be >= 1");
  std::vector<TreeNode> nodes;
  nodes.push_back({0, "root", std::nullopt, std::nullopt});
  const int n_tops = spec.tops;
  const int n_mids = spec.tops * spec.mids;
  char buf[64];
  for (int t = 0; t < n_tops; ++t) {
    std::snprintf(buf, sizeof buf, "top%d", t + 1);
    nodes.push_back({1 + t, buf, 0, std::nullopt});
  }
  for (int t = 0; t < n_tops; ++t)
    for (int m = 0; m < spec.mids; ++m) {
      std::snprintf(buf, sizeof buf, "mid%d.%d", t + 1, m + 1);
      nodes.push_back({1 + n_tops + t * spec.mids + m, buf, 1 + t, std::nullopt});
    }
  for (int t = 0; t < n_tops; ++t)
    for (int m = 0; m < spec.mids; ++m)
      for (int l = 0; l < spec.leaves; ++l) {
        std::snprintf(buf, sizeof buf, "leaf%d.%d.%d", t + 1, m + 1, l + 1);
        const int mid_id = 1 + n_tops + t * spec.mids + m;
        nodes.push_back(
            {1 + n_tops + n_mids + (t * spec.mids + m) * spec.leaves + l, buf, mid_id,
             std::nullopt});
      }
  return LabelTree::from_nodes(std::move(nodes));
}

std::vector<std::vector<int>> split_folds(int n_images, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least 2 folds");
  if (folds > n_images) throw std::invalid_argument("more folds than images");
  std::vector<int> order(n_images);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0xF01D5EEDULL);
  rng.shuffle(order);
  std::vector<std::vector<int>> out(folds);
  for (int i = 0; i < n_images; ++i) out[i % folds].push_back(order[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

namespace {

struct ClassSpectra {
  int bands = 0;
  std::vector<double> mean;  // classes x bands

  double at(int cls, int b) const { return mean[static_cast<std::size_t>(cls) * bands + b]; }
};

ClassSpectra make_spectra(const GenSpec& spec, Rng& rng) {
  const int c = spec.tops * spec.mids * spec.leaves;
  ClassSpectra s;
  s.bands = spec.bands;
  s.mean.assign(static_cast<std::size_t>(c) * spec.bands, 0.0);

  std::vector<double> branch(static_cast<std::size_t>(spec.tops) * spec.bands);
  for (double& x : branch) x = spec.branch_scale * rng.normal();
  std::vector<double> mid(static_cast<std::size_t>(spec.tops) * spec.mids * spec.bands);
  for (double& x : mid) x = spec.mid_scale * rng.normal();
  std::vector<double> leaf(static_cast<std::size_t>(c) * spec.bands);
  for (double& x : leaf) x = spec.leaf_scale * rng.normal();

  for (int cls = 0; cls < c; ++cls) {
    const int m = cls / spec.leaves;
    const int t = m / spec.mids;
    for (int b = 0; b < spec.bands; ++b)
      s.mean[static_cast<std::size_t>(cls) * spec.bands + b] =
          1.0 + branch[static_cast<std::size_t>(t) * spec.bands + b] +
          mid[static_cast<std::size_t>(m) * spec.bands + b] +
          leaf[static_cast<std::size_t>(cls) * spec.bands + b];
  }
  return s;
}

LabeledImage make_image(const GenSpec& spec, const ClassSpectra& spectra,
                        const std::vector<int>& class_pool, bool ood_mode,
                        const std::vector<char>& is_heldout, Rng rng) {
  const int h = spec.height, w = spec.width;
  LabeledImage img;
  img.cube.height = h;
  img.cube.width = w;
  img.cube.bands = spec.bands;
  img.cube.values.assign(static_cast<std::size_t>(h) * w * spec.bands, 0.0f);
  img.labels.height = h;
  img.labels.width = w;
  img.labels.labels.assign(static_cast<std::size_t>(h) * w, -1);

  struct Site {
    int y, x, cls;  // cls is a class code 1..C
  };
  std::vector<Site> sites(spec.blob_count);
  for (auto& s : sites) {
    s.y = rng.uniform_int(0, h - 1);
    s.x = rng.uniform_int(0, w - 1);
    s.cls = class_pool[rng.uniform_int(0, static_cast<int>(class_pool.size()) - 1)];
  }

  // Voronoi partition by nearest site; ties go to the lower site index.
  std::vector<int> owner(static_cast<std::size_t>(h) * w, 0);
  std::vector<std::vector<int>> cell(sites.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      long best = -1;
      int best_s = 0;
      for (std::size_t s = 0; s < sites.size(); ++s) {
        const long dy = y - sites[s].y, dx = x - sites[s].x;
        const long d2 = dy * dy + dx * dx;
        if (best < 0 || d2 < best) {
          best = d2;
          best_s = static_cast<int>(s);
        }
      }
      const int pix = y * w + x;
      owner[pix] = best_s;
      cell[best_s].push_back(pix);
    }

  // Representative-area annotation: the pixels of each cell closest to its
  // site, sized to the requested fraction of the cell.
  for (std::size_t s = 0; s < sites.size(); ++s) {
    auto& pixels = cell[s];
    if (pixels.empty()) continue;
    std::sort(pixels.begin(), pixels.end(), [&](int a, int b) {
      const long day = a / w - sites[s].y, dax = a % w - sites[s].x;
      const long dby = b / w - sites[s].y, dbx = b % w - sites[s].x;
      const long da = day * day + dax * dax, db = dby * dby + dbx * dbx;
      return da != db ? da < db : a < b;
    });
    const auto take = static_cast<std::size_t>(
        std::llround(spec.annotated_fraction * static_cast<double>(pixels.size())));
    const int code = ood_mode && is_heldout[sites[s].cls] ? 0 : sites[s].cls;
    for (std::size_t i = 0; i < std::min(take, pixels.size()); ++i)
      img.labels.labels[pixels[i]] = code;
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int cls = sites[owner[y * w + x]].cls - 1;  // class code -> leaf slot
      for (int b = 0; b < spec.bands; ++b) {
        const double v = spectra.at(cls, b) + spec.noise_scale * rng.normal();
        img.cube.at(y, x, b) = static_cast<float>(std::max(v, 0.0));
      }
    }
  return img;
}

}  // namespace

Dataset gen_dataset(const GenSpec& spec) {
  if (spec.images < 1) throw std::invalid_argument("need at least 1 image");
  if (spec.bands < 2) throw std::invalid_argument("need at least 2 bands");
  if (spec.blob_count < 1) throw std::invalid_argument("need at least 1 blob");
  if (!(spec.annotated_fraction > 0.0 && spec.annotated_fraction <= 1.0))
    throw std::invalid_argument("annotated fraction must lie in (0, 1]");

  Dataset data;
  data.tree = gen_tree(spec);
  const int c = data.tree.leaf_count();

  std::vector<char> is_heldout(c + 1, 0);
  for (int code : spec.heldout) {
    if (code < 1 || code > c)
      throw std::invalid_argument("held-out class code out of range: " + std::to_string(code));
    is_heldout[code] = 1;
  }
  std::vector<int> main_pool, full_pool;
  for (int code = 1; code <= c; ++code) {
    full_pool.push_back(code);
    if (!is_heldout[code]) main_pool.push_back(code);
  }
  if (main_pool.empty()) throw std::invalid_argument("every class is held out");

  Rng rng(spec.seed);
  const ClassSpectra spectra = make_spectra(spec, rng);

  data.images.reserve(spec.images);
  for (int i = 0; i < spec.images; ++i)
    data.images.push_back(
        make_image(spec, spectra, main_pool, false, is_heldout, rng.fork(i + 1)));
  for (int i = 0; i < spec.ood_images; ++i)
    data.ood_images.push_back(
        make_image(spec, spectra, full_pool, true, is_heldout, rng.fork(1000003 + i)));

  data.folds = split_folds(spec.images, spec.folds, spec.seed);
  return data;
}

static json image_entry(const LabeledImage& img, const std::string& cube,
                        const std::string& labels) {
  json e;
  e["cube"] = cube;
  e["labels"] = labels;
  e["height"] = img.cube.height;
  e["width"] = img.cube.width;
  e["bands"] = img.cube.bands;
  return e;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  ensure_dir(dir);
  data.tree.save(dir + "/tree.json");

  json manifest;
  manifest["tree"] = "tree.json";
  manifest["images"] = json::array();
  manifest["ood_images"] = json::array();
  char buf[64];
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    std::snprintf(buf, sizeof buf, "img%03zu", i);
    const std::string cube = std::string(buf) + ".cube.bin";
    const std::string labels = std::string(buf) + ".labels.bin";
    write_f32_le(dir + "/" + cube, data.images[i].cube.values);
    write_i32_le(dir + "/" + labels, data.images[i].labels.labels);
    manifest["images"].push_back(image_entry(data.images[i], cube, labels));
  }
  for (std::size_t i = 0; i < data.ood_images.size(); ++i) {
    std::snprintf(buf, sizeof buf, "ood%03zu", i);
    const std::string cube = std::string(buf) + ".cube.bin";
    const std::string labels = std::string(buf) + ".labels.bin";
    write_f32_le(dir + "/" + cube, data.ood_images[i].cube.values);
    write_i32_le(dir + "/" + labels, data.ood_images[i].labels.labels);
    manifest["ood_images"].push_back(image_entry(data.ood_images[i], cube, labels));
  }
  manifest["splits"] = data.folds;
  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

static LabeledImage load_image(const json& e, const std::string& dir) {
  LabeledImage img;
  img.cube.height = e.at("height").get<int>();
  img.cube.width = e.at("width").get<int>();
  img.cube.bands = e.at("bands").get<int>();
  const std::size_t pixels = static_cast<std::size_t>(img.cube.height) * img.cube.width;
  img.cube.values = read_f32_le(dir + "/" + e.at("cube").get<std::string>(),
                                pixels * img.cube.bands);
  img.labels.height = img.cube.height;
  img.labels.width = img.cube.width;
  img.labels.labels = read_i32_le(dir + "/" + e.at("labels").get<std::string>(), pixels);
  return img;
}

Dataset load_dataset(const std::string& manifest_path) {
  const std::string dir = parent_dir(manifest_path);
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("manifest is not valid JSON: ") + e.what());
  }

  Dataset data;
  data.tree = LabelTree::load(dir + "/" + manifest.at("tree").get<std::string>());
  for (const auto& e : manifest.at("images")) data.images.push_back(load_image(e, dir));
  if (manifest.contains("ood_images"))
    for (const auto& e : manifest["ood_images"]) data.ood_images.push_back(load_image(e, dir));
  if (manifest.contains("splits"))
    data.folds = manifest["splits"].get<std::vector<std::vector<int>>>();

  const int c = data.tree.leaf_count();
  for (const auto& img : data.images)
    for (std::int32_t v : img.labels.labels)
      if (v < -1 || v > c)
        throw std::runtime_error("label value " + std::to_string(v) + " out of range");
  return data;
}

}  // namespace treeloss
