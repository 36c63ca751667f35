// SPDX-License-Identifier: Apache-2.0
//
// treeloss command line: synthetic data generation, training, evaluation and
// full cross-validation experiments for tree-based semantic losses.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "treeloss/datagen.hpp"
#include "treeloss/evaluation.hpp"
#include "treeloss/experiment.hpp"
#include "treeloss/io.hpp"
#include "treeloss/losses.hpp"
#include "treeloss/trainer.hpp"
#include "treeloss/transport.hpp"
#include "treeloss/tree.hpp"
#include "treeloss/version.hpp"

namespace tl = treeloss;
using json = nlohmann::json;

namespace {

// Run manifest: written with status "running" before the work, finalized with
// wall clock and declared outputs afterwards. Lives next to the outputs.
class RunManifest {
 public:
  RunManifest(std::string path, std::string command, json config)
      : path_(std::move(path)), start_(std::chrono::steady_clock::now()) {
    doc_["tool"] = "treeloss";
    doc_["version"] = tl::kVersion;
    doc_["command"] = std::move(command);
    doc_["config"] = std::move(config);
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::array();
    doc_["status"] = "running";
    flush();
  }

  void add_input(const std::string& file) {
    doc_["inputs"][file] = tl::fnv1a64_hex(tl::read_file(file));
    flush();
  }

  void add_output(const std::string& file) { doc_["outputs"].push_back(file); }

  void finalize() {
    doc_["status"] = "complete";
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    doc_["wall_clock_sec"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() / 1000.0;
    flush();
  }

 private:
  void flush() { tl::write_file(path_, doc_.dump(2) + "\n"); }

  std::string path_;
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<double> parse_prob_row(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("empty probability row");
  return out;
}

tl::GenSpec genspec_from_json(const json& j) {
  tl::GenSpec spec;
  spec.tops = j.value("tops", spec.tops);
  spec.mids = j.value("mids", spec.mids);
  spec.leaves = j.value("leaves", spec.leaves);
  spec.images = j.value("images", spec.images);
  spec.height = j.value("height", spec.height);
  spec.width = j.value("width", spec.width);
  spec.bands = j.value("bands", spec.bands);
  spec.blob_count = j.value("blobs", spec.blob_count);
  spec.branch_scale = j.value("branch_scale", spec.branch_scale);
  spec.mid_scale = j.value("mid_scale", spec.mid_scale);
  spec.leaf_scale = j.value("leaf_scale", spec.leaf_scale);
  spec.noise_scale = j.value("noise", spec.noise_scale);
  spec.annotated_fraction = j.value("annotated_fraction", spec.annotated_fraction);
  spec.heldout = j.value("heldout", spec.heldout);
  spec.ood_images = j.value("ood_images", spec.ood_images);
  spec.folds = j.value("folds", spec.folds);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

json genspec_to_json(const tl::GenSpec& spec) {
  json j;
  j["tops"] = spec.tops;
  j["mids"] = spec.mids;
  j["leaves"] = spec.leaves;
  j["images"] = spec.images;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["bands"] = spec.bands;
  j["blobs"] = spec.blob_count;
  j["branch_scale"] = spec.branch_scale;
  j["mid_scale"] = spec.mid_scale;
  j["leaf_scale"] = spec.leaf_scale;
  j["noise"] = spec.noise_scale;
  j["annotated_fraction"] = spec.annotated_fraction;
  j["heldout"] = spec.heldout;
  j["ood_images"] = spec.ood_images;
  j["folds"] = spec.folds;
  j["seed"] = spec.seed;
  return j;
}

json trainconfig_to_json(const tl::TrainConfig& cfg) {
  json j;
  j["lr"] = cfg.lr;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_epsilon"] = cfg.adam_epsilon;
  j["lr_gamma"] = cfg.lr_gamma;
  j["batch_images"] = cfg.batch_images;
  j["pixels_per_image"] = cfg.pixels_per_image;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["hidden"] = cfg.hidden;
  j["loss"] = tl::loss_name(cfg.loss.kind);
  j["scheme"] = tl::scheme_name(cfg.loss.scheme);
  j["alpha"] = cfg.loss.alpha;
  j["beta"] = cfg.loss.beta;
  return j;
}

std::vector<int> train_images_for_fold(const tl::Dataset& data, int fold) {
  std::vector<int> out;
  if (fold < 0) {
    for (int i = 0; i < static_cast<int>(data.images.size()); ++i) out.push_back(i);
    return out;
  }
  if (fold >= static_cast<int>(data.folds.size()))
    throw std::invalid_argument("fold index out of range");
  for (int f = 0; f < static_cast<int>(data.folds.size()); ++f) {
    if (f == fold) continue;
    out.insert(out.end(), data.folds[f].begin(), data.folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> val_images_for_fold(const tl::Dataset& data, int fold, bool include_ood) {
  std::vector<int> out;
  if (fold < 0) {
    for (int i = 0; i < static_cast<int>(data.images.size()); ++i) out.push_back(i);
  } else {
    if (fold >= static_cast<int>(data.folds.size()))
      throw std::invalid_argument("fold index out of range");
    out = data.folds[fold];
  }
  if (include_ood)
    for (int k = 0; k < static_cast<int>(data.ood_images.size()); ++k) out.push_back(-1 - k);
  return out;
}

int resolve_level(const std::string& text, const tl::LabelTree& tree) {
  if (text == "top") return tree.depth() - 1;
  if (text == "leaf") return 0;
  return std::stoi(text);
}

std::vector<tl::ExperimentCell> parse_cells(const std::string& text) {
  std::vector<tl::ExperimentCell> cells;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("cell must look like loss:scheme, got " + item);
    cells.push_back({tl::loss_from_name(item.substr(0, colon)),
                     tl::scheme_from_name(item.substr(colon + 1))});
  }
  if (cells.empty()) throw std::invalid_argument("no experiment cells given");
  return cells;
}

// Default Table-style cell grid: the pure Wasserstein top-only row plus the
// tree CE and Wasserstein+CE blocks over all four schemes.
const char* kDefaultCells =
    "w:top,tce:leaf,tce:equal,tce:top,tce:hier,wce:leaf,wce:equal,wce:top,wce:hier";

int cmd_gen_tree(const std::string& out, int tops, int mids, int leaves) {
  tl::GenSpec spec;
  spec.tops = tops;
  spec.mids = mids;
  spec.leaves = leaves;
  json cfg;
  cfg["tops"] = tops;
  cfg["mids"] = mids;
  cfg["leaves"] = leaves;
  cfg["out"] = out;
  RunManifest manifest(out + ".run.json", "gen-tree", cfg);
  const tl::LabelTree tree = tl::gen_tree(spec);
  tree.save(out);
  manifest.add_output(out);
  manifest.finalize();
  std::cout << "wrote " << out << " (" << tree.leaf_count() << " leaves, depth "
            << tree.depth() << ")\n";
  return 0;
}

int cmd_gen_data(const tl::GenSpec& spec, const std::string& out) {
  tl::ensure_dir(out);
  RunManifest manifest(out + "/run.json", "gen-data", genspec_to_json(spec));
  const tl::Dataset data = tl::gen_dataset(spec);
  tl::save_dataset(data, out);
  manifest.add_output(out + "/manifest.json");
  manifest.add_output(out + "/tree.json");
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s/img%03zu.cube.bin", out.c_str(), i);
    manifest.add_output(buf);
    std::snprintf(buf, sizeof buf, "%s/img%03zu.labels.bin", out.c_str(), i);
    manifest.add_output(buf);
  }
  for (std::size_t i = 0; i < data.ood_images.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s/ood%03zu.cube.bin", out.c_str(), i);
    manifest.add_output(buf);
    std::snprintf(buf, sizeof buf, "%s/ood%03zu.labels.bin", out.c_str(), i);
    manifest.add_output(buf);
  }
  manifest.finalize();
  std::cout << "wrote " << data.images.size() << " images";
  if (!data.ood_images.empty()) std::cout << " + " << data.ood_images.size() << " ood images";
  std::cout << " to " << out << "\n";
  return 0;
}

int cmd_dump_distance(const std::string& tree_path, const std::string& scheme,
                      const std::string& out) {
  json cfg;
  cfg["tree"] = tree_path;
  cfg["scheme"] = scheme;
  cfg["out"] = out;
  RunManifest manifest(out + ".run.json", "dump-distance", cfg);
  manifest.add_input(tree_path);
  const auto tree = tl::LabelTree::load(tree_path).with_weights(tl::scheme_from_name(scheme));
  const auto m = tree.ground_distance();
  if (m.all_zero())
    std::cerr << "warning: distance matrix is all zero under scheme " << scheme << "\n";
  tl::write_file(out, tl::distance_matrix_csv(tree, m));
  manifest.add_output(out);
  manifest.finalize();
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_wasserstein(const std::string& tree_path, const std::string& scheme,
                    const std::string& p_text, const std::string& q_text) {
  const auto tree = tl::LabelTree::load(tree_path).with_weights(tl::scheme_from_name(scheme));
  const auto p = parse_prob_row(p_text);
  const auto q = parse_prob_row(q_text);
  const auto m = tree.ground_distance();
  const auto lp = tl::wasserstein_lp(p, q, m);
  const double fast = tl::wasserstein_tree(p, q, tree);
  std::printf("lp_cost=%.12g\n", lp.cost);
  std::printf("tree_cost=%.12g\n", fast);
  try {
    const int hot = tl::one_hot_index(q);
    std::printf("crisp_cost=%.12g\n", tl::wasserstein_crisp(p, hot, m));
  } catch (const std::invalid_argument&) {
    // q is not crisp; closed form does not apply
  }
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& tree_path,
              const tl::TrainConfig& cfg, int fold, const std::string& out,
              const std::string& trace_path, bool scheme_given) {
  json jcfg = trainconfig_to_json(cfg);
  jcfg["data"] = data_path;
  jcfg["fold"] = fold;
  jcfg["out"] = out;
  RunManifest manifest(out + ".run.json", "train", jcfg);
  manifest.add_input(data_path);

  tl::Dataset data = tl::load_dataset(data_path);
  if (!tree_path.empty()) {
    manifest.add_input(tree_path);
    data.tree = tl::LabelTree::load(tree_path);
  }
  if (cfg.loss.kind == tl::LossKind::CrossEntropy && scheme_given)
    std::cerr << "warning: --scheme is unused with --loss ce\n";

  const auto train_imgs = train_images_for_fold(data, fold);
  const tl::TrainResult result = tl::train(data, cfg, train_imgs);
  tl::save_checkpoint(out, result.model, cfg);
  manifest.add_output(out);
  const std::string trace = trace_path.empty() ? out + ".trace.csv" : trace_path;
  tl::write_file(trace, tl::trace_csv(result));
  manifest.add_output(trace);
  manifest.finalize();
  std::printf("trained %d epochs on %zu images (%ld pixel samples); final loss %.6g\n",
              cfg.epochs, train_imgs.size(), result.sampled_pixels,
              result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
  std::cout << "wrote " << out << " and " << trace << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& level_text, const std::string& tau_text, int grid_points,
             int fold, bool include_ood, const std::string& prefix) {
  json cfg;
  cfg["checkpoint"] = ckpt_path;
  cfg["data"] = data_path;
  cfg["level"] = level_text;
  cfg["tau"] = tau_text;
  cfg["fold"] = fold;
  cfg["out"] = prefix;
  RunManifest manifest(prefix + ".run.json", "eval", cfg);
  manifest.add_input(ckpt_path);
  manifest.add_input(data_path);

  const tl::Dataset data = tl::load_dataset(data_path);
  const tl::Mlp model = tl::load_checkpoint(ckpt_path);
  const int level = resolve_level(level_text, data.tree);
  const auto view = tl::make_level_view(data.tree, level);
  const auto images = val_images_for_fold(data, fold, include_ood);
  const auto scores = tl::collect_scores(model, data, images, view);
  if (scores.rows() == 0) throw std::runtime_error("no labelled pixels to evaluate");

  const auto grid = tl::tau_grid(grid_points);
  double tau = 0.0;
  if (tau_text == "auto") {
    tau = tl::select_tau(scores, view, grid).tau;
    std::printf("selected tau_m=%.6g\n", tau);
  } else {
    tau = std::stod(tau_text);
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tau outside [0,1]");
  }

  auto emit = [&](double t, const std::string& tag) {
    const auto pred = tl::predictions_at_tau(scores, t);
    const auto report = tl::one_vs_rest_metrics(pred, scores.truth, view);
    const auto conf = tl::confusion_matrix(pred, scores.truth, view);
    tl::write_file(prefix + "_metrics_" + tag + ".csv", tl::metrics_csv(report, level, t));
    tl::write_file(prefix + "_confusion_" + tag + ".csv", tl::confusion_csv(conf, view, false));
    tl::write_file(prefix + "_confusion_" + tag + "_rownorm.csv",
                   tl::confusion_csv(conf, view, true));
    manifest.add_output(prefix + "_metrics_" + tag + ".csv");
    manifest.add_output(prefix + "_confusion_" + tag + ".csv");
    manifest.add_output(prefix + "_confusion_" + tag + "_rownorm.csv");
    std::printf("%s (tau=%.6g): tpr=%.4f bacc=%.4f f1=%.4f over %ld pixels\n", tag.c_str(), t,
                report.macro_tpr, report.macro_bacc, report.macro_f1, report.evaluated_pixels);
  };
  emit(0.0, "tau0");
  emit(tau, "taum");
  tl::write_file(prefix + "_sweep.csv", tl::sweep_csv(scores, view, grid));
  manifest.add_output(prefix + "_sweep.csv");
  manifest.finalize();
  return 0;
}

int cmd_ood_sweep(const std::string& ckpt_path, const std::string& data_path,
                  const std::string& level_text, int grid_points, int fold, bool include_ood,
                  const std::string& out) {
  json cfg;
  cfg["checkpoint"] = ckpt_path;
  cfg["data"] = data_path;
  cfg["level"] = level_text;
  cfg["fold"] = fold;
  cfg["out"] = out;
  RunManifest manifest(out + ".run.json", "ood-sweep", cfg);
  manifest.add_input(ckpt_path);
  manifest.add_input(data_path);

  const tl::Dataset data = tl::load_dataset(data_path);
  const tl::Mlp model = tl::load_checkpoint(ckpt_path);
  const int level = resolve_level(level_text, data.tree);
  const auto view = tl::make_level_view(data.tree, level);
  const auto images = val_images_for_fold(data, fold, include_ood);
  const auto scores = tl::collect_scores(model, data, images, view);
  if (scores.rows() == 0) throw std::runtime_error("no labelled pixels to evaluate");
  tl::write_file(out, tl::sweep_csv(scores, view, tl::tau_grid(grid_points)));
  manifest.add_output(out);
  manifest.finalize();
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_experiment(const std::string& spec_path, const std::string& out,
                   const std::string& cells_text, const std::string& seeds_text, int workers) {
  tl::BenchmarkConfig bench;
  bench.train.lr = 1e-3;  // desk-scale default; the reference 1e-4 barely
                          // moves a freshly initialized MLP in 50 short epochs
  bench.train.pixels_per_image = 64;
  std::vector<std::uint64_t> seeds{1};

  json jspec = json::object();
  if (!spec_path.empty()) jspec = json::parse(tl::read_file(spec_path));
  if (jspec.contains("gen")) bench.gen = genspec_from_json(jspec["gen"]);
  if (jspec.contains("train")) {
    const auto& jt = jspec["train"];
    bench.train.lr = jt.value("lr", bench.train.lr);
    bench.train.lr_gamma = jt.value("lr_gamma", bench.train.lr_gamma);
    bench.train.epochs = jt.value("epochs", bench.train.epochs);
    bench.train.batch_images = jt.value("batch_images", bench.train.batch_images);
    bench.train.pixels_per_image = jt.value("pixels_per_image", bench.train.pixels_per_image);
    bench.train.hidden = jt.value("hidden", bench.train.hidden);
    bench.train.loss.alpha = jt.value("alpha", bench.train.loss.alpha);
    bench.train.loss.beta = jt.value("beta", bench.train.loss.beta);
  }
  if (jspec.contains("seeds")) seeds = jspec["seeds"].get<std::vector<std::uint64_t>>();
  if (jspec.contains("grid_points")) bench.grid = tl::tau_grid(jspec["grid_points"].get<int>());

  if (!seeds_text.empty()) {
    seeds.clear();
    std::stringstream ss(seeds_text);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  bench.cells = parse_cells(cells_text.empty() && jspec.contains("cells")
                                ? jspec["cells"].get<std::string>()
                                : (cells_text.empty() ? kDefaultCells : cells_text));
  bench.workers = workers;

  tl::ensure_dir(out);
  json cfg;
  cfg["spec"] = spec_path;
  cfg["gen"] = genspec_to_json(bench.gen);
  cfg["train"] = trainconfig_to_json(bench.train);
  cfg["seeds"] = seeds;
  cfg["out"] = out;
  RunManifest manifest(out + "/run.json", "experiment", cfg);
  if (!spec_path.empty()) manifest.add_input(spec_path);

  int failures = 0;
  for (std::uint64_t seed : seeds) {
    bench.gen.seed = seed;
    bench.train.seed = seed;
    const auto outcome =
        tl::run_benchmark(bench, [](const std::string& line) { std::cout << line << "\n"; });
    failures += outcome.failed_folds();
    for (const auto& cell : outcome.cells)
      for (const auto& f : cell.folds)
        if (!f.error.empty())
          std::cerr << "cell " << tl::loss_name(cell.cell.kind) << "/"
                    << tl::scheme_name(cell.cell.scheme) << " fold " << f.fold
                    << " failed: " << f.error << "\n";

    char name[96];
    std::snprintf(name, sizeof name, "%s/report_seed%llu.csv", out.c_str(),
                  static_cast<unsigned long long>(seed));
    tl::write_file(name, tl::report_csv(outcome));
    manifest.add_output(name);

    // paired t-tests: every tree-informed scheme against its leaf baseline
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < outcome.cells.size(); ++i)
      for (std::size_t j = 0; j < outcome.cells.size(); ++j)
        if (i != j && outcome.cells[i].cell.kind == outcome.cells[j].cell.kind &&
            outcome.cells[j].cell.scheme == tl::WeightScheme::LeafOnly &&
            outcome.cells[i].cell.scheme != tl::WeightScheme::LeafOnly)
          pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    if (!pairs.empty()) {
      std::snprintf(name, sizeof name, "%s/ttest_seed%llu.csv", out.c_str(),
                    static_cast<unsigned long long>(seed));
      tl::write_file(name, tl::ttest_csv(outcome, pairs));
      manifest.add_output(name);
    }

    for (const auto& cell : outcome.cells) {
      for (const bool at_taum : {false, true}) {
        std::snprintf(name, sizeof name, "%s/confusion_seed%llu_%s_%s_%s.csv", out.c_str(),
                      static_cast<unsigned long long>(seed),
                      tl::loss_name(cell.cell.kind).c_str(),
                      tl::scheme_name(cell.cell.scheme).c_str(), at_taum ? "taum" : "tau0");
        const auto mean = cell.mean_confusion(at_taum);
        std::ostringstream csv;
        csv << "truth";
        for (const auto& n : outcome.view.names) csv << ',' << n;
        csv << ",OOD\n";
        const int n = outcome.view.classes() + 1;
        char buf[64];
        for (int t = 1; t < n; ++t) {
          csv << outcome.view.names[t - 1];
          for (int p = 1; p < n; ++p) {
            std::snprintf(buf, sizeof buf, ",%.6f",
                          mean.empty() ? 0.0 : mean[static_cast<std::size_t>(t) * n + p]);
            csv << buf;
          }
          std::snprintf(buf, sizeof buf, ",%.6f",
                        mean.empty() ? 0.0 : mean[static_cast<std::size_t>(t) * n]);
          csv << buf << '\n';
        }
        tl::write_file(name, csv.str());
        manifest.add_output(name);
      }
    }
  }
  manifest.finalize();
  if (failures > 0) {
    std::cerr << failures << " experiment cell folds failed\n";
    return 1;
  }
  std::cout << "experiment complete; reports in " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-based semantic losses for sparsely supervised segmentation"};
  app.set_version_flag("--version", tl::kVersion);
  app.require_subcommand(1);

  // gen-tree
  auto* gen_tree_cmd = app.add_subcommand("gen-tree", "Generate a balanced label hierarchy");
  int gt_tops = 4, gt_mids = 3, gt_leaves = 2;
  std::string gt_out;
  gen_tree_cmd->add_option("--tops", gt_tops, "Top-level categories");
  gen_tree_cmd->add_option("--mids", gt_mids, "Mid nodes per top");
  gen_tree_cmd->add_option("--leaves", gt_leaves, "Leaves per mid");
  gen_tree_cmd->add_option("--out", gt_out, "Output tree JSON")->required();

  // gen-data
  auto* gen_data_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  tl::GenSpec gd_spec;
  std::string gd_out, gd_spec_path, gd_heldout;
  gen_data_cmd->add_option("--spec", gd_spec_path, "GenSpec JSON file");
  gen_data_cmd->add_option("--tops", gd_spec.tops, "Top-level categories");
  gen_data_cmd->add_option("--mids", gd_spec.mids, "Mid nodes per top");
  gen_data_cmd->add_option("--leaves", gd_spec.leaves, "Leaves per mid");
  gen_data_cmd->add_option("--images", gd_spec.images, "Image count");
  gen_data_cmd->add_option("--height", gd_spec.height, "Image height");
  gen_data_cmd->add_option("--width", gd_spec.width, "Image width");
  gen_data_cmd->add_option("--bands", gd_spec.bands, "Spectral bands");
  gen_data_cmd->add_option("--blobs", gd_spec.blob_count, "Class patches per image");
  gen_data_cmd->add_option("--noise", gd_spec.noise_scale, "Per-pixel noise scale");
  gen_data_cmd->add_option("--annotated-frac", gd_spec.annotated_fraction,
                           "Annotated fraction of each patch");
  gen_data_cmd->add_option("--heldout", gd_heldout, "Held-out leaf class codes, comma separated");
  gen_data_cmd->add_option("--ood-images", gd_spec.ood_images, "Extra OOD evaluation images");
  gen_data_cmd->add_option("--folds", gd_spec.folds, "Cross-validation folds");
  gen_data_cmd->add_option("--seed", gd_spec.seed, "Generator seed");
  gen_data_cmd->add_option("--out", gd_out, "Output directory")->required();

  // dump-distance
  auto* dump_cmd = app.add_subcommand("dump-distance", "Write the leaf ground-distance matrix");
  std::string dd_tree, dd_scheme = "equal", dd_out;
  dump_cmd->add_option("--tree", dd_tree, "Tree JSON")->required();
  dump_cmd->add_option("--scheme", dd_scheme, "Weight scheme: leaf|top|equal|hier");
  dump_cmd->add_option("--out", dd_out, "Output CSV")->required();

  // wasserstein
  auto* wass_cmd = app.add_subcommand("wasserstein", "Transport cost between two label vectors");
  std::string ws_tree, ws_scheme = "equal", ws_p, ws_q;
  wass_cmd->add_option("--tree", ws_tree, "Tree JSON")->required();
  wass_cmd->add_option("--scheme", ws_scheme, "Weight scheme: leaf|top|equal|hier");
  wass_cmd->add_option("--p", ws_p, "First probability row, comma separated")->required();
  wass_cmd->add_option("--q", ws_q, "Second probability row, comma separated")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the per-pixel classifier");
  std::string tr_data, tr_tree, tr_out, tr_trace, tr_loss = "ce", tr_scheme = "leaf";
  std::string tr_hidden = "64,64";
  tl::TrainConfig tr_cfg;
  int tr_fold = -1;
  train_cmd->add_option("--data", tr_data, "Dataset manifest JSON")->required();
  train_cmd->add_option("--tree", tr_tree, "Tree JSON overriding the dataset tree");
  train_cmd->add_option("--loss", tr_loss, "Loss: ce|w|wce|tce");
  auto* scheme_opt = train_cmd->add_option("--scheme", tr_scheme, "Scheme: leaf|top|equal|hier");
  train_cmd->add_option("--alpha", tr_cfg.loss.alpha, "CE share for wce");
  train_cmd->add_option("--beta", tr_cfg.loss.beta, "Wasserstein share for wce");
  train_cmd->add_option("--epochs", tr_cfg.epochs, "Training epochs");
  train_cmd->add_option("--lr", tr_cfg.lr, "Initial learning rate");
  train_cmd->add_option("--gamma", tr_cfg.lr_gamma, "Per-epoch lr decay");
  train_cmd->add_option("--batch-images", tr_cfg.batch_images, "Images per step");
  train_cmd->add_option("--pixels-per-image", tr_cfg.pixels_per_image,
                        "Annotated pixels sampled per image per step");
  train_cmd->add_option("--hidden", tr_hidden, "Hidden sizes, comma separated");
  train_cmd->add_option("--seed", tr_cfg.seed, "Training seed");
  train_cmd->add_option("--fold", tr_fold, "Hold out this fold (-1 trains on all images)");
  train_cmd->add_option("--out", tr_out, "Checkpoint path")->required();
  train_cmd->add_option("--trace", tr_trace, "Loss trace CSV (default <out>.trace.csv)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_level = "top", ev_tau = "auto", ev_out;
  int ev_fold = -1, ev_grid = 101;
  bool ev_ood = false;
  eval_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev_data, "Dataset manifest")->required();
  eval_cmd->add_option("--level", ev_level, "Hierarchy level: top|leaf|<int>");
  eval_cmd->add_option("--tau", ev_tau, "OOD threshold in [0,1], or auto");
  eval_cmd->add_option("--grid-points", ev_grid, "Threshold grid size for auto/sweep");
  eval_cmd->add_option("--fold", ev_fold, "Evaluate this fold's validation images (-1: all)");
  eval_cmd->add_flag("--include-ood", ev_ood, "Also evaluate the dataset's OOD images");
  eval_cmd->add_option("--out", ev_out, "Output prefix")->required();

  // ood-sweep
  auto* sweep_cmd = app.add_subcommand("ood-sweep", "Threshold sweep for OOD rejection");
  std::string os_ckpt, os_data, os_level = "top", os_out;
  int os_fold = -1, os_grid = 101;
  bool os_ood = true;
  sweep_cmd->add_option("--ckpt", os_ckpt, "Checkpoint")->required();
  sweep_cmd->add_option("--data", os_data, "Dataset manifest")->required();
  sweep_cmd->add_option("--level", os_level, "Hierarchy level: top|leaf|<int>");
  sweep_cmd->add_option("--grid-points", os_grid, "Threshold grid size");
  sweep_cmd->add_option("--fold", os_fold, "Restrict to a fold's validation images");
  sweep_cmd->add_flag("--include-ood,!--no-include-ood", os_ood,
                      "Include the dataset's OOD images (default on)");
  sweep_cmd->add_option("--out", os_out, "Output CSV")->required();

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Full cross-validation benchmark");
  std::string ex_spec, ex_out, ex_cells, ex_seeds;
  int ex_workers = 0;
  exp_cmd->add_option("--spec", ex_spec, "Experiment spec JSON");
  exp_cmd->add_option("--cells", ex_cells,
                      "Cells as loss:scheme pairs, comma separated (default full table)");
  exp_cmd->add_option("--seeds", ex_seeds, "Seeds, comma separated (default 1)");
  exp_cmd->add_option("--workers", ex_workers,
                      "Worker threads (default TREELOSS_WORKERS or all cores)");
  exp_cmd->add_option("--out", ex_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;  // usage error
  }

  try {
    if (gen_tree_cmd->parsed()) return cmd_gen_tree(gt_out, gt_tops, gt_mids, gt_leaves);
    if (gen_data_cmd->parsed()) {
      tl::GenSpec spec = gd_spec;
      if (!gd_spec_path.empty()) {
        // flags given on the command line take precedence over the spec file
        spec = genspec_from_json(json::parse(tl::read_file(gd_spec_path)));
        auto given = [&](const char* name) { return gen_data_cmd->count(name) > 0; };
        if (given("--tops")) spec.tops = gd_spec.tops;
        if (given("--mids")) spec.mids = gd_spec.mids;
        if (given("--leaves")) spec.leaves = gd_spec.leaves;
        if (given("--images")) spec.images = gd_spec.images;
        if (given("--height")) spec.height = gd_spec.height;
        if (given("--width")) spec.width = gd_spec.width;
        if (given("--bands")) spec.bands = gd_spec.bands;
        if (given("--blobs")) spec.blob_count = gd_spec.blob_count;
        if (given("--noise")) spec.noise_scale = gd_spec.noise_scale;
        if (given("--annotated-frac")) spec.annotated_fraction = gd_spec.annotated_fraction;
        if (given("--ood-images")) spec.ood_images = gd_spec.ood_images;
        if (given("--folds")) spec.folds = gd_spec.folds;
        if (given("--seed")) spec.seed = gd_spec.seed;
      }
      if (!gd_heldout.empty()) {
        spec.heldout.clear();
        std::stringstream ss(gd_heldout);
        std::string item;
        while (std::getline(ss, item, ','))
          if (!item.empty()) spec.heldout.push_back(std::stoi(item));
      }
      return cmd_gen_data(spec, gd_out);
    }
    if (dump_cmd->parsed()) return cmd_dump_distance(dd_tree, dd_scheme, dd_out);
    if (wass_cmd->parsed()) return cmd_wasserstein(ws_tree, ws_scheme, ws_p, ws_q);
    if (train_cmd->parsed()) {
      tr_cfg.loss.kind = tl::loss_from_name(tr_loss);
      tr_cfg.loss.scheme = tl::scheme_from_name(tr_scheme);
      tr_cfg.hidden.clear();
      std::stringstream ss(tr_hidden);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) tr_cfg.hidden.push_back(std::stoi(item));
      return cmd_train(tr_data, tr_tree, tr_cfg, tr_fold, tr_out, tr_trace,
                       scheme_opt->count() > 0);
    }
    if (eval_cmd->parsed())
      return cmd_eval(ev_ckpt, ev_data, ev_level, ev_tau, ev_grid, ev_fold, ev_ood, ev_out);
    if (sweep_cmd->parsed())
      return cmd_ood_sweep(os_ckpt, os_data, os_level, os_grid, os_fold, os_ood, os_out);
    if (exp_cmd->parsed())
      return cmd_experiment(ex_spec, ex_out, ex_cells, ex_seeds, ex_workers);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
