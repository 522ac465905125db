#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "texweave/checkpoint.hpp"
#include "texweave/errors.hpp"
#include "texweave/filterbank.hpp"
#include "texweave/image.hpp"
#include "texweave/synthesis.hpp"
#include "texweave/texton.hpp"
#include "texweave/tiles.hpp"
#include "texweave/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace texweave;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t env_threads() {
  const char* raw = std::getenv("TEXWEAVE_THREADS");
  if (!raw || !*raw) return 0;
  char* end = nullptr;
  long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1) throw UsageError("TEXWEAVE_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void record_config(const fs::path& dir, const std::string& command, json resolved) {
  resolved["command"] = command;
  write_json(dir / "run_config.json", resolved);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// filterbank export -------------------------------------------------------

struct ExportOptions {
  std::size_t support = kDefaultSupport;
  fs::path out;
};

void check_support(std::size_t support) {
  if (support < 7 || support % 2 == 0)
    throw UsageError("filter support must be odd and at least 7, got " + std::to_string(support));
}

void run_filterbank_export(const ExportOptions& opt) {
  check_support(opt.support);
  FilterBank bank = build_lm_bank(opt.support);
  const std::size_t s = bank.support();
  json kernels = json::array();
  for (std::size_t k = 0; k < bank.count(); ++k) {
    Tensor img({s, s, 1});
    double lo = bank.kernels.at(k, 0, 0), hi = lo;
    for (std::size_t i = 0; i < s * s; ++i) {
      lo = std::min(lo, bank.kernels[k * s * s + i]);
      hi = std::max(hi, bank.kernels[k * s * s + i]);
    }
    for (std::size_t i = 0; i < s * s; ++i)
      img[i] = hi > lo ? (bank.kernels[k * s * s + i] - lo) / (hi - lo) : 0.5;
    char name[32];
    std::snprintf(name, sizeof name, "kernel_%02zu.png", k);
    save_png(opt.out / name, img);
    kernels.push_back({{"index", k},
                       {"file", name},
                       {"kind", kind_name(bank.kinds[k])},
                       {"scale", bank.scales[k]},
                       {"orientation", bank.orientations[k]},
                       {"support", s}});
  }
  write_json(opt.out / "manifest.json",
             {{"fingerprint", bank.fingerprint()}, {"support", s}, {"kernels", kernels}});
  record_config(opt.out, "filterbank export", {{"support", opt.support}, {"out", opt.out}});
  std::cout << "wrote " << bank.count() << " kernels to " << opt.out.string() << '\n';
}

// train -------------------------------------------------------------------

struct TrainOptions {
  fs::path data;
  std::string direction = "north";
  bool all_directions = false;
  std::string loss = "l2";
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::size_t max_steps = 0;
  double lr = 1e-3;
  double lambda_tv = 1e-3;
  double lambda_color = 10.0;
  std::vector<double> gram_weights;
  std::size_t filter_support = kDefaultSupport;
  std::uint64_t seed = 0;
  DrawConfig model;
  std::size_t log_every = 50;
  fs::path out;
};

void run_train(TrainOptions opt) {
  DatasetConfig data_config = load_dataset_config(opt.data);
  Dataset dataset = load_dataset(data_config);
  opt.model.tile_size = dataset.tile_size;
  opt.model.validate();
  check_support(opt.filter_support);

  LossSpec loss;
  loss.kind = parse_loss(opt.loss);
  loss.lambda_tv = opt.lambda_tv;
  loss.lambda_color = opt.lambda_color;
  loss.gram_layer_weights = opt.gram_weights;
  loss.filter_support = opt.filter_support;

  std::vector<Direction> directions;
  if (opt.all_directions)
    directions = {Direction::north, Direction::south, Direction::east, Direction::west};
  else
    directions = {parse_direction(opt.direction)};

  std::size_t threads = env_threads();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, directions.size());

  json resolved = {{"data", fs::absolute(opt.data)},
                   {"directions", json::array()},
                   {"loss", to_json(loss)},
                   {"model", to_json(opt.model)},
                   {"epochs", opt.epochs},
                   {"batch_size", opt.batch_size},
                   {"max_steps", opt.max_steps},
                   {"learning_rate", opt.lr},
                   {"seed", opt.seed},
                   {"threads", threads},
                   {"out", opt.out}};
  for (Direction d : directions) resolved["directions"].push_back(direction_name(d));
  record_config(opt.out, "train", resolved);

  std::mutex io;
  auto train_one = [&](Direction d) {
    TrainConfig tc;
    tc.loss = loss;
    tc.direction = d;
    tc.epochs = opt.epochs;
    tc.batch_size = opt.batch_size;
    tc.learning_rate = opt.lr;
    tc.seed = opt.seed;
    tc.max_steps = opt.max_steps;
    fs::path dir = opt.out / direction_name(d);
    fs::create_directories(dir);
    tc.checkpoint_path = dir / "checkpoint.twv";
    tc.log_path = dir / "log.csv";
    tc.on_step = [&, d](const LossRow& row) {
      if (opt.log_every == 0 || row.step % opt.log_every != 0) return;
      std::lock_guard lock(io);
      std::cerr << direction_name(d) << " epoch " << row.epoch << " step " << row.step
                << " rec " << row.l_rec << " kl " << row.l_kl << '\n';
    };
    tc.validate();
    train(DrawModel::initialized(opt.model, opt.seed), sampled_epochs(dataset), tc);
  };

  std::vector<std::exception_ptr> errors(directions.size());
  for (std::size_t start = 0; start < directions.size(); start += threads) {
    std::vector<std::jthread> pool;
    for (std::size_t i = start; i < std::min(start + threads, directions.size()); ++i)
      pool.emplace_back([&, i] {
        try {
          train_one(directions[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::cout << "trained " << directions.size() << " model(s) into " << opt.out.string() << '\n';
}

// reconstruct ---------------------------------------------------------------

struct ReconstructOptions {
  fs::path checkpoint;
  fs::path data;
  fs::path textons;
  std::size_t tiles = 8;
  std::size_t texton_count = kDefaultTextons;
  std::uint64_t seed = 0;
  fs::path out;
};

TextonDictionary textons_for(const fs::path& path, const std::vector<Tensor>& images,
                             const FilterBank& bank, std::size_t k, std::uint64_t seed) {
  if (!path.empty()) return load_textons(path);
  return learn_textons(images, bank, k, seed);
}

void run_reconstruct(const ReconstructOptions& opt) {
  Checkpoint ck = load_checkpoint(opt.checkpoint);
  Dataset dataset = load_dataset(load_dataset_config(opt.data));
  if (dataset.tile_size != ck.model.config.tile_size)
    throw DataError("checkpoint tile size " + std::to_string(ck.model.config.tile_size) +
                    " does not match dataset tile size " + std::to_string(dataset.tile_size));
  if (opt.tiles == 0) throw UsageError("--tiles must be positive");

  Rng pick = derive_rng(opt.seed, {3});
  std::vector<TileQuintet> quintets;
  for (std::size_t i = 0; i < opt.tiles; ++i)
    quintets.push_back(sample_quintet(dataset.textures[i % dataset.textures.size()],
                                      dataset.tile_size, pick));

  std::vector<Tensor> originals, outputs;
  for (std::size_t i = 0; i < quintets.size(); ++i) {
    const Tensor& target = quintets[i].neighbor(ck.direction);
    Rng rng = derive_rng(opt.seed, {4, static_cast<std::int64_t>(i)});
    originals.push_back(target);
    outputs.push_back(forward(ck.model, quintets[i].center, target, rng).output);
  }

  FilterBank bank = build_lm_bank();
  TextonDictionary dict = textons_for(opt.textons, originals, bank, opt.texton_count, opt.seed);
  fs::create_directories(opt.out);
  save_png(opt.out / "montage.png", montage({originals, outputs}));
  std::ofstream csv(opt.out / "metrics.csv");
  csv << "tile,texture_id,row,col,rmse,histogram,gram\n";
  for (std::size_t i = 0; i < quintets.size(); ++i) {
    double hist = histogram_distance(texton_histogram(originals[i], dict, bank),
                                     texton_histogram(outputs[i], dict, bank));
    csv << i << ',' << quintets[i].texture_id << ',' << quintets[i].row << ',' << quintets[i].col
        << ',' << fmt(rmse(originals[i], outputs[i])) << ',' << fmt(hist) << ','
        << fmt(gram_distance(originals[i], outputs[i], bank)) << '\n';
  }
  record_config(opt.out, "reconstruct",
                {{"checkpoint", fs::absolute(opt.checkpoint)},
                 {"data", fs::absolute(opt.data)},
                 {"direction", direction_name(ck.direction)},
                 {"textons", opt.textons.empty() ? json(nullptr) : json(fs::absolute(opt.textons))},
                 {"texton_count", dict.count()},
                 {"tiles", opt.tiles},
                 {"seed", opt.seed}});
  std::cout << "reconstructed " << quintets.size() << " tiles into " << opt.out.string() << '\n';
}

// expand --------------------------------------------------------------------

struct ExpandOptions {
  std::vector<fs::path> checkpoints;
  fs::path center;
  std::size_t size = 196;
  std::size_t blend = 0;
  std::uint64_t seed = 0;
  fs::path out;
};

void run_expand(const ExpandOptions& opt) {
  if (opt.checkpoints.size() != 4) throw UsageError("--checkpoints needs exactly four files");
  std::array<Checkpoint, 4> loaded;
  std::array<bool, 4> seen{};
  for (const fs::path& p : opt.checkpoints) {
    Checkpoint ck = load_checkpoint(p);
    std::size_t i = direction_index(ck.direction);
    if (seen[i]) throw DataError("two checkpoints for direction " + std::string(direction_name(ck.direction)));
    seen[i] = true;
    loaded[i] = std::move(ck);
  }
  DirectionModels models;
  for (std::size_t i = 0; i < 4; ++i) models.models[i] = &loaded[i].model;

  const std::size_t tile = loaded[0].model.config.tile_size;
  Tensor image = load_png(opt.center);
  if (image.dim(0) < tile || image.dim(1) < tile)
    throw DataError(opt.center.string() + " is smaller than one tile");
  Tensor center = crop(image, (image.dim(0) - tile) / 2, (image.dim(1) - tile) / 2, tile, tile);

  Expansion e = expand(center, models, opt.size, opt.seed);
  fs::create_directories(opt.out);
  save_png(opt.out / "expanded.png", opt.blend ? stitch(e.grid, opt.blend) : e.image);
  std::ofstream csv(opt.out / "steps.csv");
  csv << "index,row,col,src_row,src_col,direction,ring,wave\n";
  for (std::size_t i = 0; i < e.steps.size(); ++i) {
    const GenerationStep& s = e.steps[i];
    csv << i << ',' << s.row << ',' << s.col << ',' << s.src_row << ',' << s.src_col << ','
        << direction_name(s.direction) << ',' << s.ring << ',' << s.wave << '\n';
  }
  json paths = json::array();
  for (const auto& p : opt.checkpoints) paths.push_back(fs::absolute(p));
  record_config(opt.out, "expand",
                {{"checkpoints", paths},
                 {"center", fs::absolute(opt.center)},
                 {"size", opt.size},
                 {"tile_size", tile},
                 {"blend", opt.blend},
                 {"seed", opt.seed}});
  std::cout << "expanded to " << opt.size << "x" << opt.size << " with " << e.steps.size()
            << " generated tiles\n";
}

// eval ----------------------------------------------------------------------

struct EvalOptions {
  fs::path original;
  std::vector<fs::path> generated;
  std::vector<std::string> metrics;
  fs::path textons;
  std::size_t texton_count = kDefaultTextons;
  std::size_t filter_support = kDefaultSupport;
  std::uint64_t seed = 0;
  fs::path out;
};

void run_eval(EvalOptions opt) {
  if (opt.metrics.empty()) opt.metrics = {"gram", "histogram"};
  check_support(opt.filter_support);
  bool need_textons = std::find(opt.metrics.begin(), opt.metrics.end(), "histogram") != opt.metrics.end();

  FilterBank bank = build_lm_bank(opt.filter_support);
  Tensor original = load_png(opt.original);
  std::vector<Tensor> generated;
  for (const auto& p : opt.generated) generated.push_back(load_png(p));

  fs::create_directories(opt.out);
  std::optional<TextonDictionary> dict;
  std::optional<TextonHistogram> reference;
  if (need_textons) {
    dict = textons_for(opt.textons, {original}, bank, opt.texton_count, opt.seed);
    if (opt.textons.empty()) save_textons(opt.out / "textons.twv", *dict);
    reference = texton_histogram(original, *dict, bank);
  }

  std::ofstream csv(opt.out / "eval.csv");
  csv << "image_a,image_b,metric,value\n";
  for (std::size_t i = 0; i < generated.size(); ++i)
    for (const auto& metric : opt.metrics) {
      double value = metric == "gram"
                         ? gram_distance(original, generated[i], bank)
                         : histogram_distance(*reference, texton_histogram(generated[i], *dict, bank));
      csv << opt.original.string() << ',' << opt.generated[i].string() << ',' << metric << ','
          << fmt(value) << '\n';
      std::cout << opt.generated[i].filename().string() << ' ' << metric << ' ' << value << '\n';
    }

  json gen = json::array();
  for (const auto& p : opt.generated) gen.push_back(fs::absolute(p));
  record_config(opt.out, "eval",
                {{"original", fs::absolute(opt.original)},
                 {"generated", gen},
                 {"metrics", opt.metrics},
                 {"textons", opt.textons.empty() ? json(opt.out / "textons.twv")
                                                 : json(fs::absolute(opt.textons))},
                 {"texton_count", opt.texton_count},
                 {"filter_support", opt.filter_support},
                 {"seed", opt.seed}});
}

// textons -------------------------------------------------------------------

struct TextonOptions {
  std::vector<fs::path> images;
  std::size_t count = kDefaultTextons;
  std::size_t filter_support = kDefaultSupport;
  std::uint64_t seed = 0;
  fs::path out;
};

void run_textons(const TextonOptions& opt) {
  check_support(opt.filter_support);
  std::vector<Tensor> images;
  for (const auto& p : opt.images) images.push_back(load_png(p));
  TextonDictionary dict = learn_textons(images, build_lm_bank(opt.filter_support), opt.count, opt.seed);
  save_textons(opt.out, dict);
  json paths = json::array();
  for (const auto& p : opt.images) paths.push_back(fs::absolute(p));
  write_json(fs::absolute(opt.out).parent_path() / (opt.out.stem().string() + ".run_config.json"),
             {{"command", "textons"},
              {"images", paths},
              {"count", opt.count},
              {"filter_support", opt.filter_support},
              {"seed", opt.seed}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"texweave: direction-conditioned texture synthesis"};
  app.require_subcommand(1);

  auto* fb = app.add_subcommand("filterbank", "Filter bank utilities");
  fb->require_subcommand(1);
  ExportOptions export_opt;
  auto* fb_export = fb->add_subcommand("export", "Write every LM kernel as a PNG plus a manifest");
  fb_export->add_option("--support", export_opt.support, "Kernel support in pixels (odd)")
      ->capture_default_str();
  fb_export->add_option("--out", export_opt.out, "Output directory")->required();

  TrainOptions train_opt;
  auto* tr = app.add_subcommand("train", "Train direction models on a dataset");
  tr->add_option("--data", train_opt.data, "Dataset config JSON")->required();
  auto* dir_flag = tr->add_option("--direction", train_opt.direction, "north, south, east or west")
                       ->check(CLI::IsMember({"north", "south", "east", "west"}))
                       ->capture_default_str();
  tr->add_flag("--all-directions", train_opt.all_directions, "Train all four directions")
      ->excludes(dir_flag);
  tr->add_option("--loss", train_opt.loss, "Reconstruction loss")
      ->check(CLI::IsMember({"ce", "l2", "fb", "fltbnk", "gram"}))
      ->capture_default_str();
  tr->add_option("--epochs", train_opt.epochs)->capture_default_str();
  tr->add_option("--batch-size", train_opt.batch_size)->capture_default_str();
  tr->add_option("--max-steps", train_opt.max_steps, "Stop after this many steps (0: no limit)")
      ->capture_default_str();
  tr->add_option("--lr", train_opt.lr)->capture_default_str();
  tr->add_option("--lambda-tv", train_opt.lambda_tv)->capture_default_str();
  tr->add_option("--lambda-color", train_opt.lambda_color)->capture_default_str();
  tr->add_option("--gram-weights", train_opt.gram_weights, "Per-layer Gram weights");
  tr->add_option("--filter-support", train_opt.filter_support)->capture_default_str();
  tr->add_option("--seed", train_opt.seed)->capture_default_str();
  tr->add_option("--steps", train_opt.model.steps, "DRAW glimpses")->capture_default_str();
  tr->add_option("--z-dim", train_opt.model.z_dim)->capture_default_str();
  tr->add_option("--enc-hidden", train_opt.model.enc_hidden)->capture_default_str();
  tr->add_option("--dec-hidden", train_opt.model.dec_hidden)->capture_default_str();
  tr->add_option("--attention-grid", train_opt.model.attention_grid, "0 disables attention")
      ->capture_default_str();
  tr->add_option("--log-every", train_opt.log_every, "Progress line interval in steps (0: silent)")
      ->capture_default_str();
  tr->add_option("--out", train_opt.out, "Output directory")->required();

  ReconstructOptions rec_opt;
  auto* rc = app.add_subcommand("reconstruct", "Reconstruct sampled neighbor tiles");
  rc->add_option("--checkpoint", rec_opt.checkpoint)->required();
  rc->add_option("--data", rec_opt.data, "Dataset config JSON")->required();
  rc->add_option("--tiles", rec_opt.tiles)->capture_default_str();
  rc->add_option("--textons", rec_opt.textons, "Texton dictionary; learned from the tiles if absent")
      ;
  rc->add_option("--texton-count", rec_opt.texton_count)->capture_default_str();
  rc->add_option("--seed", rec_opt.seed)->capture_default_str();
  rc->add_option("--out", rec_opt.out, "Output directory")->required();

  ExpandOptions exp_opt;
  auto* ex = app.add_subcommand("expand", "Grow a texture outward from a center tile");
  ex->add_option("--checkpoints", exp_opt.checkpoints, "One checkpoint per direction")
      ->required()
      ->expected(4)
      ;
  ex->add_option("--center", exp_opt.center, "Center tile PNG (larger images are center-cropped)")
      ->required()
      ;
  ex->add_option("--size", exp_opt.size, "Output side length")->capture_default_str();
  ex->add_option("--blend", exp_opt.blend, "Seam cross-fade width in pixels")->capture_default_str();
  ex->add_option("--seed", exp_opt.seed)->capture_default_str();
  ex->add_option("--out", exp_opt.out, "Output directory")->required();

  EvalOptions eval_opt;
  auto* ev = app.add_subcommand("eval", "Distances between an original and generated textures");
  ev->add_option("--original", eval_opt.original)->required();
  ev->add_option("--generated", eval_opt.generated)->required();
  ev->add_option("--metric", eval_opt.metrics, "gram and/or histogram (default both)")
      ->check(CLI::IsMember({"gram", "histogram"}));
  ev->add_option("--textons", eval_opt.textons, "Texton dictionary; learned from --original if absent")
      ;
  ev->add_option("--texton-count", eval_opt.texton_count)->capture_default_str();
  ev->add_option("--filter-support", eval_opt.filter_support)->capture_default_str();
  ev->add_option("--seed", eval_opt.seed)->capture_default_str();
  ev->add_option("--out", eval_opt.out, "Output directory")->required();

  TextonOptions tex_opt;
  auto* tx = app.add_subcommand("textons", "Learn a texton dictionary from images");
  tx->add_option("--images", tex_opt.images)->required();
  tx->add_option("--count", tex_opt.count)->capture_default_str();
  tx->add_option("--filter-support", tex_opt.filter_support)->capture_default_str();
  tx->add_option("--seed", tex_opt.seed)->capture_default_str();
  tx->add_option("--out", tex_opt.out, "Dictionary file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*fb_export) run_filterbank_export(export_opt);
    else if (*tr) run_train(train_opt);
    else if (*rc) run_reconstruct(rec_opt);
    else if (*ex) run_expand(exp_opt);
    else if (*ev) run_eval(eval_opt);
    else if (*tx) run_textons(tex_opt);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure at step " << e.step() << ": " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
