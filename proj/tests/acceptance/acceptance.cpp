#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "support/draw_check.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "texweave/checkpoint.hpp"
#include "texweave/filterbank.hpp"
#include "texweave/image.hpp"
#include "texweave/losses.hpp"
#include "texweave/synthesis.hpp"
#include "texweave/texton.hpp"
#include "texweave/trainer.hpp"

using namespace texweave;
using namespace texweave::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

fs::path g_artifacts;

// Gradient suite -------------------------------------------------------------

Outcome gradient_suite() {
  auto start = Clock::now();
  const FilterBank bank = build_lm_bank();
  FeatureExtractor lm = lm_kind_extractor(bank);
  struct Case {
    std::string name;
    std::function<Var(Var, Var)> fn;
  };
  std::vector<Case> cases = {
      {"l2", [](Var y, Var x) { return l2_loss(y, x); }},
      {"cross_entropy", [](Var y, Var x) { return cross_entropy_loss(y, x); }},
      {"fb", [&](Var y, Var x) { return fb_loss(y, x, bank); }},
      {"tv", [](Var, Var x) { return tv_loss(x); }},
      {"color_reg", [](Var y, Var x) { return color_reg(y, x); }},
      {"fltbnk", [&](Var y, Var x) { return fltbnk_loss(y, x, bank, 1e-3, 10.0); }},
      {"gram", [&](Var y, Var x) { return gram_loss(y, x, lm, {}); }},
  };

  std::ostringstream detail;
  double worst = 0.0;
  for (const auto& c : cases) {
    double case_worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Tensor y = random_tensor({28, 28, 3}, 500 + seed, 0.05, 0.95);
      Tensor x0 = random_tensor({28, 28, 3}, 600 + seed, 0.05, 0.95);
      auto fn = [&](Var x) { return c.fn(x.graph().constant(y), x); };
      case_worst = std::max(case_worst, check_gradient_sampled(fn, x0, 24, 700 + seed).max_rel_error);
    }
    detail << c.name << "=" << sci(case_worst) << " ";
    worst = std::max(worst, case_worst);
  }

  // KL against mu and sigma directly, 2 steps x 3 latent dims.
  double kl_worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto fn = [](Var p) {
      LatentVars v;
      for (std::size_t t = 0; t < 2; ++t) {
        v.mu.push_back(slice(p, t * 3, 3));
        v.sigma.push_back(slice(p, 6 + t * 3, 3));
      }
      return kl_latent(v);
    };
    Tensor p = random_tensor({12}, 800 + seed, -1.5, 1.5);
    for (std::size_t i = 6; i < 12; ++i) p[i] = 0.4 + std::abs(p[i]);
    kl_worst = std::max(kl_worst, check_gradient(fn, p).max_rel_error);
  }
  detail << "kl_latent=" << sci(kl_worst) << " ";
  worst = std::max(worst, kl_worst);

  DrawConfig tiny;
  tiny.steps = 2;
  tiny.z_dim = 3;
  tiny.enc_hidden = 5;
  tiny.dec_hidden = 5;
  tiny.tile_size = 8;
  double draw_worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    draw_worst = std::max(draw_worst, check_draw_gradients(tiny, 900 + seed).max_rel_error);
  detail << "draw_tiny=" << sci(draw_worst);
  worst = std::max(worst, draw_worst);

  double elapsed = seconds_since(start);
  detail << "; worst " << sci(worst) << " in " << sci(elapsed) << " s";
  return {worst <= 1e-4 && elapsed < 120.0, detail.str()};
}

// KL correctness -------------------------------------------------------------

Outcome kl_correctness() {
  Graph g;
  bool pass = true;
  std::ostringstream detail;
  double worst_z = 0.0;
  for (std::uint64_t draw = 0; draw < 10; ++draw) {
    const std::size_t dims = 1 + draw % 4;
    Tensor mu = random_tensor({dims}, 1000 + draw, -1.5, 1.5);
    Tensor sigma = random_tensor({dims}, 1100 + draw, 0.3, 2.0);
    LatentVars v;
    v.mu.push_back(g.constant(mu));
    v.sigma.push_back(g.constant(sigma));
    double closed = kl_latent(v).item();
    auto est = monte_carlo_kl({mu.data().begin(), mu.data().end()},
                              {sigma.data().begin(), sigma.data().end()}, 1'000'000, 1200 + draw);
    double z = std::abs(closed - est.mean) / est.standard_error;
    worst_z = std::max(worst_z, z);
    if (z > 3.0) pass = false;
  }
  LatentVars unit;
  for (int t = 0; t < 3; ++t) {
    unit.mu.push_back(g.constant(Tensor({5}, 0.0)));
    unit.sigma.push_back(g.constant(Tensor({5}, 1.0)));
  }
  double at_prior = kl_latent(unit).item();
  pass = pass && at_prior == 0.0;
  detail << "10 draws, worst |closed - MC| = " << sci(worst_z) << " standard errors; KL(0, 1) = "
         << at_prior;
  return {pass, detail.str()};
}

// Filter bank ----------------------------------------------------------------

Outcome filter_bank_suite() {
  bool pass = true;
  std::ostringstream detail;
  double worst_sum = 0.0, worst_l1 = 0.0, worst_affine = 0.0;
  for (std::size_t support : {15u, 49u}) {
    FilterBank bank = build_lm_bank(support);
    if (bank.count() != 48) pass = false;
    const std::size_t area = support * support;
    for (std::size_t k = 0; k < bank.count(); ++k) {
      double sum = 0.0, l1 = 0.0;
      for (std::size_t i = 0; i < area; ++i) {
        sum += bank.kernels[k * area + i];
        l1 += std::abs(bank.kernels[k * area + i]);
      }
      if (bank.kinds[k] != KernelKind::gauss) worst_sum = std::max(worst_sum, std::abs(sum));
      worst_l1 = std::max(worst_l1, std::abs(l1 - 1.0));
    }
    Graph g;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Tensor y = random_tensor({20, 20, 3}, 1300 + seed, 0, 1);
      const double a = 0.2 + 0.7 * static_cast<double>(seed), b = -0.5 + 0.3 * static_cast<double>(seed);
      Tensor y2 = y;
      for (double& v : y2.data()) v = a * v + b;
      worst_affine = std::max(worst_affine, fb_loss(g.constant(y), g.constant(y2), bank).item());
    }
  }
  pass = pass && worst_sum <= 1e-10 && worst_l1 <= 1e-10 && worst_affine <= 1e-10;
  detail << "48 kernels at supports 15 and 49; max |sum| " << sci(worst_sum) << ", max |L1 - 1| "
         << sci(worst_l1) << ", max fb(y, a*y+b) " << sci(worst_affine);
  return {pass, detail.str()};
}

// Oracle equivalence ---------------------------------------------------------

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Outcome oracle_equivalence() {
  double conv = 0.0, mm = 0.0, gr = 0.0, chi = 0.0;
  std::size_t assign_mismatch = 0, hist_mismatch = 0;
  Graph g;
  for (std::uint64_t i = 0; i < 20; ++i) {
    Tensor img = random_tensor({3 + i % 6, 4 + i % 5, 1 + i % 3}, 1400 + i);
    const std::size_t k = 1 + 2 * (i % 3);
    Tensor kernels = random_tensor({1 + i % 4, k, k}, 1500 + i);
    conv = std::max(conv, max_abs_diff(conv2d_same(g.constant(img), kernels).value(),
                                       naive_conv(img, kernels).data()));

    Tensor a = random_tensor({1 + i % 5, 2 + i % 4}, 1600 + i);
    Tensor b = random_tensor({2 + i % 4, 1 + i % 6}, 1700 + i);
    mm = std::max(mm, max_abs_diff(matmul(g.constant(a), g.constant(b)).value(), naive_matmul(a, b).data()));

    Tensor f = random_tensor({2 + i % 7, 1 + i % 5}, 1800 + i);
    gr = std::max(gr, max_abs_diff(gram(g.constant(f)).value(), naive_gram(f).data()));

    std::mt19937_64 rng(1900 + i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t bins = 2 + i % 9;
    std::vector<double> p(bins), q(bins);
    double sp = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < bins; ++j) {
      sp += (p[j] = j % 4 == 3 ? 0.0 : u(rng));
      sq += (q[j] = j % 4 == 3 ? 0.0 : u(rng));
    }
    for (std::size_t j = 0; j < bins; ++j) p[j] /= sp, q[j] /= sq;
    chi = std::max(chi, std::abs(histogram_distance({p}, {q}) - naive_chi2(p, q)));

    Tensor points = random_tensor({30 + i, 3 + i % 4}, 2000 + i);
    Tensor centers = random_tensor({2 + i % 6, 3 + i % 4}, 2100 + i);
    // Duplicate a center so ties are exercised.
    for (std::size_t t = 0; t < centers.dim(1); ++t) centers.at(centers.dim(0) - 1, t) = centers.at(0, t);
    if (assign_nearest(points, centers) != naive_assign(points, centers)) ++assign_mismatch;
  }

  // Whole-image texton histograms against the per-pixel loop.
  const FilterBank bank = build_lm_bank(9);
  for (std::uint64_t i = 0; i < 20; ++i) {
    Tensor img = random_tensor({6, 6, 3}, 2200 + i, 0, 1);
    Tensor features = texton_features(img, bank);
    TextonDictionary dict{random_tensor({4, features.dim(1)}, 2300 + i, -1, 1), bank.fingerprint()};
    for (std::size_t t = 0; t < features.dim(1); ++t) {
      dict.centers.at(0, t) = features.at(i % 36, t);
      dict.centers.at(1, t) = features.at((i * 7 + 3) % 36, t);
    }
    auto labels = naive_assign(features, dict.centers);
    std::vector<double> want(4, 0.0);
    for (auto l : labels) want[l] += 1.0 / 36.0;
    auto got = texton_histogram(img, dict, bank).bins;
    if (max_abs_diff(got, want) > 1e-10) ++hist_mismatch;
  }

  bool pass = conv <= 1e-10 && mm <= 1e-10 && gr <= 1e-10 && chi <= 1e-10 && assign_mismatch == 0 &&
              hist_mismatch == 0;
  std::ostringstream detail;
  detail << "20 instances each; conv " << sci(conv) << ", matmul " << sci(mm) << ", gram " << sci(gr)
         << ", chi2 " << sci(chi) << ", assignment mismatches " << assign_mismatch
         << ", histogram mismatches " << hist_mismatch;
  return {pass, detail.str()};
}

// Overfit --------------------------------------------------------------------

Tensor smooth_texture(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n, n, 3});
  double fr[3][2], ph[3];
  for (int c = 0; c < 3; ++c) {
    fr[c][0] = 0.1 + 0.3 * u(rng);
    fr[c][1] = 0.1 + 0.3 * u(rng);
    ph[c] = 6.28 * u(rng);
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col)
      for (std::size_t c = 0; c < 3; ++c)
        t.at(r, col, c) = 0.5 + 0.35 * std::sin(fr[c][0] * r + ph[c]) * std::cos(fr[c][1] * col);
  return t;
}

Outcome overfit() {
  auto start = Clock::now();
  TextureImage tex = make_texture(smooth_texture(84, 7), 0, "smooth", 28);
  TileQuintet q = quintet_at(tex, 28, 28, 28);
  const Direction dir = Direction::east;

  TrainConfig tc;
  tc.loss.kind = LossKind::l2;
  tc.direction = dir;
  tc.epochs = 2000;
  tc.batch_size = 1;
  tc.seed = 11;
  fs::path dir_out = g_artifacts / "overfit";
  fs::create_directories(dir_out);
  tc.log_path = dir_out / "log.csv";
  TrainResult result = train(DrawModel::initialized(DrawConfig{}, 11), fixed_quintets({q}), tc);

  Rng rng = derive_rng(11, {99});
  Tensor out = forward(result.model, q.center, q.neighbor(dir), rng).output;
  double err = rmse(out, q.neighbor(dir));
  save_png(dir_out / "target_vs_output.png", montage({{q.center, q.neighbor(dir), out}}));
  double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << result.log.rows.size() << " steps, RMSE " << sci(err) << " (limit 0.08), "
         << sci(elapsed) << " s";
  return {err <= 0.08 && result.log.rows.size() <= 2000, detail.str()};
}

// FLTBNK vs L2 directional claim --------------------------------------------

Tensor checkerboard(std::size_t n, std::size_t period) {
  Tensor t({n, n, 3});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      bool on = ((r / period) + (c / period)) % 2;
      for (std::size_t ch = 0; ch < 3; ++ch) t.at(r, c, ch) = on ? 0.85 - 0.1 * ch : 0.15 + 0.05 * ch;
    }
  return t;
}

Tensor stripes(std::size_t n, double period) {
  Tensor t({n, n, 3});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      double v = 0.5 + 0.4 * std::sin(2.0 * M_PI * (static_cast<double>(r) + 0.5 * c) / period);
      for (std::size_t ch = 0; ch < 3; ++ch) t.at(r, c, ch) = ch == 1 ? 1.0 - v : v;
    }
  return t;
}

struct RegularRun {
  double fltbnk = 0.0, l2 = 0.0;
};

std::array<DrawModel, 4> train_directions(const Dataset& data, LossKind kind, const DrawConfig& cfg,
                                          std::size_t steps, std::uint64_t seed, const fs::path& out) {
  std::array<DrawModel, 4> models;
  std::array<std::exception_ptr, 4> errors;
  std::vector<std::jthread> pool;
  for (std::size_t i = 0; i < 4; ++i)
    pool.emplace_back([&, i] {
      try {
        TrainConfig tc;
        tc.loss.kind = kind;
        tc.direction = static_cast<Direction>(i);
        tc.epochs = steps;
        tc.batch_size = 4;
        tc.max_steps = steps;
        tc.seed = seed;
        tc.log_path = out / (std::string(direction_name(tc.direction)) + "_log.csv");
        models[i] = train(DrawModel::initialized(cfg, seed + i), sampled_epochs(data), tc).model;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return models;
}

Outcome fltbnk_vs_l2() {
  auto start = Clock::now();
  DrawConfig cfg;
  cfg.steps = 6;
  cfg.z_dim = 16;
  cfg.enc_hidden = 64;
  cfg.dec_hidden = 64;
  const std::size_t steps = 150;
  const FilterBank bank = build_lm_bank();

  std::vector<std::pair<std::string, Tensor>> sources = {{"checkerboard", checkerboard(140, 9)},
                                                         {"stripes", stripes(140, 11.0)}};
  std::ofstream csv(g_artifacts / "fltbnk_vs_l2.csv");
  csv << "texture,loss,histogram_distance\n";
  std::ostringstream detail;
  std::size_t wins = 0;
  for (auto& [name, image] : sources) {
    fs::path out = g_artifacts / "fltbnk_vs_l2" / name;
    fs::create_directories(out);
    save_png(out / "source.png", image);
    Dataset data{28, {make_texture(image, 0, name, 28)}, {8}};
    TextonDictionary dict = learn_textons({image}, bank, 16, 3);
    TextonHistogram reference = texton_histogram(image, dict, bank);
    Tensor center = crop(image, 56, 56, 28, 28);
    RegularRun run;
    for (LossKind kind : {LossKind::fltbnk, LossKind::l2}) {
      fs::path sub = out / loss_name(kind);
      fs::create_directories(sub);
      auto models = train_directions(data, kind, cfg, steps, 21, sub);
      DirectionModels view;
      for (std::size_t i = 0; i < 4; ++i) view.models[i] = &models[i];
      Expansion e = expand(center, view, 196, 5);
      save_png(sub / "expanded.png", e.image);
      double d = histogram_distance(reference, texton_histogram(e.image, dict, bank));
      (kind == LossKind::fltbnk ? run.fltbnk : run.l2) = d;
      csv << name << ',' << loss_name(kind) << ',' << d << '\n';
    }
    wins += run.fltbnk <= run.l2;
    detail << name << " fltbnk " << sci(run.fltbnk) << " vs l2 " << sci(run.l2) << "; ";
  }
  detail << "artifacts in " << (g_artifacts / "fltbnk_vs_l2").string() << ", " << sci(seconds_since(start))
         << " s";
  return {wins >= 1, detail.str()};
}

// Expansion contract ---------------------------------------------------------

int run_cli(const std::string& args) {
  std::string cmd = std::string(TEXWEAVE_CLI) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome expansion_contract() {
  fs::path dir = g_artifacts / "expansion";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Tensor source = smooth_texture(112, 3);
  save_png(dir / "source.png", source);
  std::ofstream(dir / "data.json")
      << R"({"tile_size": 28, "textures": [{"path": "source.png", "samples_per_epoch": 2}]})";
  std::string train = "train --data " + (dir / "data.json").string() +
                      " --all-directions --epochs 1 --batch-size 2 --steps 3 --z-dim 4 --enc-hidden 12"
                      " --dec-hidden 12 --log-every 0 --seed 2 --out " + (dir / "models").string();
  if (run_cli(train) != 0) return {false, "cli train failed"};
  Tensor center = crop(load_png(dir / "source.png"), 40, 40, 28, 28);
  save_png(dir / "center.png", center);
  std::string ckpts;
  for (const char* d : {"north", "south", "east", "west"})
    ckpts += " " + (dir / "models" / d / "checkpoint.twv").string();
  for (const char* name : {"a", "b"})
    if (run_cli("expand --checkpoints" + ckpts + " --center " + (dir / "center.png").string() +
                " --size 196 --seed 17 --out " + (dir / name).string()) != 0)
      return {false, "cli expand failed"};

  bool deterministic = slurp(dir / "a" / "expanded.png") == slurp(dir / "b" / "expanded.png");
  Tensor image = load_png(dir / "a" / "expanded.png");
  bool shape = image.shape() == Shape{196, 196, 3};

  std::set<std::pair<int, int>> cells = {{0, 0}};
  std::size_t generated = 0;
  {
    std::ifstream in(dir / "a" / "steps.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      int idx, r, c;
      if (std::sscanf(line.c_str(), "%d,%d,%d", &idx, &r, &c) == 3) cells.insert({r, c}), ++generated;
    }
  }
  bool grid = cells.size() == 49 && cells.begin()->first == -3 && cells.rbegin()->second == 3;

  // Same models through the library: every placed tile is recovered by cropping.
  std::array<Checkpoint, 4> cks;
  DirectionModels view;
  for (std::size_t i = 0; i < 4; ++i) {
    cks[i] = load_checkpoint(dir / "models" / direction_name(static_cast<Direction>(i)) / "checkpoint.twv");
    view.models[direction_index(cks[i].direction)] = &cks[i].model;
  }
  Expansion e = expand(center, view, 196, 17);
  bool lossless = e.grid.cells.size() == 49;
  for (const auto& [key, tile] : e.grid.cells) {
    Tensor back = crop(e.image, 28 * (key.first + 3), 28 * (key.second + 3), 28, 28);
    lossless = lossless && std::memcmp(back.data().data(), tile.data().data(), tile.size() * sizeof(double)) == 0;
  }
  bool matches_cli = true;
  for (std::size_t i = 0; i < image.size(); ++i)
    matches_cli = matches_cli && image[i] == std::round(std::clamp(e.image[i], 0.0, 1.0) * 255.0) / 255.0;

  std::ostringstream detail;
  detail << "image " << (shape ? "196x196" : "wrong shape") << ", " << cells.size() << " cells, "
         << generated << " generated, deterministic " << (deterministic ? "yes" : "no")
         << ", crop-back exact " << (lossless ? "yes" : "no") << ", CLI equals library "
         << (matches_cli ? "yes" : "no");
  return {shape && grid && generated == 48 && deterministic && lossless && matches_cli, detail.str()};
}

// Checkpoint round trip ------------------------------------------------------

Outcome checkpoint_round_trip() {
  fs::path dir = g_artifacts / "checkpoint";
  fs::create_directories(dir);
  TextureImage tex = make_texture(smooth_texture(100, 5), 0, "smooth", 28);
  Rng rng(4);
  std::vector<TileQuintet> quintets;
  for (int i = 0; i < 6; ++i) quintets.push_back(sample_quintet(tex, 28, rng));

  DrawConfig cfg;
  cfg.steps = 4;
  cfg.z_dim = 8;
  cfg.enc_hidden = 24;
  cfg.dec_hidden = 24;
  cfg.attention_grid = 5;
  bool pass = true;
  std::ostringstream detail;
  for (LossKind kind : {LossKind::l2, LossKind::cross_entropy, LossKind::fltbnk, LossKind::gram}) {
    TrainConfig tc;
    tc.loss.kind = kind;
    tc.direction = Direction::west;
    tc.epochs = 2;
    tc.batch_size = 3;
    tc.seed = 8;
    tc.checkpoint_path = dir / (std::string(loss_name(kind)) + ".twv");
    TrainResult result = train(DrawModel::initialized(cfg, 8), fixed_quintets(quintets), tc);
    Checkpoint loaded = load_checkpoint(tc.checkpoint_path);
    LossValues before = evaluate(result.model, quintets, tc.direction, tc.loss, 3);
    LossValues after = evaluate(loaded.model, quintets, loaded.direction, loaded.loss, 3);
    bool same = std::memcmp(&before.l_rec, &after.l_rec, sizeof(double)) == 0 &&
                std::memcmp(&before.l_kl, &after.l_kl, sizeof(double)) == 0;
    pass = pass && same;
    detail << loss_name(kind) << (same ? " identical" : " DIFFERS") << "; ";
  }
  return {pass, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  g_artifacts = fs::absolute("acceptance_artifacts");
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--artifacts" && i + 1 < argc) g_artifacts = fs::absolute(argv[++i]);
    else selected.insert(std::atoi(argv[i]));
  }
  fs::create_directories(g_artifacts);

  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "gradient suite", gradient_suite},
      {2, "KL correctness", kl_correctness},
      {3, "filter bank", filter_bank_suite},
      {4, "oracle equivalence", oracle_equivalence},
      {5, "overfit reproduction", overfit},
      {6, "FLTBNK vs L2 histogram distance", fltbnk_vs_l2},
      {7, "expansion contract", expansion_contract},
      {8, "checkpoint round trip", checkpoint_round_trip},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << o.detail
              << std::endl;
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
