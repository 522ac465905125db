#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "texweave/checkpoint.hpp"
#include "texweave/errors.hpp"
#include "texweave/trainer.hpp"

using namespace texweave;
using texweave::testing::random_tensor;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("texweave_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DrawConfig tiny() {
  DrawConfig c;
  c.steps = 2;
  c.z_dim = 3;
  c.enc_hidden = 5;
  c.dec_hidden = 5;
  c.tile_size = 8;
  return c;
}

TileQuintet quintet(std::uint64_t seed, std::size_t tile = 8) {
  TextureImage img = make_texture(random_tensor({3 * tile, 3 * tile, 3}, seed, 0, 1),
                                  static_cast<int>(seed), "mem", tile);
  return quintet_at(img, tile, tile, tile);
}

bool same_params(const DrawModel& a, const DrawModel& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].second->shape() != pb[i].second->shape()) return false;
    if (std::memcmp(pa[i].second->data().data(), pb[i].second->data().data(),
                    pa[i].second->size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 1;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("zero epochs leave the model alone") {
  fs::path dir = scratch_dir("zero");
  DrawModel m = DrawModel::initialized(tiny(), 1);
  TrainConfig cfg = quick(0);
  cfg.checkpoint_path = dir / "ck.bin";
  cfg.log_path = dir / "log.csv";
  TrainResult r = train(m, fixed_quintets({quintet(1)}), cfg);
  CHECK(same_params(r.model, m));
  CHECK(r.log.rows.empty());
  CHECK(same_params(load_checkpoint(cfg.checkpoint_path).model, m));
  std::ifstream in(cfg.log_path);
  std::string header, extra;
  std::getline(in, header);
  CHECK(header == LossLog::kHeader);
  CHECK_FALSE(static_cast<bool>(std::getline(in, extra)));
}

TEST_CASE("L2 loss falls on a single quintet") {
  TrainConfig cfg = quick(50);
  cfg.loss.kind = LossKind::l2;
  TrainResult r = train(DrawModel::initialized(tiny(), 2), fixed_quintets({quintet(2)}), cfg);
  REQUIRE(r.log.rows.size() == 50);
  int violations = 0;
  for (std::size_t i = 1; i < r.log.rows.size(); ++i)
    if (r.log.rows[i].l_total >= r.log.rows[i - 1].l_total) ++violations;
  CAPTURE(violations);
  CHECK(violations <= 5);
  CHECK(r.log.rows.back().l_total < r.log.rows.front().l_total);
  for (const LossRow& row : r.log.rows) {
    CHECK(std::abs(row.l_total - (row.l_rec + row.l_kl)) <= 1e-9);
    CHECK(row.step == row.epoch);
  }
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    TrainConfig cfg = quick(3);
    cfg.batch_size = 2;
    cfg.loss.kind = LossKind::fltbnk;
    std::vector<TileQuintet> data = {quintet(3), quintet(4), quintet(5)};
    return train(DrawModel::initialized(tiny(), 3), fixed_quintets(data), cfg);
  };
  TrainResult a = run(), b = run();
  CHECK(same_params(a.model, b.model));
  REQUIRE(a.log.rows.size() == 6);  // 3 epochs x ceil(3 / 2) steps
  for (std::size_t i = 0; i < a.log.rows.size(); ++i)
    CHECK(a.log.rows[i].l_total == b.log.rows[i].l_total);
}

TEST_CASE("max_steps stops early") {
  TrainConfig cfg = quick(100);
  cfg.max_steps = 7;
  TrainResult r = train(DrawModel::initialized(tiny(), 4), fixed_quintets({quintet(6)}), cfg);
  CHECK(r.log.rows.size() == 7);
}

TEST_CASE("config validation") {
  DrawModel m(tiny());
  auto data = fixed_quintets({quintet(7)});
  TrainConfig cfg = quick(1);
  cfg.batch_size = 0;
  CHECK_THROWS(train(m, data, cfg));
  cfg = quick(1);
  cfg.learning_rate = 0;
  CHECK_THROWS(train(m, data, cfg));
  cfg = quick(1);
  cfg.clip_norm = -1;
  CHECK_THROWS(train(m, data, cfg));
  CHECK_THROWS_AS(train(m, fixed_quintets({}), quick(1)), DataError);
}

TEST_CASE("evaluate") {
  DrawModel m = DrawModel::initialized(tiny(), 5);
  std::vector<TileQuintet> data = {quintet(8), quintet(9)};
  LossSpec spec;
  LossValues a = evaluate(m, data, Direction::east, spec, 3);
  LossValues b = evaluate(m, data, Direction::east, spec, 3);
  CHECK(a.l_rec == b.l_rec);
  CHECK(a.l_kl == b.l_kl);

  Rng r0 = derive_rng(3, {0}), r1 = derive_rng(3, {1});
  LossValues q0 = quintet_loss(m, data[0], Direction::east, spec, nullptr, r0);
  LossValues q1 = quintet_loss(m, data[1], Direction::east, spec, nullptr, r1);
  LossValues single = evaluate(m, {data[0]}, Direction::east, spec, 3);
  CHECK(single.l_rec == q0.l_rec);
  CHECK(single.l_kl == q0.l_kl);
  CHECK(std::abs(a.l_rec - 0.5 * (q0.l_rec + q1.l_rec)) <= 1e-12);
  CHECK(std::abs(a.l_kl - 0.5 * (q0.l_kl + q1.l_kl)) <= 1e-12);

  DrawModel copy = m;
  evaluate(m, data, Direction::north, spec, 0);
  CHECK(same_params(copy, m));
  CHECK_THROWS_AS(evaluate(m, {}, Direction::north, spec), DataError);
}

TEST_CASE("gradient clipping") {
  DrawModel m = DrawModel::initialized(tiny(), 6);
  Rng rng(1);
  for (auto& [name, p] : m.parameters()) {
    auto g = p->grad();
    for (double& v : g) v = std::normal_distribution<double>(0, 1)(rng);
  }
  double before = gradient_norm(m);
  REQUIRE(before > 5.0);
  CHECK(clip_gradients(m, 5.0) == before);
  CHECK(gradient_norm(m) <= 5.0 + 1e-9);

  double small = gradient_norm(m);
  clip_gradients(m, 100.0);
  CHECK(gradient_norm(m) == small);
  zero_gradients(m);
  CHECK(gradient_norm(m) == 0.0);
}

TEST_CASE("clipping holds inside training") {
  TrainConfig cfg = quick(5);
  cfg.clip_norm = 1e-3;
  double worst = 0.0;
  // Replay the clipping rule on the accumulated gradients of each step.
  DrawModel m = DrawModel::initialized(tiny(), 7);
  TileQuintet q = quintet(10);
  Rng rng(2);
  for (int step = 0; step < 5; ++step) {
    zero_gradients(m);
    accumulate_gradients(m, q, Direction::south, cfg.loss, nullptr, rng, 1.0);
    clip_gradients(m, cfg.clip_norm);
    worst = std::max(worst, gradient_norm(m));
  }
  CHECK(worst <= cfg.clip_norm + 1e-9);
  CHECK_NOTHROW(train(DrawModel::initialized(tiny(), 7), fixed_quintets({q}), cfg));
}

TEST_CASE("first Adam step moves each parameter by the learning rate") {
  DrawModel m(tiny());
  Tensor& w = m.write_head.weight;
  for (std::size_t i = 0; i < w.size(); ++i) w.grad()[i] = (i % 2 ? 1.0 : -1.0) * (0.1 + i * 1e-3);
  Adam adam(0.01, 0.9, 0.999, 1e-8);
  adam.step(m);
  for (std::size_t i = 0; i < w.size(); ++i) {
    double g = (i % 2 ? 1.0 : -1.0) * (0.1 + i * 1e-3);
    // m_hat = g, v_hat = g^2 after bias correction.
    CHECK(w[i] == doctest::Approx(-0.01 * g / (std::abs(g) + 1e-8)).epsilon(1e-12));
  }
  for (double v : m.encoder.input.data()) CHECK(v == 0.0);
}

TEST_CASE("checkpoint round trip reproduces losses") {
  fs::path dir = scratch_dir("ckpt");
  TrainConfig cfg = quick(2);
  cfg.direction = Direction::west;
  cfg.loss.kind = LossKind::fltbnk;
  cfg.loss.lambda_tv = 0.002;
  cfg.checkpoint_path = dir / "west.ckpt";
  std::vector<TileQuintet> data = {quintet(11), quintet(12)};
  TrainResult r = train(DrawModel::initialized(tiny(), 8), fixed_quintets(data), cfg);
  Checkpoint ck = load_checkpoint(cfg.checkpoint_path);
  CHECK(ck.direction == Direction::west);
  CHECK(ck.loss.kind == LossKind::fltbnk);
  CHECK(ck.loss.lambda_tv == 0.002);
  CHECK(ck.seed == 11);
  CHECK(ck.model.config == tiny());
  CHECK(same_params(ck.model, r.model));
  LossValues a = evaluate(r.model, data, Direction::west, cfg.loss, 4);
  LossValues b = evaluate(ck.model, data, Direction::west, ck.loss, 4);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  CHECK_FALSE(fs::exists(dir / "west.ckpt.tmp"));
}

TEST_CASE("checkpoint validation") {
  fs::path dir = scratch_dir("ckpt_bad");
  DrawModel m = DrawModel::initialized(tiny(), 9);
  save_checkpoint(dir / "good.ckpt", Checkpoint{m, Direction::north, LossSpec{}, 1});

  std::ifstream in(dir / "good.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  CHECK_THROWS_AS(load_checkpoint(write("magic.ckpt", "XXXXXXXX" + bytes.substr(8))), DataError);
  CHECK_THROWS_AS(load_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() - 8))), DataError);
  std::string bumped = bytes;
  auto pos = bumped.find("\"version\":1");
  REQUIRE(pos != std::string::npos);
  bumped[pos + 10] = '2';
  CHECK_THROWS_AS(load_checkpoint(write("version.ckpt", bumped)), DataError);
  std::string reshaped = bytes;
  pos = reshaped.find("\"enc_hidden\":5");
  REQUIRE(pos != std::string::npos);
  reshaped[pos + 13] = '6';
  CHECK_THROWS_AS(load_checkpoint(write("shape.ckpt", reshaped)), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), DataError);
}

TEST_CASE("non-finite loss aborts and keeps the last checkpoint") {
  fs::path dir = scratch_dir("nan");
  TileQuintet good = quintet(13);
  TileQuintet poisoned = good;
  poisoned.center[0] = std::numeric_limits<double>::quiet_NaN();
  auto calls = std::make_shared<int>(0);
  EpochSource data = [=](Rng&) {
    return std::vector<TileQuintet>{(*calls)++ == 0 ? good : poisoned};
  };
  TrainConfig cfg = quick(3);
  cfg.checkpoint_path = dir / "ck.bin";
  DrawModel start = DrawModel::initialized(tiny(), 10);
  try {
    train(start, data, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.step() == 1);
  }
  Checkpoint ck = load_checkpoint(cfg.checkpoint_path);
  CHECK_FALSE(same_params(ck.model, start));
  for (auto& [name, p] : ck.model.parameters())
    for (double v : p->data()) CHECK(std::isfinite(v));
}

TEST_CASE("loss log CSV") {
  fs::path dir = scratch_dir("csv");
  TrainConfig cfg = quick(2);
  cfg.log_path = dir / "log.csv";
  train(DrawModel::initialized(tiny(), 12), fixed_quintets({quintet(14)}), cfg);
  std::ifstream in(cfg.log_path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,step,l_rec,l_kl,l_total,ms");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    double f[6];
    char c;
    std::istringstream s(line);
    s >> f[0] >> c >> f[1] >> c >> f[2] >> c >> f[3] >> c >> f[4] >> c >> f[5];
    CHECK(std::abs(f[4] - (f[2] + f[3])) <= 1e-9);
  }
  CHECK(rows == 2);
}
