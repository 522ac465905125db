#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "texweave/direction.hpp"
#include "texweave/draw.hpp"
#include "texweave/filterbank.hpp"
#include "texweave/losses.hpp"
#include "texweave/random.hpp"
#include "texweave/tiles.hpp"

namespace texweave {

struct LossRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double l_rec = 0.0;
  double l_kl = 0.0;
  double l_total = 0.0;
  double ms = 0.0;
};

struct LossLog {
  std::vector<LossRow> rows;

  static constexpr const char* kHeader = "epoch,step,l_rec,l_kl,l_total,ms";
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainConfig {
  LossSpec loss;
  Direction direction = Direction::north;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  // Stop after this many optimizer steps; 0 means run all epochs.
  std::size_t max_steps = 0;
  std::filesystem::path checkpoint_path;  // empty: no checkpoints
  std::filesystem::path log_path;         // empty: no CSV
  std::function<void(const LossRow&)> on_step;

  void validate() const;
};

// Produces the quintets of one epoch.
using EpochSource = std::function<std::vector<TileQuintet>(Rng&)>;

EpochSource fixed_quintets(std::vector<TileQuintet> quintets);
EpochSource sampled_epochs(Dataset dataset);

// Adaptive moment estimation over every parameter of a model.
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);

  // Applies one update from the parameters' grad buffers.
  void step(DrawModel& model);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double gradient_norm(const DrawModel& model);
// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(DrawModel& model, double max_norm);
void zero_gradients(DrawModel& model);

struct LossValues {
  double l_rec = 0.0;
  double l_kl = 0.0;
  double total() const { return l_rec + l_kl; }
};

// Forward pass on one quintet, then backward of weight * (L_c + L_z) into the
// model's grad buffers.
LossValues accumulate_gradients(DrawModel& model, const TileQuintet& quintet, Direction direction,
                                const LossSpec& loss, const FilterBank* bank, Rng& rng,
                                double weight);

// Loss of one quintet without touching gradients.
LossValues quintet_loss(const DrawModel& model, const TileQuintet& quintet, Direction direction,
                        const LossSpec& loss, const FilterBank* bank, Rng& rng);

struct TrainResult {
  DrawModel model;
  LossLog log;
};

// Throws NumericError on a non-finite loss or parameter; the last checkpoint
// written (if any) is left in place.
TrainResult train(DrawModel model, const EpochSource& data, const TrainConfig& config);

// Mean losses over the quintets. Item i draws its latent noise from
// derive_rng(seed, {i}), so repeated calls agree exactly.
LossValues evaluate(const DrawModel& model, const std::vector<TileQuintet>& data,
                    Direction direction, const LossSpec& loss, std::uint64_t seed = 0);

// Bank for the loss, or nullopt when the loss does not use one.
std::optional<FilterBank> bank_for(const LossSpec& loss);

}  // namespace texweave
