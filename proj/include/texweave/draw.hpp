#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "texweave/losses.hpp"
#include "texweave/random.hpp"
#include "texweave/tensor.hpp"

namespace texweave {

struct DrawConfig {
  std::size_t steps = 10;
  std::size_t z_dim = 100;
  std::size_t enc_hidden = 256;
  std::size_t dec_hidden = 256;
  std::size_t tile_size = 28;
  std::size_t channels = 3;
  std::size_t attention_grid = 0;  // 0 disables attention

  bool attention() const { return attention_grid > 0; }
  std::size_t tile_elements() const { return tile_size * tile_size * channels; }
  Shape tile_shape() const { return {tile_size, tile_size, channels}; }
  // Length of the read vector fed to the encoder.
  std::size_t read_size() const;
  // Length of the patch emitted by the write head.
  std::size_t write_size() const;
  void validate() const;

  bool operator==(const DrawConfig&) const = default;
};

// Gated recurrent cell. Gate blocks along the 4H axis are ordered
// input, forget, output, candidate.
struct LstmWeights {
  Tensor input;      // in x 4H
  Tensor recurrent;  // H x 4H
  Tensor bias;       // 1 x 4H
};

struct LinearWeights {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

// All learnable parameters of one direction-conditioned DRAW network.
struct DrawModel {
  DrawConfig config;
  LstmWeights encoder;
  LstmWeights decoder;
  LinearWeights mu_head;
  LinearWeights log_sigma_head;
  LinearWeights write_head;
  LinearWeights attention_head;  // 5 outputs; only present with attention

  // Zero-valued parameters shaped for config.
  explicit DrawModel(DrawConfig config = {});

  // Weights ~ N(0, 0.05^2), biases 0, forget-gate biases 1.
  static DrawModel initialized(const DrawConfig& config, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  std::size_t parameter_count() const;
};

struct BoundLstm {
  Var input, recurrent, bias;
  std::size_t hidden = 0;
};

struct BoundLinear {
  Var weight, bias;
};

// Model parameters attached to a graph.
struct BoundDraw {
  DrawConfig config;
  BoundLstm encoder, decoder;
  BoundLinear mu_head, log_sigma_head, write_head, attention_head;
};

// Parameters receive gradients in their own grad buffers.
BoundDraw bind(Graph& graph, DrawModel& model);
// Parameters enter the graph as constants (inference).
BoundDraw bind_frozen(Graph& graph, const DrawModel& model);

struct CellState {
  Var h, c;
};

CellState zero_state(Graph& graph, std::size_t hidden);
CellState lstm_step(const BoundLstm& cell, Var input, CellState prev);
Var linear(const BoundLinear& layer, Var x);

// Normalized N x extent interpolation matrix of a 1-D Gaussian attention
// grid. centre_raw in [-1, 1] maps to [0, extent - 1]; the stride is
// exp(log_delta) * (stride_extent - 1) / (N - 1). Rows sum to 1.
Var attention_filter(Var centre_raw, Var log_delta, Var log_sigma2, std::size_t grid,
                     std::size_t extent, std::size_t stride_extent);

struct AttentionWindow {
  Var fx;     // N x W
  Var fy;     // N x H
  Var gamma;  // scalar intensity
};

// Window parameters emitted from a decoder hidden state.
AttentionWindow attention_window(const BoundDraw& draw, Var h_dec);

// Read vector from the input tile and the error image. Without attention it
// is x || err; with attention, gamma times two N x N glimpses.
Var read(const BoundDraw& draw, Var x, Var err, Var h_dec_prev);

CellState encode_step(const BoundDraw& draw, Var read_vec, Var h_dec_prev, CellState enc);

struct LatentSample {
  Var mu, sigma, z;
};

// mu = W h + b, sigma = exp(W' h + b'), z = mu + sigma * eps.
LatentSample sample_z(const BoundDraw& draw, Var h_enc, std::span<const double> eps);
LatentSample sample_z(const BoundDraw& draw, Var h_enc, Rng& rng);

CellState decode_step(const BoundDraw& draw, Var z, CellState dec);

// Canvas increment (tile shape) from the decoder state.
Var write(const BoundDraw& draw, Var h_dec);

struct DrawTrace {
  Var output;  // sigmoid(c_T)
  Var canvas;  // c_T
  LatentVars latents;
};

// Runs all steps: the encoder reads x_input and the error against x_target.
DrawTrace draw_forward(const BoundDraw& draw, const Tensor& x_input, const Tensor& x_target,
                       Rng& rng);

struct ForwardResult {
  Tensor output;
  std::vector<Tensor> mu;
  std::vector<Tensor> sigma;
};

ForwardResult forward(const DrawModel& model, const Tensor& x_input, const Tensor& x_target,
                      Rng& rng);

// Neighbor tile for x_input; the error channel is computed against a zero tile.
Tensor generate(const DrawModel& model, const Tensor& x_input, Rng& rng);

}  // namespace texweave
