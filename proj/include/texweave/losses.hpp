#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "texweave/filterbank.hpp"
#include "texweave/tensor.hpp"

namespace texweave {

enum class LossKind { cross_entropy, l2, fb, fltbnk, gram };

const char* loss_name(LossKind kind);
// Accepts the long names above plus the CLI short form "ce".
LossKind parse_loss(const std::string& name);

// Reconstruction loss selection and its weights.
struct LossSpec {
  LossKind kind = LossKind::l2;
  double lambda_tv = 1e-3;
  double lambda_color = 10.0;
  std::vector<double> gram_layer_weights;  // empty: uniform over extractor layers
  std::size_t filter_support = kDefaultSupport;
};

// Sum of squared differences.
Var l2_loss(Var y, Var y_hat);

// -sum(y log p + (1 - y) log(1 - p)), p = y_hat clamped to [1e-8, 1 - 1e-8].
// Both inputs must lie in [0, 1].
Var cross_entropy_loss(Var y, Var y_hat);

// Squared difference of filter responses of the normalized images.
Var fb_loss(Var y, Var y_hat, const FilterBank& bank);

// Squared forward differences along both image axes, summed over channels.
Var tv_loss(Var image);

// Sum over channels of the squared difference of per-channel means.
Var color_reg(Var y, Var y_hat);

Var fltbnk_loss(Var y, Var y_hat, const FilterBank& bank, double lambda_tv, double lambda_color);

// Maps an image to one or more layers of features, each M_l x N_l (positions
// by feature maps).
using FeatureExtractor = std::function<std::vector<Var>(Var image)>;

// LM responses of the raw image, partitioned by kernel kind into four layers.
FeatureExtractor lm_kind_extractor(const FilterBank& bank);

// Gram matrix F^T F of an M x N feature matrix (N x N result).
Var gram(Var features);
// Gram matrix of one layer of a response stack.
Tensor gram(const FeatureMapStack& stack, std::size_t layer);

// sum_l w_l / (4 N_l^2 M_l^2) * sum_ij (G_ij - G^_ij)^2
Var gram_loss(Var x, Var x_hat, const FeatureExtractor& extractor,
              const std::vector<double>& weights);

// Per-step Gaussian posterior parameters of the latent code.
struct LatentVars {
  std::vector<Var> mu;
  std::vector<Var> sigma;
  std::vector<Var> z;
};

// 0.5 * sum_t sum_d (mu^2 + sigma^2 - log sigma^2) - T * z_dim / 2.
Var kl_latent(const LatentVars& latents);

inline Var total_loss(Var reconstruction, Var latent) { return add(reconstruction, latent); }

// Evaluates the reconstruction loss selected by spec. The filter bank is
// required for fb, fltbnk and gram.
Var reconstruction_loss(const LossSpec& spec, const FilterBank* bank, Var y, Var y_hat);

}  // namespace texweave
