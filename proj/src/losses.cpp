#include "texweave/losses.hpp"

#include <cmath>

#include "texweave/errors.hpp"

namespace texweave {

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::l2: return "l2";
    case LossKind::fb: return "fb";
    case LossKind::fltbnk: return "fltbnk";
    case LossKind::gram: return "gram";
  }
  return "unknown";
}

LossKind parse_loss(const std::string& name) {
  if (name == "ce" || name == "cross_entropy") return LossKind::cross_entropy;
  if (name == "l2") return LossKind::l2;
  if (name == "fb") return LossKind::fb;
  if (name == "fltbnk") return LossKind::fltbnk;
  if (name == "gram") return LossKind::gram;
  throw std::invalid_argument("unknown loss '" + name + "'");
}

namespace {

void require_same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_unit_interval(Var v, const char* what) {
  for (double x : v.value())
    if (!(x >= 0.0 && x <= 1.0))
      throw DomainError(std::string(what) + ": value " + std::to_string(x) + " outside [0, 1]");
}

Var one_minus(Var v) { return add_scalar(neg(v), 1.0); }

}  // namespace

Var l2_loss(Var y, Var y_hat) {
  require_same_shape(y, y_hat, "l2_loss");
  return sum(square(sub(y, y_hat)));
}

Var cross_entropy_loss(Var y, Var y_hat) {
  require_same_shape(y, y_hat, "cross_entropy_loss");
  require_unit_interval(y, "cross_entropy_loss target");
  require_unit_interval(y_hat, "cross_entropy_loss prediction");
  Var p = clamp(y_hat, kClampEpsilon, 1.0 - kClampEpsilon);
  Var ll = add(mul(y, log(p)), mul(one_minus(y), log(one_minus(p))));
  return neg(sum(ll));
}

Var fb_loss(Var y, Var y_hat, const FilterBank& bank) {
  require_same_shape(y, y_hat, "fb_loss");
  Var ry = respond(bank, normalize_image(y));
  Var ry_hat = respond(bank, normalize_image(y_hat));
  return sum(square(sub(ry, ry_hat)));
}

Var tv_loss(Var image) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("tv_loss expects H x W x C, got " + shape_string(s));
  const std::size_t H = s[0], W = s[1], C = s[2];
  auto x = image.value();
  auto at = [&](std::size_t h, std::size_t w, std::size_t c) { return (h * W + w) * C + c; };
  double total = 0.0;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t c = 0; c < C; ++c) {
        if (w + 1 < W) {
          double d = x[at(h, w + 1, c)] - x[at(h, w, c)];
          total += d * d;
        }
        if (h + 1 < H) {
          double d = x[at(h + 1, w, c)] - x[at(h, w, c)];
          total += d * d;
        }
      }
  return image.graph().record({1}, {total}, {image.id()}, [H, W, C](Graph& g, std::size_t self) {
    std::size_t in = g.inputs_of(self)[0];
    double gy = g.grad_of(self)[0];
    auto x = g.value_of(in);
    auto gx = g.grad_sink(in);
    auto at = [&](std::size_t h, std::size_t w, std::size_t c) { return (h * W + w) * C + c; };
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c) {
          if (w + 1 < W) {
            double d = 2.0 * gy * (x[at(h, w + 1, c)] - x[at(h, w, c)]);
            gx[at(h, w + 1, c)] += d;
            gx[at(h, w, c)] -= d;
          }
          if (h + 1 < H) {
            double d = 2.0 * gy * (x[at(h + 1, w, c)] - x[at(h, w, c)]);
            gx[at(h + 1, w, c)] += d;
            gx[at(h, w, c)] -= d;
          }
        }
  });
}

Var color_reg(Var y, Var y_hat) {
  require_same_shape(y, y_hat, "color_reg");
  if (y.shape().size() != 3) throw ShapeError("color_reg expects H x W x C images");
  return sum(square(sub(mean(y, {0, 1}), mean(y_hat, {0, 1}))));
}

Var fltbnk_loss(Var y, Var y_hat, const FilterBank& bank, double lambda_tv, double lambda_color) {
  if (lambda_tv < 0 || lambda_color < 0)
    throw std::invalid_argument("fltbnk_loss weights must be nonnegative");
  Var total = fb_loss(y, y_hat, bank);
  if (lambda_tv != 0) total = add(total, scale(tv_loss(y_hat), lambda_tv));
  if (lambda_color != 0) total = add(total, scale(color_reg(y, y_hat), lambda_color));
  return total;
}

FeatureExtractor lm_kind_extractor(const FilterBank& bank) {
  return [bank](Var image) {
    if (image.shape().size() != 3) throw ShapeError("extractor expects H x W x C images");
    const Shape s = image.shape();
    Var maps = respond(bank, image);
    Var flat = reshape(maps, {s[0] * s[1], maps.shape()[2]});
    std::vector<Var> layers;
    for (const FeatureLayer& layer : kind_layers(bank, s[2]))
      layers.push_back(select_columns(flat, layer.channels));
    return layers;
  };
}

Var gram(Var features) {
  if (features.shape().size() != 2)
    throw ShapeError("gram expects an M x N feature matrix, got " + shape_string(features.shape()));
  return matmul(transpose(features), features);
}

Tensor gram(const FeatureMapStack& stack, std::size_t layer) {
  if (layer >= stack.layers.size())
    throw std::out_of_range("layer " + std::to_string(layer) + " does not exist");
  Graph g;
  Var maps = g.constant(stack.maps);
  Var flat = reshape(maps, {stack.positions(), stack.maps.dim(2)});
  return gram(select_columns(flat, stack.layers[layer].channels)).tensor();
}

Var gram_loss(Var x, Var x_hat, const FeatureExtractor& extractor,
              const std::vector<double>& weights) {
  require_same_shape(x, x_hat, "gram_loss");
  std::vector<Var> fx = extractor(x);
  std::vector<Var> fy = extractor(x_hat);
  if (fx.empty()) throw std::invalid_argument("gram_loss extractor produced no layers");
  std::vector<double> w = weights;
  if (w.empty()) w.assign(fx.size(), 1.0 / static_cast<double>(fx.size()));
  if (w.size() != fx.size())
    throw ShapeError("gram_loss: " + std::to_string(w.size()) + " weights for " +
                     std::to_string(fx.size()) + " layers");
  Var total = x.graph().constant(Tensor::scalar(0.0));
  for (std::size_t l = 0; l < fx.size(); ++l) {
    if (w[l] < 0) throw std::invalid_argument("gram_loss weights must be nonnegative");
    if (w[l] == 0) continue;
    double m = static_cast<double>(fx[l].shape()[0]);
    double n = static_cast<double>(fx[l].shape()[1]);
    Var d = sum(square(sub(gram(fx[l]), gram(fy[l]))));
    total = add(total, scale(d, w[l] / (4.0 * n * n * m * m)));
  }
  return total;
}

Var kl_latent(const LatentVars& latents) {
  const std::size_t T = latents.mu.size();
  if (T == 0 || latents.sigma.size() != T)
    throw std::invalid_argument("kl_latent needs equal, nonzero numbers of mu and sigma steps");
  Graph& g = latents.mu.front().graph();
  Var acc = g.constant(Tensor::scalar(0.0));
  double dims = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    Var mu = latents.mu[t];
    Var sigma = latents.sigma[t];
    require_same_shape(mu, sigma, "kl_latent");
    for (double s : sigma.value())
      if (s <= 0.0) throw DomainError("kl_latent: nonpositive sigma " + std::to_string(s));
    Var term = sub(add(square(mu), square(sigma)), scale(log(sigma), 2.0));
    acc = add(acc, sum(term));
    dims += static_cast<double>(mu.size());
  }
  return add_scalar(scale(acc, 0.5), -0.5 * dims);
}

Var reconstruction_loss(const LossSpec& spec, const FilterBank* bank, Var y, Var y_hat) {
  auto need_bank = [&]() -> const FilterBank& {
    if (!bank) throw std::invalid_argument(std::string(loss_name(spec.kind)) + " needs a filter bank");
    return *bank;
  };
  switch (spec.kind) {
    case LossKind::cross_entropy: return cross_entropy_loss(y, y_hat);
    case LossKind::l2: return l2_loss(y, y_hat);
    case LossKind::fb: return fb_loss(y, y_hat, need_bank());
    case LossKind::fltbnk:
      return fltbnk_loss(y, y_hat, need_bank(), spec.lambda_tv, spec.lambda_color);
    case LossKind::gram:
      return gram_loss(y, y_hat, lm_kind_extractor(need_bank()), spec.gram_layer_weights);
  }
  throw std::invalid_argument("unknown loss kind");
}

}  // namespace texweave
