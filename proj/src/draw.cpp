#include "texweave/draw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "texweave/errors.hpp"

namespace texweave {

std::size_t DrawConfig::read_size() const {
  std::size_t patch = attention() ? attention_grid * attention_grid : tile_size * tile_size;
  return 2 * patch * channels;
}

std::size_t DrawConfig::write_size() const {
  std::size_t patch = attention() ? attention_grid * attention_grid : tile_size * tile_size;
  return patch * channels;
}

void DrawConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("DRAW needs at least one step");
  if (z_dim < 1 || enc_hidden < 1 || dec_hidden < 1 || tile_size < 1 || channels < 1)
    throw std::invalid_argument("DRAW dimensions must all be >= 1");
}

namespace {

constexpr std::size_t kAttentionParams = 5;
constexpr double kInitStd = 0.05;
constexpr double kForgetBias = 1.0;

LstmWeights zero_lstm(std::size_t in, std::size_t hidden) {
  return {Tensor({in, 4 * hidden}), Tensor({hidden, 4 * hidden}), Tensor({1, 4 * hidden})};
}

LinearWeights zero_linear(std::size_t in, std::size_t out) {
  return {Tensor({in, out}), Tensor({1, out})};
}

void fill_normal(Tensor& t, Rng& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  for (double& v : t.data()) v = dist(rng);
}

}  // namespace

DrawModel::DrawModel(DrawConfig cfg) : config(cfg) {
  config.validate();
  encoder = zero_lstm(config.read_size() + config.dec_hidden, config.enc_hidden);
  decoder = zero_lstm(config.z_dim, config.dec_hidden);
  mu_head = zero_linear(config.enc_hidden, config.z_dim);
  log_sigma_head = zero_linear(config.enc_hidden, config.z_dim);
  write_head = zero_linear(config.dec_hidden, config.write_size());
  if (config.attention()) attention_head = zero_linear(config.dec_hidden, kAttentionParams);
}

DrawModel DrawModel::initialized(const DrawConfig& config, std::uint64_t seed) {
  DrawModel model(config);
  Rng rng = derive_rng(seed, {0x1417});
  for (auto& [name, tensor] : model.parameters()) {
    if (name.ends_with(".bias")) continue;
    fill_normal(*tensor, rng);
  }
  for (LstmWeights* cell : {&model.encoder, &model.decoder}) {
    std::size_t hidden = cell->recurrent.dim(0);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) cell->bias[j] = kForgetBias;
  }
  return model;
}

std::vector<std::pair<std::string, Tensor*>> DrawModel::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"encoder.input", &encoder.input},        {"encoder.recurrent", &encoder.recurrent},
      {"encoder.bias", &encoder.bias},          {"decoder.input", &decoder.input},
      {"decoder.recurrent", &decoder.recurrent}, {"decoder.bias", &decoder.bias},
      {"mu_head.weight", &mu_head.weight},      {"mu_head.bias", &mu_head.bias},
      {"log_sigma_head.weight", &log_sigma_head.weight},
      {"log_sigma_head.bias", &log_sigma_head.bias},
      {"write_head.weight", &write_head.weight}, {"write_head.bias", &write_head.bias},
  };
  if (config.attention()) {
    out.emplace_back("attention_head.weight", &attention_head.weight);
    out.emplace_back("attention_head.bias", &attention_head.bias);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> DrawModel::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<DrawModel*>(this)->parameters()) out.emplace_back(name, t);
  return out;
}

std::size_t DrawModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : parameters()) n += t->size();
  return n;
}

namespace {

template <typename Leaf>
BoundDraw bind_with(const DrawModel& model, Leaf leaf) {
  BoundDraw b;
  b.config = model.config;
  auto lstm = [&](const LstmWeights& w) {
    return BoundLstm{leaf(w.input), leaf(w.recurrent), leaf(w.bias), w.recurrent.dim(0)};
  };
  auto lin = [&](const LinearWeights& w) { return BoundLinear{leaf(w.weight), leaf(w.bias)}; };
  b.encoder = lstm(model.encoder);
  b.decoder = lstm(model.decoder);
  b.mu_head = lin(model.mu_head);
  b.log_sigma_head = lin(model.log_sigma_head);
  b.write_head = lin(model.write_head);
  if (model.config.attention()) b.attention_head = lin(model.attention_head);
  return b;
}

}  // namespace

BoundDraw bind(Graph& graph, DrawModel& model) {
  return bind_with(model, [&](const Tensor& t) { return graph.parameter(const_cast<Tensor&>(t)); });
}

BoundDraw bind_frozen(Graph& graph, const DrawModel& model) {
  return bind_with(model, [&](const Tensor& t) { return graph.view(t); });
}

CellState zero_state(Graph& graph, std::size_t hidden) {
  return {graph.constant(Tensor({1, hidden})), graph.constant(Tensor({1, hidden}))};
}

CellState lstm_step(const BoundLstm& cell, Var input, CellState prev) {
  const std::size_t H = cell.hidden;
  Var gates = add(add(matmul(input, cell.input), matmul(prev.h, cell.recurrent)), cell.bias);
  Var in_gate = sigmoid(slice(gates, 0, H));
  Var forget_gate = sigmoid(slice(gates, H, H));
  Var out_gate = sigmoid(slice(gates, 2 * H, H));
  Var candidate = tanh(slice(gates, 3 * H, H));
  Var c = add(mul(forget_gate, prev.c), mul(in_gate, candidate));
  Var h = mul(out_gate, tanh(c));
  return {h, c};
}

Var linear(const BoundLinear& layer, Var x) { return add(matmul(x, layer.weight), layer.bias); }

Var attention_filter(Var centre_raw, Var log_delta, Var log_sigma2, std::size_t grid,
                     std::size_t extent, std::size_t stride_extent) {
  if (grid < 1 || extent < 1) throw ShapeError("attention grid and extent must be >= 1");
  if (centre_raw.size() != 1 || log_delta.size() != 1 || log_sigma2.size() != 1)
    throw ShapeError("attention parameters must be scalars");
  Graph& g = centre_raw.graph();

  const double centre_scale = (static_cast<double>(extent) - 1.0) / 2.0;
  const double stride_scale =
      grid > 1 ? (static_cast<double>(stride_extent) - 1.0) / (static_cast<double>(grid) - 1.0)
               : 0.0;
  const double centre = centre_scale * (centre_raw.item() + 1.0);
  const double delta = stride_scale * std::exp(log_delta.item());
  const double var = std::exp(log_sigma2.item());

  std::vector<double> mus(grid);
  std::vector<double> F(grid * extent);
  for (std::size_t i = 0; i < grid; ++i) {
    double offset = static_cast<double>(i) - (static_cast<double>(grid) - 1.0) / 2.0;
    double mu = centre + offset * delta;
    mus[i] = mu;
    // Shift exponents by their minimum so the largest weight is exactly 1;
    // normalization cancels the shift.
    double min_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < extent; ++a) {
      double d = static_cast<double>(a) - mu;
      min_d2 = std::min(min_d2, d * d);
    }
    double total = 0.0;
    double* row = F.data() + i * extent;
    for (std::size_t a = 0; a < extent; ++a) {
      double d = static_cast<double>(a) - mu;
      row[a] = std::exp(-(d * d - min_d2) / (2.0 * var));
      total += row[a];
    }
    total = std::max(total, kClampEpsilon);
    for (std::size_t a = 0; a < extent; ++a) row[a] /= total;
  }

  return g.record(
      {grid, extent}, std::move(F), {centre_raw.id(), log_delta.id(), log_sigma2.id()},
      [grid, extent, centre_scale, delta, var, mus = std::move(mus)](Graph& g, std::size_t self) {
        auto F = g.value_of(self);
        auto G = g.grad_of(self);
        double d_mu_total = 0.0, d_log_delta = 0.0, d_var = 0.0;
        for (std::size_t i = 0; i < grid; ++i) {
          const double* f = F.data() + i * extent;
          const double* gr = G.data() + i * extent;
          double gbar = 0.0;
          for (std::size_t a = 0; a < extent; ++a) gbar += gr[a] * f[a];
          double d_mu = 0.0, dv = 0.0;
          for (std::size_t a = 0; a < extent; ++a) {
            double d = static_cast<double>(a) - mus[i];
            double w = (gr[a] - gbar) * f[a];
            d_mu += w * d / var;
            dv += w * d * d / (2.0 * var * var);
          }
          double offset = static_cast<double>(i) - (static_cast<double>(grid) - 1.0) / 2.0;
          d_mu_total += d_mu;
          d_log_delta += d_mu * offset * delta;
          d_var += dv;
        }
        const auto& in = g.inputs_of(self);
        if (g.requires_grad(in[0])) g.grad_sink(in[0])[0] += d_mu_total * centre_scale;
        if (g.requires_grad(in[1])) g.grad_sink(in[1])[0] += d_log_delta;
        if (g.requires_grad(in[2])) g.grad_sink(in[2])[0] += d_var * var;
      });
}

AttentionWindow attention_window(const BoundDraw& draw, Var h_dec) {
  const DrawConfig& cfg = draw.config;
  if (!cfg.attention()) throw std::logic_error("attention_window on a model without attention");
  Var p = linear(draw.attention_head, h_dec);
  Var gx = slice(p, 0, 1), gy = slice(p, 1, 1);
  Var log_var = slice(p, 2, 1), log_delta = slice(p, 3, 1), log_gamma = slice(p, 4, 1);
  const std::size_t N = cfg.attention_grid, S = cfg.tile_size;
  return {attention_filter(gx, log_delta, log_var, N, S, S),
          attention_filter(gy, log_delta, log_var, N, S, S), exp(log_gamma)};
}

namespace {

// Fy * image_c * Fx^T for every channel.
Var glimpse(const AttentionWindow& win, Var image) {
  std::vector<Var> planes;
  for (std::size_t c = 0; c < image.shape()[2]; ++c)
    planes.push_back(matmul(matmul(win.fy, channel(image, c)), transpose(win.fx)));
  return stack_channels(planes);
}

}  // namespace

Var read(const BoundDraw& draw, Var x, Var err, Var h_dec_prev) {
  if (!draw.config.attention()) return concat({x, err});
  AttentionWindow win = attention_window(draw, h_dec_prev);
  return mul(concat({glimpse(win, x), glimpse(win, err)}), win.gamma);
}

CellState encode_step(const BoundDraw& draw, Var read_vec, Var h_dec_prev, CellState enc) {
  return lstm_step(draw.encoder, concat({read_vec, h_dec_prev}), enc);
}

LatentSample sample_z(const BoundDraw& draw, Var h_enc, std::span<const double> eps) {
  if (eps.size() != draw.config.z_dim)
    throw ShapeError("sample_z: noise length " + std::to_string(eps.size()) + " != z_dim " +
                     std::to_string(draw.config.z_dim));
  Graph& g = h_enc.graph();
  Var mu = linear(draw.mu_head, h_enc);
  Var sigma = exp(linear(draw.log_sigma_head, h_enc));
  Var noise = g.constant(Tensor({1, eps.size()}, std::vector<double>(eps.begin(), eps.end())));
  return {mu, sigma, add(mu, mul(sigma, noise))};
}

LatentSample sample_z(const BoundDraw& draw, Var h_enc, Rng& rng) {
  auto eps = standard_normals(rng, draw.config.z_dim);
  return sample_z(draw, h_enc, eps);
}

CellState decode_step(const BoundDraw& draw, Var z, CellState dec) {
  return lstm_step(draw.decoder, z, dec);
}

Var write(const BoundDraw& draw, Var h_dec) {
  const DrawConfig& cfg = draw.config;
  Var patch = linear(draw.write_head, h_dec);
  if (!cfg.attention()) return reshape(patch, cfg.tile_shape());
  const std::size_t N = cfg.attention_grid;
  AttentionWindow win = attention_window(draw, h_dec);
  Var w = reshape(patch, {N, N, cfg.channels});
  std::vector<Var> planes;
  for (std::size_t c = 0; c < cfg.channels; ++c)
    planes.push_back(matmul(matmul(transpose(win.fy), channel(w, c)), win.fx));
  return div(stack_channels(planes), win.gamma);
}

DrawTrace draw_forward(const BoundDraw& draw, const Tensor& x_input, const Tensor& x_target,
                       Rng& rng) {
  const DrawConfig& cfg = draw.config;
  if (x_input.shape() != cfg.tile_shape() || x_target.shape() != cfg.tile_shape())
    throw ShapeError("DRAW tiles must be " + shape_string(cfg.tile_shape()) + ", got " +
                     shape_string(x_input.shape()) + " and " + shape_string(x_target.shape()));
  Graph& g = draw.encoder.input.graph();
  Var x = g.view(x_input);
  Var target = g.view(x_target);
  Var canvas = g.constant(Tensor(cfg.tile_shape()));
  CellState enc = zero_state(g, cfg.enc_hidden);
  CellState dec = zero_state(g, cfg.dec_hidden);

  DrawTrace trace;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    Var err = sub(target, sigmoid(canvas));
    Var r = read(draw, x, err, dec.h);
    enc = encode_step(draw, r, dec.h, enc);
    LatentSample latent = sample_z(draw, enc.h, rng);
    dec = decode_step(draw, latent.z, dec);
    canvas = add(canvas, write(draw, dec.h));
    trace.latents.mu.push_back(latent.mu);
    trace.latents.sigma.push_back(latent.sigma);
    trace.latents.z.push_back(latent.z);
  }
  trace.canvas = canvas;
  trace.output = sigmoid(canvas);
  return trace;
}

ForwardResult forward(const DrawModel& model, const Tensor& x_input, const Tensor& x_target,
                      Rng& rng) {
  Graph g;
  BoundDraw draw = bind_frozen(g, model);
  DrawTrace trace = draw_forward(draw, x_input, x_target, rng);
  ForwardResult result;
  result.output = trace.output.tensor().reshaped(model.config.tile_shape());
  for (std::size_t t = 0; t < trace.latents.mu.size(); ++t) {
    result.mu.push_back(trace.latents.mu[t].tensor());
    result.sigma.push_back(trace.latents.sigma[t].tensor());
  }
  return result;
}

Tensor generate(const DrawModel& model, const Tensor& x_input, Rng& rng) {
  Tensor zeros(model.config.tile_shape());
  return forward(model, x_input, zeros, rng).output;
}

}  // namespace texweave
