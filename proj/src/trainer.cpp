#include "texweave/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>

#include "texweave/checkpoint.hpp"
#include "texweave/errors.hpp"

namespace texweave {

void LossLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kHeader << '\n' << std::setprecision(17);
  for (const auto& r : rows)
    out << r.epoch << ',' << r.step << ',' << r.l_rec << ',' << r.l_kl << ',' << r.l_total << ','
        << std::setprecision(6) << r.ms << std::setprecision(17) << '\n';
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(clip_norm > 0)) throw std::invalid_argument("clip norm must be positive");
  if (loss.lambda_tv < 0 || loss.lambda_color < 0)
    throw std::invalid_argument("loss weights must be nonnegative");
}

EpochSource fixed_quintets(std::vector<TileQuintet> quintets) {
  auto shared = std::make_shared<const std::vector<TileQuintet>>(std::move(quintets));
  return [shared](Rng&) { return *shared; };
}

EpochSource sampled_epochs(Dataset dataset) {
  auto shared = std::make_shared<const Dataset>(std::move(dataset));
  return [shared](Rng& rng) {
    return build_epoch(shared->textures, shared->tile_size, shared->samples_per_epoch, rng);
  };
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(DrawModel& model) {
  auto params = model.parameters();
  if (m_.empty()) {
    for (auto& [name, p] : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

double gradient_norm(const DrawModel& model) {
  double acc = 0.0;
  for (auto& [name, p] : model.parameters())
    for (double g : p->grad()) acc += g * g;
  return std::sqrt(acc);
}

double clip_gradients(DrawModel& model, double max_norm) {
  double norm = gradient_norm(model);
  if (norm > max_norm) {
    double f = max_norm / norm;
    for (auto& [name, p] : model.parameters())
      if (p->has_grad())
        for (double& g : p->grad()) g *= f;
  }
  return norm;
}

void zero_gradients(DrawModel& model) {
  for (auto& [name, p] : model.parameters()) p->zero_grad();
}

std::optional<FilterBank> bank_for(const LossSpec& loss) {
  switch (loss.kind) {
    case LossKind::fb:
    case LossKind::fltbnk:
    case LossKind::gram: return build_lm_bank(loss.filter_support);
    default: return std::nullopt;
  }
}

LossValues accumulate_gradients(DrawModel& model, const TileQuintet& quintet, Direction direction,
                                const LossSpec& loss, const FilterBank* bank, Rng& rng,
                                double weight) {
  Graph g;
  BoundDraw draw = bind(g, model);
  const Tensor& target = quintet.neighbor(direction);
  DrawTrace trace = draw_forward(draw, quintet.center, target, rng);
  Var rec = reconstruction_loss(loss, bank, g.view(target), trace.output);
  Var kl = kl_latent(trace.latents);
  Var root = scale(total_loss(rec, kl), weight);
  LossValues values{rec.item(), kl.item()};
  if (std::isfinite(values.total())) g.backward(root);
  return values;
}

LossValues quintet_loss(const DrawModel& model, const TileQuintet& quintet, Direction direction,
                        const LossSpec& loss, const FilterBank* bank, Rng& rng) {
  Graph g;
  BoundDraw draw = bind_frozen(g, model);
  const Tensor& target = quintet.neighbor(direction);
  DrawTrace trace = draw_forward(draw, quintet.center, target, rng);
  Var rec = reconstruction_loss(loss, bank, g.view(target), trace.output);
  Var kl = kl_latent(trace.latents);
  return {rec.item(), kl.item()};
}

namespace {

bool parameters_finite(const DrawModel& model) {
  for (auto& [name, p] : model.parameters())
    for (double v : p->data())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TrainResult train(DrawModel model, const EpochSource& data, const TrainConfig& cfg) {
  cfg.validate();
  std::optional<FilterBank> bank = bank_for(cfg.loss);
  const FilterBank* bank_ptr = bank ? &*bank : nullptr;
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
  Rng data_rng = derive_rng(cfg.seed, {1});
  Rng noise_rng = derive_rng(cfg.seed, {2});

  auto save = [&](const DrawModel& m) {
    if (!cfg.checkpoint_path.empty()) {
      if (cfg.checkpoint_path.has_parent_path())
        std::filesystem::create_directories(cfg.checkpoint_path.parent_path());
      save_checkpoint(cfg.checkpoint_path, Checkpoint{m, cfg.direction, cfg.loss, cfg.seed});
    }
  };

  TrainResult result{std::move(model), {}};
  DrawModel& m = result.model;
  zero_gradients(m);
  std::size_t step = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    std::vector<TileQuintet> quintets = data(data_rng);
    if (quintets.empty()) throw DataError("training epoch produced no quintets");
    for (std::size_t start = 0; start < quintets.size() && !done; start += cfg.batch_size) {
      auto t0 = std::chrono::steady_clock::now();
      std::size_t end = std::min(start + cfg.batch_size, quintets.size());
      double weight = 1.0 / static_cast<double>(end - start);
      LossRow row;
      row.epoch = epoch;
      row.step = step;
      for (std::size_t i = start; i < end; ++i) {
        LossValues v =
            accumulate_gradients(m, quintets[i], cfg.direction, cfg.loss, bank_ptr, noise_rng, weight);
        if (!std::isfinite(v.total()))
          throw NumericError("non-finite loss at step " + std::to_string(step), static_cast<long>(step));
        row.l_rec += weight * v.l_rec;
        row.l_kl += weight * v.l_kl;
      }
      row.l_total = row.l_rec + row.l_kl;
      double norm = clip_gradients(m, cfg.clip_norm);
      if (!std::isfinite(norm))
        throw NumericError("non-finite gradient at step " + std::to_string(step), static_cast<long>(step));
      adam.step(m);
      zero_gradients(m);
      if (!parameters_finite(m))
        throw NumericError("non-finite parameter after step " + std::to_string(step),
                           static_cast<long>(step));
      row.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      result.log.rows.push_back(row);
      if (cfg.on_step) cfg.on_step(row);
      ++step;
      if (cfg.max_steps && step >= cfg.max_steps) done = true;
    }
    save(m);
    if (!cfg.log_path.empty()) result.log.write_csv(cfg.log_path);
  }
  for (auto& [name, p] : m.parameters()) p->drop_grad();
  save(m);
  if (!cfg.log_path.empty()) result.log.write_csv(cfg.log_path);
  return result;
}

LossValues evaluate(const DrawModel& model, const std::vector<TileQuintet>& data,
                    Direction direction, const LossSpec& loss, std::uint64_t seed) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  std::optional<FilterBank> bank = bank_for(loss);
  LossValues acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = derive_rng(seed, {static_cast<std::int64_t>(i)});
    LossValues v = quintet_loss(model, data[i], direction, loss, bank ? &*bank : nullptr, rng);
    acc.l_rec += v.l_rec;
    acc.l_kl += v.l_kl;
  }
  double n = static_cast<double>(data.size());
  return {acc.l_rec / n, acc.l_kl / n};
}

}  // namespace texweave
