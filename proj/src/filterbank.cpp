#include "texweave/filterbank.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "texweave/errors.hpp"

namespace texweave {

const char* kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::edge: return "edge";
    case KernelKind::bar: return "bar";
    case KernelKind::log: return "log";
    case KernelKind::gauss: return "gauss";
  }
  return "unknown";
}

std::string FilterBank::fingerprint() const {
  // FNV-1a over the raw kernel bytes.
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : kernels.data()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

Tensor FilterBank::kernel(std::size_t index) const {
  std::size_t k = support();
  auto src = kernels.data().subspan(index * k * k, k * k);
  return Tensor({k, k}, std::vector<double>(src.begin(), src.end()));
}

FilterBank make_bank(Tensor kernels, std::vector<KernelKind> kinds) {
  const Shape s = kernels.shape();
  if (s.size() != 3 || s[1] != s[2]) throw ShapeError("kernels must be K x k x k");
  if (s[1] % 2 == 0) throw ShapeError("kernel support must be odd");
  if (kinds.empty()) kinds.assign(s[0], KernelKind::gauss);
  if (kinds.size() != s[0]) throw ShapeError("kind count does not match kernel count");
  FilterBank bank;
  bank.kernels = std::move(kernels);
  bank.kinds = std::move(kinds);
  bank.scales.assign(s[0], 1.0);
  bank.orientations.assign(s[0], 0.0);
  return bank;
}

namespace {

double gauss1d(double sigma, double x, int order) {
  double var = sigma * sigma;
  double g = std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
  switch (order) {
    case 1: return -g * x / var;
    case 2: return g * (x * x - var) / (var * var);
    default: return g;
  }
}

void normalize_kernel(std::span<double> k, bool zero_mean) {
  if (zero_mean) {
    double m = 0.0;
    for (double v : k) m += v;
    m /= static_cast<double>(k.size());
    for (double& v : k) v -= m;
  }
  double l1 = 0.0;
  for (double v : k) l1 += std::abs(v);
  if (l1 > 0)
    for (double& v : k) v /= l1;
}

}  // namespace

Tensor lm_raw_kernel(KernelKind kind, double sigma, double orientation, std::size_t support) {
  if (support % 2 == 0) throw ShapeError("kernel support must be odd");
  Tensor out({support, support});
  const double half = static_cast<double>(support / 2);
  const double c = std::cos(orientation), s = std::sin(orientation);
  double total = 0.0;
  for (std::size_t r = 0; r < support; ++r) {
    for (std::size_t q = 0; q < support; ++q) {
      double x = static_cast<double>(q) - half;
      double y = static_cast<double>(r) - half;
      double v = 0.0;
      switch (kind) {
        case KernelKind::edge:
        case KernelKind::bar: {
          double xr = c * x - s * y;
          double yr = s * x + c * y;
          v = gauss1d(3.0 * sigma, xr, 0) * gauss1d(sigma, yr, kind == KernelKind::edge ? 1 : 2);
          break;
        }
        case KernelKind::log: {
          double r2 = x * x + y * y, var = sigma * sigma;
          v = (r2 - 2.0 * var) / (var * var) * std::exp(-r2 / (2.0 * var));
          break;
        }
        case KernelKind::gauss:
          v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
          break;
      }
      out.at(r, q) = v;
      total += v;
    }
  }
  if (kind == KernelKind::gauss)
    for (double& v : out.data()) v /= total;
  return out;
}

FilterBank build_lm_bank(std::size_t support) {
  if (support % 2 == 0 || support < 7)
    throw ShapeError("LM support must be odd and at least 7, got " + std::to_string(support));

  constexpr int kOrientations = 6;
  const double root2 = std::numbers::sqrt2;
  const std::vector<double> scales = {1.0, root2, 2.0, 2.0 * root2};

  FilterBank bank;
  std::vector<double> data;
  auto push = [&](KernelKind kind, double sigma, double theta) {
    Tensor k = lm_raw_kernel(kind, sigma, theta, support);
    normalize_kernel(k.data(), kind != KernelKind::gauss);
    data.insert(data.end(), k.data().begin(), k.data().end());
    bank.kinds.push_back(kind);
    bank.scales.push_back(sigma);
    bank.orientations.push_back(theta);
  };

  for (std::size_t si = 0; si < 3; ++si) {
    for (int o = 0; o < kOrientations; ++o)
      push(KernelKind::edge, scales[si], std::numbers::pi * o / kOrientations);
    for (int o = 0; o < kOrientations; ++o)
      push(KernelKind::bar, scales[si], std::numbers::pi * o / kOrientations);
  }
  for (double s : scales) push(KernelKind::log, s, 0.0);
  for (double s : scales) push(KernelKind::log, 3.0 * s, 0.0);
  for (double s : scales) push(KernelKind::gauss, s, 0.0);

  bank.kernels = Tensor({bank.kinds.size(), support, support}, std::move(data));
  return bank;
}

Var normalize_image(Var image) {
  constexpr double kStdFloor = 1e-8;
  Var centered = sub(image, mean(image));
  Var stddev = sqrt(mean(square(centered)));
  // Below the floor the residue is rounding noise; a flat image maps to zeros.
  if (stddev.item() < kStdFloor) return scale(centered, 0.0);
  return div(centered, stddev);
}

Tensor normalize_image(const Tensor& image) {
  Graph g;
  return normalize_image(g.constant(image)).tensor();
}

Var respond(const FilterBank& bank, Var image) { return conv2d_same(image, bank.kernels); }

void weber_normalize(Tensor& maps) {
  const std::size_t L = maps.dim(maps.rank() - 1);
  auto d = maps.data();
  for (std::size_t p = 0; p < d.size(); p += L) {
    double norm = 0.0;
    for (std::size_t i = 0; i < L; ++i) norm += d[p + i] * d[p + i];
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    double f = std::log1p(norm / kWeberConstant) / norm;
    for (std::size_t i = 0; i < L; ++i) d[p + i] *= f;
  }
}

FeatureMapStack respond(const FilterBank& bank, const Tensor& image, bool weber) {
  Graph g;
  FeatureMapStack stack;
  stack.maps = respond(bank, g.constant(image)).tensor();
  if (weber) weber_normalize(stack.maps);
  stack.layers = kind_layers(bank, image.dim(2));
  return stack;
}

std::vector<FeatureLayer> kind_layers(const FilterBank& bank, std::size_t image_channels) {
  std::vector<FeatureLayer> layers;
  const std::size_t K = bank.count();
  for (KernelKind kind : {KernelKind::edge, KernelKind::bar, KernelKind::log, KernelKind::gauss}) {
    FeatureLayer layer{kind_name(kind), {}};
    for (std::size_t c = 0; c < image_channels; ++c)
      for (std::size_t q = 0; q < K; ++q)
        if (bank.kinds[q] == kind) layer.channels.push_back(c * K + q);
    if (!layer.channels.empty()) layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace texweave
