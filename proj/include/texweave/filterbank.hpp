#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "texweave/tensor.hpp"

namespace texweave {

enum class KernelKind { edge, bar, log, gauss };

const char* kind_name(KernelKind kind);

// Ordered set of square correlation kernels with per-kernel metadata.
struct FilterBank {
  Tensor kernels;  // K x k x k
  std::vector<KernelKind> kinds;
  std::vector<double> scales;
  std::vector<double> orientations;  // radians; 0 for isotropic kernels

  std::size_t count() const { return kinds.size(); }
  std::size_t support() const { return kernels.dim(1); }
  // Stable hash of the kernel values, used to match texton dictionaries.
  std::string fingerprint() const;
  Tensor kernel(std::size_t index) const;
};

// Builds a bank from explicit kernels (K x k x k). Metadata defaults to gauss
// kind, unit scale and zero orientation when omitted.
FilterBank make_bank(Tensor kernels, std::vector<KernelKind> kinds = {});

inline constexpr std::size_t kDefaultSupport = 15;

// Leung-Malik bank (small-scale variant): 36 oriented first/second derivative
// of Gaussian kernels (3 scales x 6 orientations, 3:1 elongation), 8
// Laplacian-of-Gaussian and 4 Gaussian kernels. Oriented and LoG kernels are
// zero-mean; every kernel has unit L1 norm.
FilterBank build_lm_bank(std::size_t support = kDefaultSupport);

// Unnormalized LM kernel as sampled on the support grid. Gaussian kernels are
// scaled to unit sum; the others are raw derivative samples.
Tensor lm_raw_kernel(KernelKind kind, double sigma, double orientation, std::size_t support);

// Zero mean, unit standard deviation over all pixels and channels jointly.
// The standard deviation is floored at 1e-8 so constant images map to zeros.
Var normalize_image(Var image);
Tensor normalize_image(const Tensor& image);

// Feature maps grouped into conceptual layers (for Gram statistics).
struct FeatureLayer {
  std::string name;
  std::vector<std::size_t> channels;  // indices into the response stack
};

struct FeatureMapStack {
  Tensor maps;  // H x W x L
  std::vector<FeatureLayer> layers;

  std::size_t positions() const { return maps.dim(0) * maps.dim(1); }  // M_l
};

// Differentiable filter responses, H x W x (C*K), channel c*K + kernel.
Var respond(const FilterBank& bank, Var image);

// Non-differentiable responses with the layers partitioned by kernel kind.
// With weber set every pixel response vector r is rescaled by
// log(1 + |r| / 0.03) / |r|.
FeatureMapStack respond(const FilterBank& bank, const Tensor& image, bool weber);

inline constexpr double kWeberConstant = 0.03;
void weber_normalize(Tensor& maps);

// Output channels of respond() grouped by kernel kind (edge, bar, log,
// gauss); kinds absent from the bank are skipped.
std::vector<FeatureLayer> kind_layers(const FilterBank& bank, std::size_t image_channels);

}  // namespace texweave
