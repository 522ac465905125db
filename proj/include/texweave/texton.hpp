#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "texweave/filterbank.hpp"
#include "texweave/random.hpp"
#include "texweave/tensor.hpp"

namespace texweave {

inline constexpr std::size_t kDefaultTextons = 32;

// Cluster centers in filter-response space.
struct TextonDictionary {
  Tensor centers;  // K x L
  std::string bank_fingerprint;

  std::size_t count() const { return centers.dim(0); }
  std::size_t dims() const { return centers.dim(1); }
};

struct TextonHistogram {
  std::vector<double> bins;  // sums to 1
};

struct KMeansResult {
  Tensor centers;                  // K x D
  std::vector<double> objective;   // sum of squared distances after each assignment
  std::size_t iterations = 0;
};

// k-means++ seeding then Lloyd iterations until the largest center shift is
// below tolerance or max_iterations is reached. An empty cluster is reseeded
// with the point farthest from its center.
KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, std::size_t max_iterations = 100,
                    double tolerance = 1e-6);

// Index of the nearest center for every row; ties go to the lower index.
std::vector<std::size_t> assign_nearest(const Tensor& points, const Tensor& centers);

// Per-pixel Weber-normalized responses of the normalized image, (H*W) x L.
Tensor texton_features(const Tensor& image, const FilterBank& bank);

TextonDictionary learn_textons(const std::vector<Tensor>& images, const FilterBank& bank,
                               std::size_t k, std::uint64_t seed);

TextonHistogram texton_histogram(const Tensor& image, const TextonDictionary& dict,
                                 const FilterBank& bank);

// 0.5 * sum (a - b)^2 / (a + b + 1e-12)
double histogram_distance(const TextonHistogram& a, const TextonHistogram& b);

// Gram texture distance over LM responses partitioned by kernel kind,
// uniform layer weights.
double gram_distance(const Tensor& x, const Tensor& x_hat, const FilterBank& bank);
double gram_distance(const Tensor& x, const Tensor& x_hat);

void save_textons(const std::filesystem::path& path, const TextonDictionary& dict);
TextonDictionary load_textons(const std::filesystem::path& path);

}  // namespace texweave
