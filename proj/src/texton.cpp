#include "texweave/texton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "texweave/checkpoint.hpp"
#include "texweave/errors.hpp"
#include "texweave/losses.hpp"

namespace texweave {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

std::size_t distinct_rows(const Tensor& points, std::size_t limit) {
  const std::size_t n = points.dim(0), d = points.dim(1);
  std::set<std::vector<double>> seen;
  auto data = points.data();
  for (std::size_t i = 0; i < n && seen.size() < limit; ++i)
    seen.emplace(data.begin() + static_cast<std::ptrdiff_t>(i * d),
                 data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  return seen.size();
}

}  // namespace

std::vector<std::size_t> assign_nearest(const Tensor& points, const Tensor& centers) {
  if (points.rank() != 2 || centers.rank() != 2 || points.dim(1) != centers.dim(1))
    throw ShapeError("assign_nearest: " + shape_string(points.shape()) + " vs centers " +
                     shape_string(centers.shape()));
  const std::size_t n = points.dim(0), k = centers.dim(0), d = points.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = points.data().data() + i * d;
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      double dist = sq_dist(p, centers.data().data() + j * d, d);
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    out[i] = arg;
  }
  return out;
}

KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, std::size_t max_iterations,
                    double tolerance) {
  if (points.rank() != 2) throw ShapeError("kmeans expects an n x d point matrix");
  const std::size_t n = points.dim(0), d = points.dim(1);
  if (k < 2) throw std::invalid_argument("kmeans needs k >= 2");
  if (n < k) throw DataError("kmeans: " + std::to_string(n) + " points for " + std::to_string(k) + " clusters");
  if (distinct_rows(points, k) < k)
    throw DataError("kmeans: fewer than " + std::to_string(k) + " distinct points");
  const double* P = points.data().data();

  // k-means++ seeding.
  Tensor centers({k, d});
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy_n(P + first * d, d, centers.data().data());
  for (std::size_t j = 1; j < k; ++j) {
    const double* prev = centers.data().data() + (j - 1) * d;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(P + i * d, prev, d));
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    std::size_t next = pick(rng);
    std::copy_n(P + next * d, d, centers.data().data() + j * d);
  }

  KMeansResult result;
  std::vector<std::size_t> labels(n);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        double v = sq_dist(P + i * d, centers.data().data() + j * d, d);
        if (v < best) {
          best = v;
          labels[i] = j;
        }
      }
      dist[i] = best;
      objective += best;
    }
    result.objective.push_back(objective);
    result.iterations = iter + 1;

    Tensor next({k, d});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      double* c = next.data().data() + labels[i] * d;
      for (std::size_t t = 0; t < d; ++t) c[t] += P[i * d + t];
    }
    for (std::size_t j = 0; j < k; ++j) {
      double* c = next.data().data() + j * d;
      if (counts[j] == 0) {
        std::size_t far = static_cast<std::size_t>(
            std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy_n(P + far * d, d, c);
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t t = 0; t < d; ++t) c[t] /= static_cast<double>(counts[j]);
    }
    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      shift = std::max(shift, std::sqrt(sq_dist(next.data().data() + j * d,
                                                centers.data().data() + j * d, d)));
    centers = std::move(next);
    if (shift < tolerance) break;
  }
  result.centers = std::move(centers);
  return result;
}

Tensor texton_features(const Tensor& image, const FilterBank& bank) {
  FeatureMapStack stack = respond(bank, normalize_image(image), true);
  return stack.maps.reshaped({stack.positions(), stack.maps.dim(2)});
}

TextonDictionary learn_textons(const std::vector<Tensor>& images, const FilterBank& bank,
                               std::size_t k, std::uint64_t seed) {
  if (images.empty()) throw DataError("learn_textons: no images");
  std::vector<double> all;
  std::size_t dims = 0, rows = 0;
  for (const Tensor& img : images) {
    Tensor f = texton_features(img, bank);
    if (dims && f.dim(1) != dims) throw ShapeError("learn_textons: images differ in channel count");
    dims = f.dim(1);
    rows += f.dim(0);
    all.insert(all.end(), f.data().begin(), f.data().end());
  }
  if (rows < k)
    throw DataError("learn_textons: " + std::to_string(rows) + " pixels for " + std::to_string(k) +
                    " textons");
  Rng rng = derive_rng(seed, {0x7e47});
  KMeansResult km = kmeans(Tensor({rows, dims}, std::move(all)), k, rng);
  return {std::move(km.centers), bank.fingerprint()};
}

TextonHistogram texton_histogram(const Tensor& image, const TextonDictionary& dict,
                                 const FilterBank& bank) {
  if (dict.bank_fingerprint != bank.fingerprint())
    throw DataError("texton dictionary was learned with a different filter bank");
  Tensor f = texton_features(image, bank);
  auto labels = assign_nearest(f, dict.centers);
  TextonHistogram h;
  h.bins.assign(dict.count(), 0.0);
  for (auto l : labels) h.bins[l] += 1.0;
  for (double& b : h.bins) b /= static_cast<double>(labels.size());
  return h;
}

double histogram_distance(const TextonHistogram& a, const TextonHistogram& b) {
  if (a.bins.size() != b.bins.size())
    throw ShapeError("histogram_distance: " + std::to_string(a.bins.size()) + " vs " +
                     std::to_string(b.bins.size()) + " bins");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.bins.size(); ++i) {
    double diff = a.bins[i] - b.bins[i];
    acc += diff * diff / (a.bins[i] + b.bins[i] + 1e-12);
  }
  return 0.5 * acc;
}

double gram_distance(const Tensor& x, const Tensor& x_hat, const FilterBank& bank) {
  if (x.shape() != x_hat.shape())
    throw ShapeError("gram_distance: " + shape_string(x.shape()) + " vs " +
                     shape_string(x_hat.shape()));
  Graph g;
  return gram_loss(g.view(x), g.view(x_hat), lm_kind_extractor(bank), {}).item();
}

double gram_distance(const Tensor& x, const Tensor& x_hat) {
  static const FilterBank bank = build_lm_bank();
  return gram_distance(x, x_hat, bank);
}

void save_textons(const std::filesystem::path& path, const TextonDictionary& dict) {
  nlohmann::json meta = {{"kind", "textons"},
                         {"k", dict.count()},
                         {"bank_fingerprint", dict.bank_fingerprint}};
  write_container(path, meta, {{"centers", &dict.centers}});
}

TextonDictionary load_textons(const std::filesystem::path& path) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "textons")
    throw DataError(path.string() + " is not a texton dictionary");
  TextonDictionary dict{c.array("centers"), c.meta.value("bank_fingerprint", "")};
  if (dict.centers.rank() != 2 || dict.count() < 2)
    throw DataError(path.string() + ": malformed texton centers");
  return dict;
}

}  // namespace texweave
