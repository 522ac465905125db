#include "texweave/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <png.h>

#include "texweave/errors.hpp"

namespace texweave {

Tensor load_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("image not found: " + path.string());
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw DataError("cannot decode " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode " + path.string() + ": " + msg);
  }
  Tensor out({img.height, img.width, 3});
  auto d = out.data();
  for (std::size_t i = 0; i < buffer.size(); ++i) d[i] = buffer[i] / 255.0;
  return out;
}

void save_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3))
    throw ShapeError("save_png expects H x W x 1 or H x W x 3, got " + shape_string(image.shape()));
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.height = static_cast<png_uint_32>(image.dim(0));
  img.width = static_cast<png_uint_32>(image.dim(1));
  img.format = image.dim(2) == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(image.size());
  auto d = image.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    buffer[i] = static_cast<unsigned char>(std::lround(std::clamp(d[i], 0.0, 1.0) * 255.0));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer.data(), 0, nullptr))
    throw DataError("cannot write " + path.string() + ": " + img.message);
}

Tensor crop(const Tensor& image, std::size_t row, std::size_t col, std::size_t height,
            std::size_t width) {
  if (image.rank() != 3 || row + height > image.dim(0) || col + width > image.dim(1))
    throw ShapeError("crop out of bounds of " + shape_string(image.shape()));
  const std::size_t C = image.dim(2);
  Tensor out({height, width, C});
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t q = 0; q < width; ++q)
      for (std::size_t c = 0; c < C; ++c) out.at(r, q, c) = image.at(row + r, col + q, c);
  return out;
}

void paste(Tensor& dst, const Tensor& src, std::size_t row, std::size_t col) {
  if (dst.rank() != 3 || src.rank() != 3 || src.dim(2) != dst.dim(2) ||
      row + src.dim(0) > dst.dim(0) || col + src.dim(1) > dst.dim(1))
    throw ShapeError("paste of " + shape_string(src.shape()) + " out of bounds of " +
                     shape_string(dst.shape()));
  for (std::size_t r = 0; r < src.dim(0); ++r)
    for (std::size_t q = 0; q < src.dim(1); ++q)
      for (std::size_t c = 0; c < src.dim(2); ++c) dst.at(row + r, col + q, c) = src.at(r, q, c);
}

Tensor montage(const std::vector<std::vector<Tensor>>& rows, std::size_t gutter) {
  const Tensor* first = nullptr;
  std::size_t cols = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    if (!first && !row.empty()) first = &row.front();
  }
  if (!first) throw ShapeError("montage of zero cells");
  const std::size_t h = first->dim(0), w = first->dim(1), C = first->dim(2);
  const std::size_t n = rows.size();
  Tensor out({n * h + (n - 1) * gutter, cols * w + (cols - 1) * gutter, C}, 1.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t q = 0; q < rows[r].size(); ++q) {
      if (rows[r][q].shape() != first->shape()) throw ShapeError("montage cells differ in shape");
      paste(out, rows[r][q], r * (h + gutter), q * (w + gutter));
    }
  return out;
}

double rmse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("rmse shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace texweave
