#pragma once

#include <filesystem>
#include <vector>

#include "texweave/tensor.hpp"

namespace texweave {

// Images are H x W x C tensors with values in [0, 1].

// Decodes a PNG to H x W x 3; grayscale is replicated, alpha dropped.
Tensor load_png(const std::filesystem::path& path);
// Writes a 1- or 3-channel image; values are clamped and rounded to 8 bits.
void save_png(const std::filesystem::path& path, const Tensor& image);

Tensor crop(const Tensor& image, std::size_t row, std::size_t col, std::size_t height,
            std::size_t width);
void paste(Tensor& dst, const Tensor& src, std::size_t row, std::size_t col);

// Grid of equally sized cells separated by white gutters (none on the border).
// Rows may have different lengths; missing cells stay white.
Tensor montage(const std::vector<std::vector<Tensor>>& rows, std::size_t gutter = 2);

double rmse(const Tensor& a, const Tensor& b);

}  // namespace texweave
