#ifndef FSWAP_IMAGE_IO_HPP
#define FSWAP_IMAGE_IO_HPP

#include <string>
#include <vector>

#include "fswap/masks.hpp"
#include "fswap/tensor.hpp"

namespace fswap {

// 8-bit binary PPM (P6) for RGB images, PGM (P5) for label maps.
void write_ppm(const std::string& path, const Tensor& image);  // (3,h,w), clamped to [0,1]
Tensor read_ppm(const std::string& path);
void write_pgm(const std::string& path, const MaskLabelMap& labels);
MaskLabelMap read_pgm(const std::string& path);

// Tile images into one canvas with separator lines; rows may have different lengths.
Tensor compose_grid(const std::vector<std::vector<Tensor>>& rows, int sep = 1);

std::uint64_t file_digest(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace fswap

#endif
