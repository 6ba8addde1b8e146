#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gdvm/data.hpp"

namespace gdvm {

// IDX container (big-endian magic, big-endian dimension sizes, unsigned-byte
// payload). Image files carry magic 0x00000803 and are 3-D; label files carry
// 0x00000801 and are 1-D. Pixels are scaled to [0,1] on load.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

void write_idx_images(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& pixels, std::size_t count,
                      std::size_t height, std::size_t width);
void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels);

}  // namespace gdvm
