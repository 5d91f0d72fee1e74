#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace caae {

struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // H*W*3, row-major

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
};

// 8-bit RGB PNG, fixed encoder settings so identical input re-renders to a
// byte-identical file.
void write_png(const std::filesystem::path& path, const ImageU8& image);
ImageU8 read_png(const std::filesystem::path& path);

}  // namespace caae
