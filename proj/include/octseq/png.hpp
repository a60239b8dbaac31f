#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace octseq::png {

// Writes an 8-bit RGB image (row-major, 3 bytes per pixel). Output bytes
// are a pure function of the inputs.
void write_rgb8(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& rgb, int width, int height);

}  // namespace octseq::png
