#include "octseq/png.hpp"

#include <zlib.h>

#include <cstring>
#include <stdexcept>

#include "octseq/common.hpp"

namespace octseq::png {

namespace {

void append_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& out, const char type[4],
                  const std::string& payload) {
  append_be32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.append(type, 4);
  out += payload;
  const std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
              static_cast<uInt>(out.size() - crc_start)));
  append_be32(out, crc);
}

}  // namespace

void write_rgb8(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& rgb, int width, int height) {
  if (width < 1 || height < 1 ||
      rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw DataError("image buffer does not match declared dimensions");

  std::string out("\x89PNG\r\n\x1a\n", 8);

  std::string ihdr;
  append_be32(ihdr, static_cast<std::uint32_t>(width));
  append_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // deflate
  ihdr.push_back(0);   // adaptive filtering
  ihdr.push_back(0);   // no interlace
  append_chunk(out, "IHDR", ihdr);

  // Scanlines with filter byte 0.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + 3 * width);
  }
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> deflated(bound);
  if (::compress2(deflated.data(), &bound, raw.data(),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataError("image compression failed");
  append_chunk(out, "IDAT",
               std::string(reinterpret_cast<const char*>(deflated.data()),
                           bound));
  append_chunk(out, "IEND", "");
  io::write_file_atomic(path, out);
}

}  // namespace octseq::png
