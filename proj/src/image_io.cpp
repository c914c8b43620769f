#include "dea/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "dea/error.hpp"

namespace dea {
namespace {

const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_error, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_all(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) raise(Errc::io_error, "short write to " + path);
}

uint8_t to_byte(double x) {
  double v = std::floor(std::clamp(x, 0.0, 1.0) * 255.0 + 0.5);
  return uint8_t(v);
}

void put_u32(std::vector<unsigned char>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

uint32_t get_u32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) |
         uint32_t(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
  put_u32(out, uint32_t(data.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = uint32_t(
      crc32(0, out.data() + start, uInt(out.size() - start)));
  put_u32(out, crc);
}

std::vector<unsigned char> png_encode(const Image& img) {
  const long h = img.height(), w = img.width();
  const int ch = img.channels();
  int color_type;
  switch (ch) {
    case 1: color_type = 0; break;
    case 3: color_type = 2; break;
    case 4: color_type = 6; break;
    default: raise(Errc::io_error, "png supports 1/3/4 channels");
  }

  // filter type 0 on every scanline
  std::vector<unsigned char> raw;
  raw.reserve(size_t(h) * (1 + size_t(w) * size_t(ch)));
  for (long r = 0; r < h; ++r) {
    raw.push_back(0);
    for (long c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k)
        raw.push_back(to_byte(img.planes[size_t(k)](r, c)));
  }

  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<unsigned char> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
    raise(Errc::io_error, "zlib compression failed");
  comp.resize(bound);

  std::vector<unsigned char> out(kPngSig, kPngSig + 8);
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, uint32_t(w));
  put_u32(ihdr, uint32_t(h));
  ihdr.push_back(8);                    // bit depth
  ihdr.push_back(uint8_t(color_type));
  ihdr.push_back(0);                    // compression
  ihdr.push_back(0);                    // filter method
  ihdr.push_back(0);                    // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", comp);
  append_chunk(out, "IEND", {});
  return out;
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

Image png_decode(const std::vector<unsigned char>& bytes, const std::string& path) {
  if (bytes.size() < 8 + 25 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
    raise(Errc::io_error, "not a png: " + path);

  uint32_t w = 0, h = 0;
  int bit_depth = 0, color_type = -1, interlace = -1;
  std::vector<unsigned char> idat;
  size_t pos = 8;
  bool seen_end = false;
  while (pos + 8 <= bytes.size() && !seen_end) {
    uint32_t len = get_u32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) raise(Errc::io_error, "truncated png: " + path);
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const unsigned char* data = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) raise(Errc::io_error, "bad IHDR: " + path);
      w = get_u32(data);
      h = get_u32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      interlace = data[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_end = true;
    }
    pos += 12 + len;
  }
  if (w == 0 || h == 0 || idat.empty()) raise(Errc::io_error, "empty png: " + path);
  if (bit_depth != 8 || interlace != 0)
    raise(Errc::io_error, "unsupported png (need 8-bit non-interlaced): " + path);
  int ch;
  switch (color_type) {
    case 0: ch = 1; break;
    case 2: ch = 3; break;
    case 6: ch = 4; break;
    default: raise(Errc::io_error, "unsupported png color type: " + path);
  }

  const size_t stride = size_t(w) * size_t(ch);
  std::vector<unsigned char> raw(size_t(h) * (stride + 1));
  uLongf raw_len = uLongf(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK ||
      raw_len != raw.size())
    raise(Errc::io_error, "png inflate failed: " + path);

  // undo scanline filters in place
  std::vector<unsigned char> prev(stride, 0), cur(stride);
  Image img = make_image(long(h), long(w), ch);
  for (uint32_t r = 0; r < h; ++r) {
    const unsigned char* line = &raw[size_t(r) * (stride + 1)];
    int filter = line[0];
    const unsigned char* src = line + 1;
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= size_t(ch) ? cur[i - size_t(ch)] : 0;
      int b = prev[i];
      int c = i >= size_t(ch) ? prev[i - size_t(ch)] : 0;
      int x = src[i];
      switch (filter) {
        case 0: cur[i] = uint8_t(x); break;
        case 1: cur[i] = uint8_t(x + a); break;
        case 2: cur[i] = uint8_t(x + b); break;
        case 3: cur[i] = uint8_t(x + (a + b) / 2); break;
        case 4: cur[i] = uint8_t(x + paeth(a, b, c)); break;
        default: raise(Errc::io_error, "bad png filter byte: " + path);
      }
    }
    for (uint32_t c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k)
        img.planes[size_t(k)](r, c) = cur[size_t(c) * size_t(ch) + size_t(k)] / 255.0;
    std::swap(prev, cur);
  }
  return img;
}

// --- PNM (binary PGM/PPM) ---

void pnm_skip_space(const std::vector<unsigned char>& b, size_t& p) {
  while (p < b.size()) {
    if (std::isspace(b[p])) {
      ++p;
    } else if (b[p] == '#') {
      while (p < b.size() && b[p] != '\n') ++p;
    } else {
      break;
    }
  }
}

long pnm_int(const std::vector<unsigned char>& b, size_t& p, const std::string& path) {
  pnm_skip_space(b, p);
  long v = 0;
  bool any = false;
  while (p < b.size() && std::isdigit(b[p])) {
    v = v * 10 + (b[p] - '0');
    ++p;
    any = true;
  }
  if (!any) raise(Errc::io_error, "bad pnm header: " + path);
  return v;
}

Image pnm_decode(const std::vector<unsigned char>& bytes, const std::string& path) {
  if (bytes.size() < 2) raise(Errc::io_error, "truncated pnm: " + path);
  int ch = bytes[1] == '5' ? 1 : 3;
  size_t p = 2;
  long w = pnm_int(bytes, p, path);
  long h = pnm_int(bytes, p, path);
  long maxval = pnm_int(bytes, p, path);
  if (maxval != 255) raise(Errc::io_error, "pnm maxval must be 255: " + path);
  ++p;  // single whitespace after header
  size_t need = size_t(w) * size_t(h) * size_t(ch);
  if (bytes.size() - p < need) raise(Errc::io_error, "truncated pnm data: " + path);
  Image img = make_image(h, w, ch);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k)
        img.planes[size_t(k)](r, c) = bytes[p++] / 255.0;
  return img;
}

std::vector<unsigned char> pnm_encode(const Image& img) {
  const int ch = img.channels();
  if (ch != 1 && ch != 3) raise(Errc::io_error, "pnm supports 1 or 3 channels");
  char header[64];
  int n = std::snprintf(header, sizeof(header), "P%c\n%ld %ld\n255\n",
                        ch == 1 ? '5' : '6', img.width(), img.height());
  std::vector<unsigned char> out(header, header + n);
  for (long r = 0; r < img.height(); ++r)
    for (long c = 0; c < img.width(); ++c)
      for (int k = 0; k < ch; ++k)
        out.push_back(to_byte(img.planes[size_t(k)](r, c)));
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Image read_image(const std::string& path) {
  auto bytes = read_all(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
    return png_decode(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
    return pnm_decode(bytes, path);
  raise(Errc::io_error, "unrecognized image format: " + path);
}

void write_image(const std::string& path, const Image& img) {
  if (img.empty()) raise(Errc::io_error, "refusing to write empty image");
  if (ends_with(path, ".pgm")) {
    Image g;
    g.planes.push_back(luma(img));
    write_all(path, pnm_encode(g));
  } else if (ends_with(path, ".ppm")) {
    Image rgb = img;
    if (rgb.channels() == 1)
      rgb.planes.assign(3, img.planes[0]);
    else
      rgb.planes.resize(3);
    write_all(path, pnm_encode(rgb));
  } else if (ends_with(path, ".png")) {
    write_all(path, png_encode(img));
  } else {
    raise(Errc::io_error, "unsupported image extension: " + path);
  }
}

}  // namespace dea
