#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "surfcon/grid.hpp"

namespace surfcon::io {

namespace detail {

inline std::uint32_t bswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0xFF00u) | ((x << 8) & 0xFF0000u) | (x << 24);
}

inline std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

/// Netpbm header tokenizer: whitespace separated, '#' comments to end of line.
class HeaderReader {
 public:
  HeaderReader(const std::vector<char>& buf, std::string name) : buf_(buf), name_(std::move(name)) {}

  std::string token() {
    skip();
    std::string t;
    while (pos_ < buf_.size() && !std::isspace(static_cast<unsigned char>(buf_[pos_]))) t += buf_[pos_++];
    if (t.empty()) fail("truncated header");
    return t;
  }

  long number(long lo, long hi) {
    const std::string t = token();
    long v = 0;
    try {
      std::size_t used = 0;
      v = std::stol(t, &used);
      if (used != t.size()) fail("bad header field '" + t + "'");
    } catch (const std::logic_error&) {
      fail("bad header field '" + t + "'");
    }
    if (v < lo || v > hi) fail("header field " + t + " out of range");
    return v;
  }

  /// Consumes the single whitespace byte that ends the header.
  std::size_t data_start() {
    if (pos_ >= buf_.size() || !std::isspace(static_cast<unsigned char>(buf_[pos_]))) fail("missing header terminator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const { throw InputError(name_ + ": " + what); }

 private:
  void skip() {
    while (pos_ < buf_.size()) {
      if (buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(buf_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct PfmData {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> values;  ///< top row first, interleaved channels
};

inline PfmData read_pfm_raw(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  HeaderReader hr(buf, path.string());
  const std::string magic = hr.token();
  PfmData d;
  if (magic == "Pf") d.channels = 1;
  else if (magic == "PF") d.channels = 3;
  else hr.fail("not a PFM file (magic '" + magic + "')");
  d.width = static_cast<int>(hr.number(1, 1 << 20));
  d.height = static_cast<int>(hr.number(1, 1 << 20));
  const std::string scale_tok = hr.token();
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::logic_error&) {
    hr.fail("bad scale '" + scale_tok + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) hr.fail("scale must be nonzero");
  const bool little = scale < 0.0;
  const std::size_t start = hr.data_start();
  const std::size_t count = static_cast<std::size_t>(d.width) * d.height * d.channels;
  if (buf.size() - start < count * 4) hr.fail("truncated pixel data");
  d.values.resize(count);
  const bool swap = little != (std::endian::native == std::endian::little);
  for (int row = 0; row < d.height; ++row) {
    // PFM stores the bottom row first.
    const std::size_t src_row = static_cast<std::size_t>(d.height - 1 - row);
    for (std::size_t c = 0; c < static_cast<std::size_t>(d.width * d.channels); ++c) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, buf.data() + start + (src_row * d.width * d.channels + c) * 4, 4);
      if (swap) bits = bswap32(bits);
      d.values[static_cast<std::size_t>(row) * d.width * d.channels + c] = std::bit_cast<float>(bits);
    }
  }
  return d;
}

inline void write_pfm_raw(const std::filesystem::path& path, int width, int height, int channels,
                          const std::vector<float>& values) {
  std::ostringstream os;
  os << (channels == 1 ? "Pf" : "PF") << "\n" << width << " " << height << "\n-1.0\n";
  std::string bytes = os.str();
  bytes.reserve(bytes.size() + values.size() * 4);
  for (int row = height - 1; row >= 0; --row) {
    for (int c = 0; c < width * channels; ++c) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(values[static_cast<std::size_t>(row) * width * channels + c]);
      if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
      char b[4];
      std::memcpy(b, &bits, 4);
      bytes.append(b, 4);
    }
  }
  write_all(path, bytes);
}

}  // namespace detail

/// Single-channel PFM ("Pf"), little-endian, bottom row first on disk.
inline void write_pfm(const std::filesystem::path& path, const ScalarField& f) {
  std::vector<float> v(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) v[k] = static_cast<float>(f[k]);
  detail::write_pfm_raw(path, f.width(), f.height(), 1, v);
}

/// Three-channel PFM ("PF").
inline void write_pfm(const std::filesystem::path& path, const VectorField& f) {
  std::vector<float> v(f.size() * 3);
  for (std::size_t k = 0; k < f.size(); ++k) {
    for (int c = 0; c < 3; ++c) v[k * 3 + c] = static_cast<float>(f[k][c]);
  }
  detail::write_pfm_raw(path, f.width(), f.height(), 3, v);
}

inline ScalarField read_pfm_scalar(const std::filesystem::path& path) {
  const auto d = detail::read_pfm_raw(path);
  if (d.channels != 1) throw InputError(path.string() + ": expected a single-channel PFM");
  ScalarField f(d.width, d.height);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = d.values[k];
  return f;
}

inline VectorField read_pfm_vector(const std::filesystem::path& path) {
  const auto d = detail::read_pfm_raw(path);
  if (d.channels != 3) throw InputError(path.string() + ": expected a three-channel PFM");
  VectorField f(d.width, d.height);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = Eigen::Vector3d(d.values[3 * k], d.values[3 * k + 1], d.values[3 * k + 2]);
  return f;
}

/// Binary PPM (P6), 8 bits per channel; values in [0,1] are rounded.
inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::string bytes = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  for (std::size_t k = 0; k < img.size(); ++k) {
    for (int c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(detail::to_byte(img[k][c])));
  }
  detail::write_all(path, bytes);
}

/// Binary PPM with maxval up to 65535; channels scaled to [0,1].
inline Image read_ppm(const std::filesystem::path& path) {
  const auto buf = detail::read_all(path);
  detail::HeaderReader hr(buf, path.string());
  const std::string magic = hr.token();
  if (magic != "P6") hr.fail("not a binary PPM (magic '" + magic + "')");
  const int w = static_cast<int>(hr.number(1, 1 << 20));
  const int h = static_cast<int>(hr.number(1, 1 << 20));
  const long maxval = hr.number(1, 65535);
  const std::size_t start = hr.data_start();
  const std::size_t bpc = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3 * bpc;
  if (buf.size() - start < need) hr.fail("truncated pixel data");
  Image img(w, h);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + start);
  for (std::size_t k = 0; k < img.size(); ++k) {
    for (int c = 0; c < 3; ++c) {
      const std::size_t o = (k * 3 + c) * bpc;
      const unsigned v = bpc == 2 ? (static_cast<unsigned>(p[o]) << 8) | p[o + 1] : p[o];
      img[k][c] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return img;
}

/// Binary PGM (P5) mask: set pixels are 255, others 0.
inline void write_pgm(const std::filesystem::path& path, const RegionMask& mask) {
  std::string bytes = "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
  for (std::size_t k = 0; k < mask.size(); ++k) bytes.push_back(static_cast<char>(mask[k] ? 255 : 0));
  detail::write_all(path, bytes);
}

/// Nonzero PGM samples become set mask pixels.
inline RegionMask read_pgm(const std::filesystem::path& path, RegionLabel label = RegionLabel::Generic) {
  const auto buf = detail::read_all(path);
  detail::HeaderReader hr(buf, path.string());
  const std::string magic = hr.token();
  if (magic != "P5") hr.fail("not a binary PGM (magic '" + magic + "')");
  const int w = static_cast<int>(hr.number(1, 1 << 20));
  const int h = static_cast<int>(hr.number(1, 1 << 20));
  const long maxval = hr.number(1, 65535);
  const std::size_t start = hr.data_start();
  const std::size_t bpc = maxval > 255 ? 2 : 1;
  if (buf.size() - start < static_cast<std::size_t>(w) * h * bpc) hr.fail("truncated pixel data");
  RegionMask m(w, h, label);
  for (std::size_t k = 0; k < m.size(); ++k) {
    bool on = buf[start + k * bpc] != 0;
    if (bpc == 2) on = on || buf[start + k * bpc + 1] != 0;
    m[k] = on ? 1 : 0;
  }
  return m;
}

}  // namespace surfcon::io
