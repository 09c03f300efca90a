#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace surfcon {

/// Raised for malformed inputs: shape mismatches, out-of-domain values,
/// unreadable files. Command-line front ends map it to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces non-finite values. Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pixel index: row i, column j. Pixel centers sit at integer image
/// coordinates u = j, v = i.
struct Pixel {
  int i = 0;
  int j = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

inline std::string to_string(Pixel p) {
  return "(" + std::to_string(p.i) + "," + std::to_string(p.j) + ")";
}

/// Row-major H x W raster.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, const T& fill = T{}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
      throw InputError("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int i, int j) { return data_[index(i, j)]; }
  const T& operator()(int i, int j) const { return data_[index(i, j)]; }
  T& operator()(Pixel p) { return (*this)(p.i, p.j); }
  const T& operator()(Pixel p) const { return (*this)(p.i, p.j); }

  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  // A span into a temporary would dangle.
  std::span<const T> values() && = delete;

  bool contains(int i, int j) const { return i >= 0 && j >= 0 && i < height_ && j < width_; }

  template <class U>
  bool same_shape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(j);
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

template <class A, class B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) +
                     "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
  }
}

/// Depth, weight and gradient maps.
class ScalarField : public Grid<double> {
 public:
  using Grid<double>::Grid;
};

/// Normals and point maps. For normal maps the zero vector marks an
/// invalid pixel; validity is also carried in an explicit RegionMask.
class VectorField : public Grid<Eigen::Vector3d> {
 public:
  VectorField() = default;
  VectorField(int width, int height, const Eigen::Vector3d& fill = Eigen::Vector3d::Zero())
      : Grid<Eigen::Vector3d>(width, height, fill) {}
};

/// RGB image, channels in [0,1].
class Image : public Grid<Eigen::Vector3d> {
 public:
  Image() = default;
  Image(int width, int height, const Eigen::Vector3d& fill = Eigen::Vector3d::Zero())
      : Grid<Eigen::Vector3d>(width, height, fill) {}
};

enum class RegionLabel { Trust, TextureRich, TextureLess, Validity, Invalid, Generic };

inline const char* to_string(RegionLabel label) {
  switch (label) {
    case RegionLabel::Trust: return "trust";
    case RegionLabel::TextureRich: return "texture_rich";
    case RegionLabel::TextureLess: return "texture_less";
    case RegionLabel::Validity: return "validity";
    case RegionLabel::Invalid: return "invalid";
    case RegionLabel::Generic: return "generic";
  }
  return "generic";
}

class RegionMask : public Grid<std::uint8_t> {
 public:
  RegionMask() = default;
  RegionMask(int width, int height, RegionLabel label, bool fill = false)
      : Grid<std::uint8_t>(width, height, fill ? 1 : 0), label_(label) {}

  RegionLabel label() const { return label_; }
  void set_label(RegionLabel label) { label_ = label; }

  bool test(int i, int j) const { return (*this)(i, j) != 0; }
  bool test(Pixel p) const { return test(p.i, p.j); }
  void set(int i, int j, bool on = true) { (*this)(i, j) = on ? 1 : 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : values()) n += b != 0;
    return n;
  }

 private:
  RegionLabel label_ = RegionLabel::Generic;
};

inline RegionMask mask_and(const RegionMask& a, const RegionMask& b, RegionLabel label) {
  require_same_shape(a, b, "mask_and");
  RegionMask out(a.width(), a.height(), label);
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = (a[k] && b[k]) ? 1 : 0;
  return out;
}

inline RegionMask mask_not(const RegionMask& a, RegionLabel label) {
  RegionMask out(a.width(), a.height(), label);
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] ? 0 : 1;
  return out;
}

/// Neumaier-compensated accumulator; reductions over pixels go through it
/// so that results do not depend on summation order beyond ~1 ulp.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Subgradient sign with sign(0) = 0. Values within `kink_tol` of zero count
/// as sitting on the kink so that rounding noise at an exact optimum yields a
/// zero subgradient.
inline constexpr double kink_tol = 1e-12;

inline double sign0(double x) {
  if (x > kink_tol) return 1.0;
  if (x < -kink_tol) return -1.0;
  return 0.0;
}

inline bool all_finite(const ScalarField& f) {
  for (double v : f.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace surfcon
