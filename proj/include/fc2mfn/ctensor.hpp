// Complex tensor value type: an N-dimensional array stored as paired
// real/imaginary planes of 64-bit floats, row-major.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fc2mfn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Real-valued tensor; also used for the planes returned by to_polar.
struct RTensor {
  Shape shape;
  std::vector<double> data;

  RTensor() = default;
  explicit RTensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
  RTensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw ShapeError("RTensor: data size does not match shape " + shape_str(shape));
  }

  std::size_t numel() const { return data.size(); }
};

struct CTensor {
  Shape shape;
  std::vector<double> re;
  std::vector<double> im;

  CTensor() : re(1, 0.0), im(1, 0.0) {}  // rank-0 zero scalar
  explicit CTensor(Shape s)
      : shape(std::move(s)),
        re(shape_numel(shape), 0.0),
        im(shape_numel(shape), 0.0) {}
  CTensor(Shape s, std::vector<double> r, std::vector<double> i)
      : shape(std::move(s)), re(std::move(r)), im(std::move(i)) {
    const std::size_t n = shape_numel(shape);
    if (re.size() != n || im.size() != n)
      throw ShapeError("CTensor: plane size does not match shape " + shape_str(shape));
  }

  static CTensor scalar(double r, double i = 0.0) {
    CTensor z;
    z.re[0] = r;
    z.im[0] = i;
    return z;
  }

  static CTensor full(Shape s, double r, double i = 0.0) {
    CTensor z(std::move(s));
    std::fill(z.re.begin(), z.re.end(), r);
    std::fill(z.im.begin(), z.im.end(), i);
    return z;
  }

  std::size_t numel() const { return re.size(); }
  bool is_scalar() const { return numel() == 1; }

  std::complex<double> at(std::size_t i) const { return {re[i], im[i]}; }

  bool same_shape(const CTensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : re)
      if (!std::isfinite(v)) return false;
    for (double v : im)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_same_shape(const CTensor& a, const CTensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
}

// Full-plane angle in (-pi, pi]; the angle of the zero element is 0 so the
// pooling score of z = 0 stays well-defined.
inline double angle_of(double x, double y) {
  if (x == 0.0 && y == 0.0) return 0.0;
  double a = std::atan2(y, x);
  if (a == -M_PI) a = M_PI;
  return a;
}

// Cartesian -> polar conversion: per element sqrt(x^2+y^2) and angle_of.
inline std::pair<RTensor, RTensor> to_polar(const CTensor& z) {
  RTensor mag(z.shape), ang(z.shape);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const double x = z.re[i], y = z.im[i];
    mag.data[i] = std::sqrt(x * x + y * y);
    ang.data[i] = angle_of(x, y);
  }
  return {std::move(mag), std::move(ang)};
}

inline CTensor conj(const CTensor& z) {
  CTensor out = z;
  for (double& v : out.im) v = -v;
  return out;
}

// Elementwise complex product; shapes must match or one operand be scalar.
inline CTensor cmul(const CTensor& a, const CTensor& b) {
  if (a.is_scalar() && !b.is_scalar()) {
    CTensor out(b.shape);
    const double ar = a.re[0], ai = a.im[0];
    for (std::size_t i = 0; i < b.numel(); ++i) {
      out.re[i] = ar * b.re[i] - ai * b.im[i];
      out.im[i] = ar * b.im[i] + ai * b.re[i];
    }
    return out;
  }
  if (b.is_scalar() && !a.is_scalar()) return cmul(b, a);
  require_same_shape(a, b, "cmul");
  CTensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    out.re[i] = a.re[i] * b.re[i] - a.im[i] * b.im[i];
    out.im[i] = a.re[i] * b.im[i] + a.im[i] * b.re[i];
  }
  return out;
}

inline CTensor cadd(const CTensor& a, const CTensor& b) {
  require_same_shape(a, b, "cadd");
  CTensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    out.re[i] = a.re[i] + b.re[i];
    out.im[i] = a.im[i] + b.im[i];
  }
  return out;
}

inline CTensor csub(const CTensor& a, const CTensor& b) {
  require_same_shape(a, b, "csub");
  CTensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    out.re[i] = a.re[i] - b.re[i];
    out.im[i] = a.im[i] - b.im[i];
  }
  return out;
}

// sum_i conj(a_i) * b_i
inline std::complex<double> herm_dot(const CTensor& a, const CTensor& b) {
  require_same_shape(a, b, "herm_dot");
  double r = 0.0, i = 0.0;
  for (std::size_t k = 0; k < a.numel(); ++k) {
    r += a.re[k] * b.re[k] + a.im[k] * b.im[k];
    i += a.re[k] * b.im[k] - a.im[k] * b.re[k];
  }
  return {r, i};
}

}  // namespace fc2mfn
