#include "fc2mfn/ctensor.hpp"

#include <gtest/gtest.h>

#include "fc2mfn/rng.hpp"

using namespace fc2mfn;

namespace {

CTensor random_tensor(SplitMix64& g, Shape shape, double lo = -3.0, double hi = 3.0) {
  CTensor t(std::move(shape));
  for (double& v : t.re) v = g.uniform(lo, hi);
  for (double& v : t.im) v = g.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(CTensor, ToPolarFixedValues) {
  CTensor z(Shape{3});
  z.re = {1.0, 1.0, 0.0};
  z.im = {0.0, 1.0, 0.0};
  const auto [mag, ang] = to_polar(z);
  EXPECT_DOUBLE_EQ(mag.data[0], 1.0);
  EXPECT_DOUBLE_EQ(ang.data[0], 0.0);
  EXPECT_NEAR(mag.data[1], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(ang.data[1], M_PI / 4.0, 1e-15);
  // the angle of the zero element is 0 by convention
  EXPECT_DOUBLE_EQ(mag.data[2], 0.0);
  EXPECT_DOUBLE_EQ(ang.data[2], 0.0);
}

TEST(CTensor, AngleIsFullPlane) {
  const auto [mag, ang] = to_polar(CTensor::scalar(-1.0, 0.0));
  EXPECT_DOUBLE_EQ(mag.data[0], 1.0);
  EXPECT_DOUBLE_EQ(ang.data[0], M_PI);
  const auto [mag2, ang2] = to_polar(CTensor::scalar(0.0, -1.0));
  EXPECT_DOUBLE_EQ(ang2.data[0], -M_PI / 2.0);
}

TEST(CTensor, PolarRoundTrip) {
  SplitMix64 g(11);
  CTensor z = random_tensor(g, Shape{4, 7});
  const auto [mag, ang] = to_polar(z);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    EXPECT_NEAR(mag.data[i] * std::cos(ang.data[i]), z.re[i], 1e-12);
    EXPECT_NEAR(mag.data[i] * std::sin(ang.data[i]), z.im[i], 1e-12);
    EXPECT_GT(ang.data[i], -M_PI);
    EXPECT_LE(ang.data[i], M_PI);
  }
}

TEST(CTensor, CmulFixedValues) {
  // i * (1+2i) = -2 + i
  CTensor p = cmul(CTensor::scalar(0.0, 1.0), CTensor::scalar(1.0, 2.0));
  EXPECT_DOUBLE_EQ(p.re[0], -2.0);
  EXPECT_DOUBLE_EQ(p.im[0], 1.0);
  // conj(z) * z = |z|^2 for z = 3+4i
  CTensor z = CTensor::scalar(3.0, 4.0);
  CTensor m = cmul(conj(z), z);
  EXPECT_DOUBLE_EQ(m.re[0], 25.0);
  EXPECT_DOUBLE_EQ(m.im[0], 0.0);
}

TEST(CTensor, CmulIdentityExact) {
  SplitMix64 g(12);
  CTensor z = random_tensor(g, Shape{5, 3});
  CTensor one = CTensor::scalar(1.0, 0.0);
  CTensor p = cmul(one, z);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    EXPECT_EQ(p.re[i], z.re[i]);
    EXPECT_EQ(p.im[i], z.im[i]);
  }
}

TEST(CTensor, CmulCommutativeAssociative) {
  SplitMix64 g(13);
  for (int trial = 0; trial < 20; ++trial) {
    CTensor a = random_tensor(g, Shape{6});
    CTensor b = random_tensor(g, Shape{6});
    CTensor c = random_tensor(g, Shape{6});
    CTensor ab = cmul(a, b), ba = cmul(b, a);
    CTensor ab_c = cmul(cmul(a, b), c), a_bc = cmul(a, cmul(b, c));
    for (std::size_t i = 0; i < a.numel(); ++i) {
      EXPECT_NEAR(ab.re[i], ba.re[i], 1e-12);
      EXPECT_NEAR(ab.im[i], ba.im[i], 1e-12);
      EXPECT_NEAR(ab_c.re[i], a_bc.re[i], 1e-12);
      EXPECT_NEAR(ab_c.im[i], a_bc.im[i], 1e-12);
    }
  }
}

TEST(CTensor, CmulShapeMismatchThrows) {
  CTensor a(Shape{2, 2}), b(Shape{3});
  EXPECT_THROW(cmul(a, b), ShapeError);
}

TEST(CTensor, HermDotFixedValues) {
  CTensor a(Shape{1});
  a.re = {1.0};
  a.im = {1.0};
  const auto d = herm_dot(a, a);
  EXPECT_DOUBLE_EQ(d.real(), 2.0);
  EXPECT_DOUBLE_EQ(d.imag(), 0.0);

  CTensor zero(Shape{4});
  EXPECT_DOUBLE_EQ(herm_dot(zero, zero).real(), 0.0);

  CTensor b(Shape{2});
  b.re = {1.0, 0.0};
  b.im = {0.0, 1.0};
  const auto d2 = herm_dot(b, b);
  EXPECT_DOUBLE_EQ(d2.real(), 2.0);
  EXPECT_DOUBLE_EQ(d2.imag(), 0.0);
}

TEST(CTensor, HermDotSelfIsRealNonNegative) {
  SplitMix64 g(14);
  for (int trial = 0; trial < 50; ++trial) {
    CTensor a = random_tensor(g, Shape{17});
    const auto d = herm_dot(a, a);
    EXPECT_GE(d.real(), 0.0);
    EXPECT_NEAR(d.imag(), 0.0, 1e-12);
  }
}

TEST(CTensor, HermDotShapeMismatchThrows) {
  CTensor a(Shape{2}), b(Shape{3});
  EXPECT_THROW(herm_dot(a, b), ShapeError);
}
