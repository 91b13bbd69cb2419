#include <cmath>
#include <random>
#include <vector>

#include "segref/segmenter.hpp"
#include "support/segments.hpp"
#include "support/testing.hpp"

namespace segref {
namespace {

using testing::random_image;

ImageRaster solid(std::size_t h, std::size_t w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return testing::solid_image(h, w, r, g, b);
}

void expect_connected_partition(const SegmentMaskSet& s, std::size_t min_size) {
  EXPECT_EQ(testing::partition_violation(s, min_size), "");
}

TEST(GaussianKernel, NormalizedSampledGaussian) {
  const auto k = gaussian_kernel(1.0);
  ASSERT_EQ(k.size(), 9u);
  double sum = 0.0;
  for (double v : k) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_NEAR(k[5] / k[4], std::exp(-0.5), 1e-12);
  EXPECT_EQ(gaussian_kernel(0.0), (std::vector<double>{1.0}));
  EXPECT_SEGREF_ERROR(gaussian_kernel(-1.0), kInvalidArgument);
}

TEST(GaussianSmooth, SigmaZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const ImageRaster img = random_image(rng);
  const FloatImage out = gaussian_smooth(img, 0.0);
  for (std::size_t i = 0; i < img.samples.size(); ++i) EXPECT_EQ(out.samples[i], img.samples[i]);
}

TEST(GaussianSmooth, ConstantStaysConstant) {
  const FloatImage out = gaussian_smooth(solid(9, 7, 40, 80, 120), 2.5);
  for (std::size_t i = 0; i < out.samples.size(); i += 3) {
    EXPECT_NEAR(out.samples[i], 40.0f, 1e-4);
    EXPECT_NEAR(out.samples[i + 2], 120.0f, 1e-4);
  }
}

TEST(GaussianSmooth, ImpulseMatchesAnalyticKernel) {
  ImageRaster img{21, 21, 1, std::vector<std::uint8_t>(21 * 21, 0)};
  img.samples[10 * 21 + 10] = 255;
  const FloatImage out = gaussian_smooth(img, 1.0);
  double z = 0.0;
  for (int t = -4; t <= 4; ++t) z += std::exp(-t * t / 2.0);
  for (int dy = -4; dy <= 4; ++dy) {
    for (int dx = -4; dx <= 4; ++dx) {
      const double want = 255.0 * std::exp(-(dx * dx + dy * dy) / 2.0) / (z * z);
      EXPECT_NEAR(out.at(10 + dy, 10 + dx, 0), want, 1e-4);
    }
  }
}

TEST(Felzenszwalb, UniformImageIsOneSegment) {
  EXPECT_EQ(felzenszwalb_segment(solid(16, 12, 10, 200, 30), {}).size(), 1u);
}

TEST(Felzenszwalb, MinSizeEqualToImageForcesOneSegment) {
  std::mt19937_64 rng(2);
  const ImageRaster img = random_image(rng);
  FelzenszwalbParams p;
  p.min_size = img.height * img.width;
  EXPECT_EQ(felzenszwalb_segment(img, p).size(), 1u);
}

TEST(Felzenszwalb, TwoHalvesAreTwoSegments) {
  const ImageRaster img = testing::halves_image(12, 16);
  FelzenszwalbParams p;
  p.scale = 10.0;
  p.sigma = 0.0;
  p.min_size = 12 * 16 / 2;
  const SegmentMaskSet s = felzenszwalb_segment(img, p);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.ids()[0], 0u);
  EXPECT_EQ(s.ids()[15], 1u);
}

TEST(Felzenszwalb, PropertiesOnRandomImages) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const ImageRaster img = random_image(rng);
    FelzenszwalbParams p;
    p.scale = 50.0 + static_cast<double>(rng() % 500);
    p.sigma = 0.2 * static_cast<double>(rng() % 5);
    p.min_size = 1 + rng() % 30;
    expect_connected_partition(felzenszwalb_segment(img, p), p.min_size);
  }
}

TEST(Felzenszwalb, Deterministic) {
  std::mt19937_64 rng(4);
  const ImageRaster img = random_image(rng);
  EXPECT_EQ(felzenszwalb_segment(img, {}), felzenszwalb_segment(img, {}));
}

TEST(Felzenszwalb, Errors) {
  FelzenszwalbParams p;
  p.scale = 0.0;
  EXPECT_SEGREF_ERROR(felzenszwalb_segment(solid(2, 2, 0, 0, 0), p), kInvalidArgument);
  EXPECT_SEGREF_ERROR(felzenszwalb_segment(ImageRaster{2, 2, 2, std::vector<std::uint8_t>(8)}, {}),
                      kShapeMismatch);
  EXPECT_SEGREF_ERROR(felzenszwalb_segment(ImageRaster{2, 2, 3, std::vector<std::uint8_t>(5)}, {}),
                      kShapeMismatch);
}

TEST(Felzenszwalb, DocumentedDefaults) {
  const FelzenszwalbParams p;
  EXPECT_EQ(p.scale, 500.0);
  EXPECT_EQ(p.sigma, 0.8);
  EXPECT_EQ(p.min_size, 20u);
}

}  // namespace
}  // namespace segref
