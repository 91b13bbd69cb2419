#include "segref/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace segref {

void ImageRaster::validate() const {
  if (height == 0 || width == 0) fail(ErrorCode::kShapeMismatch, "image has zero extent");
  if (channels != 1 && channels != 3) {
    fail(ErrorCode::kShapeMismatch, "image must have 1 or 3 channels, got " +
                                        std::to_string(channels));
  }
  if (samples.size() != height * width * channels) {
    fail(ErrorCode::kShapeMismatch, "image sample count does not match its shape");
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) fail(ErrorCode::kInvalidArgument, "sigma must be nonnegative");
  if (sigma == 0.0) return {1.0};
  const auto radius = static_cast<std::size_t>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

FloatImage gaussian_smooth(const ImageRaster& img, double sigma) {
  img.validate();
  FloatImage out{img.height, img.width, img.channels, {}};
  out.samples.assign(img.samples.begin(), img.samples.end());
  if (sigma == 0.0) return out;

  const std::vector<double> k = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  const auto w = static_cast<std::ptrdiff_t>(img.width);
  const std::size_t ch = img.channels;
  std::vector<float> tmp(out.samples.size());

  auto clamp = [](std::ptrdiff_t v, std::ptrdiff_t hi) {
    return std::clamp<std::ptrdiff_t>(v, 0, hi - 1);
  };
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          acc += k[static_cast<std::size_t>(t + radius)] *
                 out.samples[(static_cast<std::size_t>(y * w + clamp(x + t, w))) * ch + c];
        }
        tmp[static_cast<std::size_t>(y * w + x) * ch + c] = static_cast<float>(acc);
      }
    }
  }
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          acc += k[static_cast<std::size_t>(t + radius)] *
                 tmp[(static_cast<std::size_t>(clamp(y + t, h) * w + x)) * ch + c];
        }
        out.samples[static_cast<std::size_t>(y * w + x) * ch + c] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

namespace {

struct Edge {
  float weight;
  std::uint32_t a;
  std::uint32_t b;
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0u);
  }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Union by size; on equal sizes the lower id becomes the root.
  std::uint32_t join(std::uint32_t a, std::uint32_t b, double weight) {
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    internal_[a] = std::max({internal_[a], internal_[b], weight});
    return a;
  }

  std::size_t size(std::uint32_t root) const { return size_[root]; }
  double internal(std::uint32_t root) const { return internal_[root]; }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<double> internal_;
};

}  // namespace

SegmentMaskSet felzenszwalb_segment(const ImageRaster& img, const FelzenszwalbParams& params) {
  img.validate();
  if (!(params.scale > 0.0)) fail(ErrorCode::kInvalidArgument, "scale must be positive");
  const FloatImage smooth = gaussian_smooth(img, params.sigma);
  const std::size_t h = img.height, w = img.width, ch = img.channels;
  const std::size_t n = h * w;
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    fail(ErrorCode::kInvalidArgument, "image too large");
  }

  auto diff = [&](std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t c = 0; c < ch; ++c) {
      const double d = smooth.samples[p * ch + c] - smooth.samples[q * ch + c];
      s += d * d;
    }
    return static_cast<float>(std::sqrt(s));
  };

  std::vector<Edge> edges;
  edges.reserve(n * 4);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      auto add = [&](std::size_t q) {
        edges.push_back({diff(p, q), static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(q)});
      };
      if (x + 1 < w) add(p + 1);
      if (y + 1 < h) add(p + w);
      if (x + 1 < w && y + 1 < h) add(p + w + 1);
      if (x + 1 < w && y > 0) add(p - w + 1);
    }
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& l, const Edge& r) { return l.weight < r.weight; });

  DisjointSets sets(n);
  for (const Edge& e : edges) {
    const std::uint32_t a = sets.find(e.a);
    const std::uint32_t b = sets.find(e.b);
    if (a == b) continue;
    const double ta = sets.internal(a) + params.scale / static_cast<double>(sets.size(a));
    const double tb = sets.internal(b) + params.scale / static_cast<double>(sets.size(b));
    if (e.weight <= std::min(ta, tb)) sets.join(a, b, e.weight);
  }
  // Small components join the neighbor across their lowest remaining edge.
  for (const Edge& e : edges) {
    const std::uint32_t a = sets.find(e.a);
    const std::uint32_t b = sets.find(e.b);
    if (a != b && (sets.size(a) < params.min_size || sets.size(b) < params.min_size)) {
      sets.join(a, b, e.weight);
    }
  }

  std::vector<std::uint32_t> dense(n, kIgnoreLabel);
  std::vector<std::uint32_t> ids(n);
  std::uint32_t next = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint32_t root = sets.find(static_cast<std::uint32_t>(p));
    if (dense[root] == kIgnoreLabel) dense[root] = next++;
    ids[p] = dense[root];
  }
  return SegmentMaskSet::partition(h, w, next, std::move(ids));
}

}  // namespace segref
