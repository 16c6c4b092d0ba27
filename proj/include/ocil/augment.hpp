#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "ocil/data.hpp"
#include "ocil/errors.hpp"

namespace ocil {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double draw(Rng& rng) const {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
};

struct AugmentPolicy {
  double flip_probability = 0.5;
  Interval brightness{0.6, 1.4};  // multiplicative factor
  Interval contrast{0.6, 1.4};    // scale about the channel mean
  Interval saturation{0.6, 1.4};  // blend with luminance; colour images only
  double blur_probability = 0.5;
  Interval blur_sigma{0.1, 2.0};
  double feature_noise_sigma = 0.5;
  Interval feature_scale{1.0, 1.0};
  std::uint64_t seed = 0;

  static AugmentPolicy identity() {
    AugmentPolicy p;
    p.flip_probability = 0.0;
    p.brightness = {1.0, 1.0};
    p.contrast = {1.0, 1.0};
    p.saturation = {1.0, 1.0};
    p.blur_probability = 0.0;
    p.feature_noise_sigma = 0.0;
    p.feature_scale = {1.0, 1.0};
    return p;
  }

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(flip_probability) || !prob(blur_probability))
      throw InvalidConfig("augmentation probabilities must lie in [0, 1]");
    for (const auto& r : {brightness, contrast, saturation, blur_sigma, feature_scale})
      if (!(r.lo <= r.hi)) throw InvalidConfig("augmentation range has lo > hi");
    if (brightness.lo < 0.0 || contrast.lo < 0.0 || saturation.lo < 0.0)
      throw InvalidConfig("colour jitter factors must be non-negative");
    if (feature_scale.lo <= 0.0) throw InvalidConfig("feature scale must be positive");
    if (blur_probability > 0.0 && blur_sigma.lo <= 0.0)
      throw InvalidConfig("blur sigma must be positive");
    if (feature_noise_sigma < 0.0) throw InvalidConfig("feature noise sigma must be >= 0");
  }
};

// Half-sample symmetric reflection: -1 -> 0, n -> n-1.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

inline void flip_horizontal(std::vector<double>& img, const ImageShape& shape) {
  const auto H = shape.height, W = shape.width, C = shape.channels;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W / 2; ++x)
      for (std::size_t c = 0; c < C; ++c)
        std::swap(img[(y * W + x) * C + c], img[(y * W + (W - 1 - x)) * C + c]);
}

// Separable blur: horizontal then vertical pass, reflective boundary.
inline void gaussian_blur(std::vector<double>& img, const ImageShape& shape, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto H = shape.height, W = shape.width, C = shape.channels;
  std::vector<double> tmp(img.size(), 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const auto xx = reflect_index(static_cast<std::ptrdiff_t>(x) + k, W);
          acc += kernel[static_cast<std::size_t>(k + radius)] * img[(y * W + xx) * C + c];
        }
        tmp[(y * W + x) * C + c] = acc;
      }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const auto yy = reflect_index(static_cast<std::ptrdiff_t>(y) + k, H);
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[(yy * W + x) * C + c];
        }
        img[(y * W + x) * C + c] = acc;
      }
}

inline std::vector<double> augment_image(std::vector<double> img, const ImageShape& shape,
                                         const AugmentPolicy& policy, Rng& rng) {
  if (img.size() != shape.size()) throw ShapeError("image payload does not match its shape");
  const auto C = shape.channels;
  const std::size_t pixels = shape.height * shape.width;

  if (policy.flip_probability > 0.0 &&
      std::bernoulli_distribution(policy.flip_probability)(rng))
    flip_horizontal(img, shape);

  const double brightness = policy.brightness.draw(rng);
  const double contrast = policy.contrast.draw(rng);
  const double saturation = C >= 3 ? policy.saturation.draw(rng) : 1.0;
  if (brightness != 1.0 || contrast != 1.0 || saturation != 1.0) {
    std::vector<double> mean(C, 0.0);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t c = 0; c < C; ++c) mean[c] += img[p * C + c];
    for (auto& m : mean) m /= static_cast<double>(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      double* px = &img[p * C];
      if (C >= 3 && saturation != 1.0) {
        const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        for (std::size_t c = 0; c < 3; ++c) px[c] = gray + saturation * (px[c] - gray);
      }
      for (std::size_t c = 0; c < C; ++c)
        px[c] = std::clamp(((px[c] - mean[c]) * contrast + mean[c]) * brightness, 0.0, 1.0);
    }
  }

  if (policy.blur_probability > 0.0 &&
      std::bernoulli_distribution(policy.blur_probability)(rng)) {
    gaussian_blur(img, shape, policy.blur_sigma.draw(rng));
    for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
  }
  return img;
}

inline std::vector<double> augment_features(std::vector<double> vec, const AugmentPolicy& policy,
                                            Rng& rng) {
  if (policy.feature_noise_sigma < 0.0) throw InvalidInput("feature noise sigma must be >= 0");
  const double scale = policy.feature_scale.draw(rng);
  if (policy.feature_noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, policy.feature_noise_sigma);
    for (auto& v : vec) v = scale * v + noise(rng);
  } else if (scale != 1.0) {
    for (auto& v : vec) v *= scale;
  }
  return vec;
}

inline Sample augment_sample(const Sample& s, const AugmentPolicy& policy, Rng& rng) {
  Sample out = s;
  out.payload = s.shape.is_image() ? augment_image(s.payload, s.shape, policy, rng)
                                   : augment_features(s.payload, policy, rng);
  return out;
}

// B_c: exemplar positions (mask true) augmented, everything else copied.
inline std::vector<Sample> make_contrastive_batch(std::span<const Sample> batch,
                                                  const std::vector<bool>& exemplar_mask,
                                                  const AugmentPolicy& policy, Rng& rng) {
  if (batch.size() != exemplar_mask.size())
    throw ShapeError("exemplar mask length does not match batch");
  std::vector<Sample> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out.push_back(exemplar_mask[i] ? augment_sample(batch[i], policy, rng) : batch[i]);
  return out;
}

}  // namespace ocil
