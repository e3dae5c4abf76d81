#ifndef PROTOMOCO_AUGMENT_HPP
#define PROTOMOCO_AUGMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "protomoco/errors.hpp"
#include "protomoco/rng.hpp"
#include "protomoco/tensor.hpp"

namespace protomoco::augment {

/// Channel-major raster with pixel values in [0, 1]. 1 channel (grayscale)
/// or 3 channels (color).
struct ImageTensor {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  ImageTensor() = default;
  ImageTensor(int c, int h, int w)
      : channels(c), height(h), width(w),
        pixels(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_dims(const ImageTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Parameters of the stochastic two-view augmentation family.
struct AugmentationSpec {
  float crop_min = 0.5f;        // lower bound of the crop area fraction
  float crop_max = 1.0f;        // upper bound
  float flip_p = 0.5f;          // horizontal flip probability (strategy 1)
  float jitter = 0.5f;          // color distortion strength (strategy 2)
  float method_w1 = 0.5f;       // weight of strategy 1 (crop/resize/flip)
  float method_w2 = 0.5f;       // weight of strategy 2 (crop/color/resize)
};

inline void validate(const AugmentationSpec& spec) {
  if (!(spec.crop_min > 0.0f) || spec.crop_min > spec.crop_max || spec.crop_max > 1.0f) {
    throw ConfigError("crop area range must satisfy 0 < min <= max <= 1");
  }
  if (spec.flip_p < 0.0f || spec.flip_p > 1.0f) {
    throw ConfigError("flip probability must lie in [0, 1]");
  }
  if (spec.jitter < 0.0f) {
    throw ConfigError("jitter strength must be non-negative");
  }
  if (spec.method_w1 < 0.0f || spec.method_w2 < 0.0f ||
      spec.method_w1 + spec.method_w2 <= 0.0f) {
    throw ConfigError("method weights must be non-negative with positive sum");
  }
}

/// Two augmented views of one source image; the positive-pair unit.
struct ViewPair {
  ImageTensor view_i;
  ImageTensor view_j;
  long source_id = 0;
};

/// Aspect-preserving random crop covering the given fraction of the source
/// area, placed uniformly. Consumes two uniforms: top offset, then left.
inline ImageTensor random_crop(const ImageTensor& img, double area_fraction, SplitMix64& rng) {
  if (!(area_fraction > 0.0) || area_fraction > 1.0) {
    throw ContractError("random_crop: area_fraction must lie in (0, 1]");
  }
  const double side = std::sqrt(area_fraction);
  const int crop_h = static_cast<int>(std::floor(img.height * side + 0.5));
  const int crop_w = static_cast<int>(std::floor(img.width * side + 0.5));
  if (crop_h < 1 || crop_w < 1) {
    throw DegenerateCropError("random_crop: requested crop smaller than 1x1 (fraction " +
                              std::to_string(area_fraction) + " of " +
                              std::to_string(img.height) + "x" + std::to_string(img.width) + ")");
  }
  const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.height - crop_h + 1)));
  const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.width - crop_w + 1)));
  ImageTensor out(img.channels, crop_h, crop_w);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < crop_h; ++y) {
      for (int x = 0; x < crop_w; ++x) {
        out.at(c, y, x) = img.at(c, top + y, left + x);
      }
    }
  }
  return out;
}

/// Corner-aligned bilinear interpolation to the requested size. Resizing to
/// the source size is the identity.
inline ImageTensor bilinear_resize(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ContractError("bilinear_resize: output extents must be >= 1");
  }
  if (out_h == img.height && out_w == img.width) return img;
  ImageTensor out(img.channels, out_h, out_w);
  const double sy = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const double fy = y * sy;
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double wy = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        const double fx = x * sx;
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, img.width - 1);
        const double wx = fx - x0;
        const double v = (1 - wy) * ((1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1)) +
                         wy * ((1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1));
        out.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

/// Mirrors the columns with probability p; consumes exactly one uniform.
inline ImageTensor horizontal_flip(const ImageTensor& img, SplitMix64& rng, double p) {
  if (p < 0.0 || p > 1.0) throw ContractError("horizontal_flip: p must lie in [0, 1]");
  const double u = rng.uniform();
  if (u >= p) return img;
  ImageTensor out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
      }
    }
  }
  return out;
}

/// Deterministic core of the color distortion given the drawn factors:
/// brightness scale, contrast scale about the post-brightness mean, then
/// per-channel gains (3-channel images only), clamped to [0, 1].
inline ImageTensor apply_color_factors(const ImageTensor& img, double brightness, double contrast,
                                       const std::vector<double>& gains) {
  ImageTensor out = img;
  double mean = 0.0;
  for (auto& p : out.pixels) {
    p = static_cast<float>(p * brightness);
    mean += p;
  }
  mean /= static_cast<double>(out.pixels.size());
  // mean*(1-c) + p*c rather than mean + (p-mean)*c: bit-exact identity at c == 1.
  const double base = mean * (1.0 - contrast);
  for (auto& p : out.pixels) {
    p = static_cast<float>(base + p * contrast);
  }
  if (out.channels == 3 && gains.size() == 3) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
          out.at(c, y, x) = static_cast<float>(out.at(c, y, x) * gains[c]);
        }
      }
    }
  }
  for (auto& p : out.pixels) p = std::clamp(p, 0.0f, 1.0f);
  return out;
}

/// Random brightness/contrast (range 1 +- 0.8*strength) and, for 3-channel
/// images, per-channel gain (1 +- 0.2*strength). Draw order: brightness,
/// contrast, then gains for channels 0..2; grayscale consumes no gain draws.
inline ImageTensor color_distort(const ImageTensor& img, double strength, SplitMix64& rng) {
  if (strength < 0.0) throw ContractError("color_distort: strength must be non-negative");
  const double b = rng.uniform(1.0 - 0.8 * strength, 1.0 + 0.8 * strength);
  const double c = rng.uniform(1.0 - 0.8 * strength, 1.0 + 0.8 * strength);
  std::vector<double> gains;
  if (img.channels == 3) {
    gains.resize(3);
    for (int ch = 0; ch < 3; ++ch) {
      gains[ch] = rng.uniform(1.0 - 0.2 * strength, 1.0 + 0.2 * strength);
    }
  }
  return apply_color_factors(img, b, c, gains);
}

/// One randomized view. Draw order per view: strategy selector, crop area
/// fraction, crop offsets, then either flip (strategy 1, after resizing) or
/// color factors (strategy 2, before resizing).
inline ImageTensor make_view(const ImageTensor& img, const AugmentationSpec& spec,
                             SplitMix64& rng) {
  const double w1 = spec.method_w1 / (spec.method_w1 + spec.method_w2);
  const bool strategy1 = rng.uniform() < w1;
  const double area = rng.uniform(spec.crop_min, spec.crop_max);
  ImageTensor cropped = random_crop(img, area, rng);
  if (strategy1) {
    ImageTensor resized = bilinear_resize(cropped, img.height, img.width);
    return horizontal_flip(resized, rng, spec.flip_p);
  }
  ImageTensor colored = color_distort(cropped, spec.jitter, rng);
  return bilinear_resize(colored, img.height, img.width);
}

/// Two independently drawn views of the same source image (view_i first).
inline ViewPair make_view_pair(const ImageTensor& img, const AugmentationSpec& spec,
                               SplitMix64& rng, long source_id = 0) {
  validate(spec);
  ViewPair pair;
  pair.view_i = make_view(img, spec, rng);
  pair.view_j = make_view(img, spec, rng);
  pair.source_id = source_id;
  return pair;
}

/// Copy into the [C x H x W] tensor fed to encoders.
inline Tensor<float> to_tensor(const ImageTensor& img) {
  return Tensor<float>({img.channels, img.height, img.width}, img.pixels);
}

}  // namespace protomoco::augment

#endif  // PROTOMOCO_AUGMENT_HPP
