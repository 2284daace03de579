#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cxrnet/errors.hpp"
#include "cxrnet/image.hpp"
#include "cxrnet/labels.hpp"
#include "cxrnet/rng.hpp"
#include "cxrnet/tensor.hpp"

namespace cxrnet {

/// Augmentation ranges and preprocessing geometry. A stated magnitude means
/// a symmetric range: rotation 30 samples from [-30, 30] degrees, zoom 0.2
/// from [0.8, 1.2], shifts 0.1 from +-10% of the extent.
struct AugmentConfig {
  double rotation_degrees = 30.0;
  double zoom_fraction = 0.2;
  double width_shift_fraction = 0.1;
  double height_shift_fraction = 0.1;
  bool horizontal_flip = true;
  double crop_top_fraction = 0.08;
  std::int64_t target_width = 150;
  std::int64_t target_height = 150;

  void validate() const {
    if (!(rotation_degrees >= 0.0 && rotation_degrees < 180.0))
      throw ConfigError("rotation_degrees must be in [0, 180)");
    if (!(zoom_fraction >= 0.0 && zoom_fraction < 1.0)) throw ConfigError("zoom_fraction must be in [0, 1)");
    if (!(width_shift_fraction >= 0.0 && width_shift_fraction < 1.0))
      throw ConfigError("width_shift_fraction must be in [0, 1)");
    if (!(height_shift_fraction >= 0.0 && height_shift_fraction < 1.0))
      throw ConfigError("height_shift_fraction must be in [0, 1)");
    if (!(crop_top_fraction >= 0.0 && crop_top_fraction < 1.0))
      throw ConfigError("crop_top_fraction must be in [0, 1)");
    if (target_width < 1 || target_height < 1) throw ConfigError("target size must be positive");
  }
};

/// One sampled affine transform: rotation about the image center, zoom,
/// pixel shifts and an optional horizontal flip.
struct AugmentParams {
  double angle_degrees = 0.0;
  double zoom = 1.0;
  double dx = 0.0;
  double dy = 0.0;
  bool flip = false;

  bool is_identity() const {
    return angle_degrees == 0.0 && zoom == 1.0 && dx == 0.0 && dy == 0.0 && !flip;
  }
};

/// Draw order is fixed: angle, zoom, dx, dy, then the flip gate.
inline AugmentParams sample_augment_params(const AugmentConfig& cfg, std::int64_t width,
                                           std::int64_t height, Rng& rng) {
  AugmentParams p;
  p.angle_degrees = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees);
  p.zoom = rng.uniform(1.0 - cfg.zoom_fraction, 1.0 + cfg.zoom_fraction);
  p.dx = rng.uniform(-cfg.width_shift_fraction, cfg.width_shift_fraction) * static_cast<double>(width);
  p.dy = rng.uniform(-cfg.height_shift_fraction, cfg.height_shift_fraction) * static_cast<double>(height);
  p.flip = cfg.horizontal_flip && rng.bernoulli(0.5);
  return p;
}

/// Removes the top floor(fraction * height) rows.
inline GrayImage crop_top(const GrayImage& img, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("crop fraction must be in [0, 1)");
  const std::int64_t removed = static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(img.height)));
  const std::int64_t new_height = img.height - removed;
  if (new_height < 1) throw DataError("crop_top leaves no rows");
  GrayImage out;
  out.width = img.width;
  out.height = new_height;
  out.pixels.assign(img.pixels.begin() + static_cast<std::ptrdiff_t>(removed * img.width), img.pixels.end());
  return out;
}

namespace detail {

/// Clamped bilinear sample at (sx, sy); with integer coordinates the result
/// is the pixel value exactly.
inline double bilinear_clamped(const GrayImage& img, double sx, double sy) {
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
  const double fx = sx - static_cast<double>(x0);
  const double fy = sy - static_cast<double>(y0);
  auto cl = [](std::int64_t v, std::int64_t hi) { return std::clamp<std::int64_t>(v, 0, hi); };
  const std::int64_t xa = cl(x0, img.width - 1), xb = cl(x0 + 1, img.width - 1);
  const std::int64_t ya = cl(y0, img.height - 1), yb = cl(y0 + 1, img.height - 1);
  const double v00 = img.at(ya, xa), v01 = img.at(ya, xb);
  const double v10 = img.at(yb, xa), v11 = img.at(yb, xb);
  const double top = (1.0 - fx) * v00 + fx * v01;
  const double bot = (1.0 - fx) * v10 + fx * v11;
  return (1.0 - fy) * top + fy * bot;
}

/// Bilinear sample where taps outside the raster contribute 0 (black fill
/// for coordinates the transform pulls from beyond the source).
template <typename At>
double bilinear_zero_fill(std::int64_t width, std::int64_t height, double sx, double sy, At&& at) {
  if (sx < -1.0 || sx > static_cast<double>(width) || sy < -1.0 || sy > static_cast<double>(height)) {
    return 0.0;
  }
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
  const double fx = sx - static_cast<double>(x0);
  const double fy = sy - static_cast<double>(y0);
  auto tap = [&](std::int64_t yy, std::int64_t xx) -> double {
    if (xx < 0 || xx >= width || yy < 0 || yy >= height) return 0.0;
    return at(yy, xx);
  };
  const double top = (1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1);
  const double bot = (1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1);
  return (1.0 - fy) * top + fy * bot;
}

/// Inverse affine map from output pixel to source coordinates.
struct InverseAffine {
  double cos_t, sin_t, inv_zoom, dx, dy, cx_in, cy_in, cx_out, cy_out;
  bool flip;

  static InverseAffine from(const AugmentParams& p, std::int64_t width, std::int64_t height) {
    const double rad = p.angle_degrees * 3.14159265358979323846 / 180.0;
    return {std::cos(rad), std::sin(rad), 1.0 / p.zoom, p.dx, p.dy,
            (static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0,
            (static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0,
            p.flip};
  }

  void map(double x, double y, double& sx, double& sy) const {
    const double ox = x - cx_out - dx;
    const double oy = y - cy_out - dy;
    // Rotate by -angle, then unzoom, then unflip.
    double rx = cos_t * ox + sin_t * oy;
    double ry = -sin_t * ox + cos_t * oy;
    rx *= inv_zoom;
    ry *= inv_zoom;
    if (flip) rx = -rx;
    sx = rx + cx_in;
    sy = ry + cy_in;
  }
};

template <typename Sampler, typename Writer>
void warp(std::int64_t width, std::int64_t height, const AugmentParams& p, Sampler&& sample, Writer&& write) {
  const InverseAffine inv = InverseAffine::from(p, width, height);
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      double sx, sy;
      inv.map(static_cast<double>(x), static_cast<double>(y), sx, sy);
      write(y, x, sample(sx, sy));
    }
  }
}

}  // namespace detail

/// Applies the sampled transform to an 8-bit image, bilinear resampling,
/// out-of-source coordinates filled with 0.
inline GrayImage augment(const GrayImage& img, const AugmentParams& p) {
  GrayImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(img.pixels.size());
  auto sample = [&img](double sx, double sy) -> double {
    return detail::bilinear_zero_fill(
        img.width, img.height, sx, sy,
        [&img](std::int64_t y, std::int64_t x) { return static_cast<double>(img.at(y, x)); });
  };
  detail::warp(img.width, img.height, p, sample, [&out](std::int64_t y, std::int64_t x, double v) {
    out.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  });
  return out;
}

/// Convenience draw-and-apply form.
inline GrayImage augment(const GrayImage& img, const AugmentConfig& cfg, Rng& rng) {
  return augment(img, sample_augment_params(cfg, img.width, img.height, rng));
}

/// Same transform applied to a normalized (H, W, 1) tensor. This is the
/// training path, where augmentation follows normalization.
template <typename T>
Tensor<T> augment_tensor(const Tensor<T>& x, const AugmentParams& p) {
  if (x.shape().rank() != 3 || x.shape()[2] != 1) {
    throw ShapeError("augment_tensor expects an (H, W, 1) tensor, got " + x.shape().str());
  }
  const std::int64_t height = x.shape()[0], width = x.shape()[1];
  Tensor<T> out(x.shape());
  auto sample = [&](double sx, double sy) -> double {
    return detail::bilinear_zero_fill(width, height, sx, sy, [&](std::int64_t yy, std::int64_t xx) {
      return static_cast<double>(x[yy * width + xx]);
    });
  };
  detail::warp(width, height, p, sample, [&out, width](std::int64_t y, std::int64_t x, double v) {
    out[y * width + x] = static_cast<T>(v);
  });
  return out;
}

/// Bilinear resize with half-integer pixel centers (corner alignment off).
/// A same-size resize is the bitwise identity.
inline GrayImage resize_bilinear(const GrayImage& img, std::int64_t target_width, std::int64_t target_height) {
  if (target_width < 1 || target_height < 1) throw ConfigError("resize target must be positive");
  GrayImage out;
  out.width = target_width;
  out.height = target_height;
  out.pixels.resize(static_cast<std::size_t>(target_width * target_height));
  const double sx_scale = static_cast<double>(img.width) / static_cast<double>(target_width);
  const double sy_scale = static_cast<double>(img.height) / static_cast<double>(target_height);
  for (std::int64_t y = 0; y < target_height; ++y) {
    const double sy = (static_cast<double>(y) + 0.5) * sy_scale - 0.5;
    for (std::int64_t x = 0; x < target_width; ++x) {
      const double sx = (static_cast<double>(x) + 0.5) * sx_scale - 0.5;
      const double v = detail::bilinear_clamped(img, sx, sy);
      out.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

/// Grayscale normalization: intensity / 255 as an (H, W, 1) tensor.
template <typename T>
Tensor<T> normalize(const GrayImage& img) {
  Tensor<T> out(Shape{img.height, img.width, 1});
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<T>(img.pixels[static_cast<std::size_t>(i)]) / T(255);
  }
  return out;
}

/// The fixed ingestion pipeline: crop -> resize -> normalize. Training
/// additionally augments the result; evaluation does not.
template <typename T>
Tensor<T> preprocess(const GrayImage& img, const AugmentConfig& cfg) {
  return normalize<T>(resize_bilinear(crop_top(img, cfg.crop_top_fraction), cfg.target_width, cfg.target_height));
}

struct Sample {
  GrayImage image;
  Label label = Label::normal;
  std::string path;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;

  std::size_t size() const { return samples.size(); }
  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (const auto& s : samples)
      if (s.label == l) ++n;
    return n;
  }
};

/// Loads `<root>/normal/*` and `<root>/covid/*` in lexicographic file
/// order. Undecodable files are skipped with a warning record; a class with
/// no decodable image is an error.
inline Dataset load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  Dataset ds;
  const std::pair<const char*, Label> classes[] = {{"normal", Label::normal}, {"covid", Label::covid}};
  for (const auto& [dir_name, label] : classes) {
    const fs::path dir = fs::path(root) / dir_name;
    if (!fs::is_directory(dir)) {
      throw DataError("dataset root " + root + " has no '" + dir_name + "' class directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t decoded = 0;
    for (const auto& file : files) {
      try {
        Sample s;
        s.image = load_image(file.string());
        s.label = label;
        s.path = file.string();
        ds.samples.push_back(std::move(s));
        ++decoded;
      } catch (const DataError& e) {
        ds.warnings.push_back(std::string("skipped ") + file.string() + ": " + e.what());
      }
    }
    if (decoded == 0) {
      throw DataError("class directory '" + std::string(dir_name) + "' under " + root +
                      " contains no decodable image");
    }
  }
  return ds;
}

/// Stratified split: each class is shuffled with the seed and the first
/// round(ratio * class_count) samples go to the training side.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
  Dataset train, val;
  for (const Label label : {Label::normal, Label::covid}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (ds.samples[i].label == label) idx.push_back(i);
    if (idx.empty()) continue;
    Rng rng = Rng::derive(seed, 0x5b117u, static_cast<std::uint64_t>(label));
    rng.shuffle(idx.begin(), idx.end());
    const auto take = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(idx.size())));
    if (take == 0 || take == idx.size()) {
      throw DataError(std::string("split ratio ") + std::to_string(ratio) + " leaves class '" +
                      label_name(label) + "' empty on one side");
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < take ? train : val).samples.push_back(ds.samples[idx[i]]);
    }
  }
  return {std::move(train), std::move(val)};
}

}  // namespace cxrnet
