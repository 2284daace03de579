#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "cxrnet/image.hpp"
#include "cxrnet/rng.hpp"

namespace cxrnet {

/// Seeded two-class fixture corpus: smooth bright-blob images stand in for
/// the normal class, oriented high-frequency stripe textures for the covid
/// class. Small enough to train against in minutes, separable enough that a
/// correct pipeline classifies it nearly perfectly.
struct SyntheticOptions {
  std::int64_t width = 150;
  std::int64_t height = 150;
  int per_class = 125;
  std::uint64_t seed = 1;
};

inline GrayImage synthetic_blob(std::int64_t width, std::int64_t height, Rng& rng) {
  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width * height));
  const double cx = rng.uniform(0.3, 0.7) * static_cast<double>(width);
  const double cy = rng.uniform(0.3, 0.7) * static_cast<double>(height);
  const double sigma = rng.uniform(0.12, 0.25) * static_cast<double>(width);
  const double amp = rng.uniform(120.0, 200.0);
  const double base = rng.uniform(20.0, 60.0);
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double v = base + amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) +
                       rng.uniform(-12.0, 12.0);
      img.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

inline GrayImage synthetic_stripes(std::int64_t width, std::int64_t height, Rng& rng) {
  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width * height));
  constexpr double kPi = 3.14159265358979323846;
  const double theta = rng.uniform(0.0, kPi);
  const double wavelength = rng.uniform(6.0, 16.0);
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  const double amp = rng.uniform(50.0, 90.0);
  const double base = rng.uniform(70.0, 130.0);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const double t = static_cast<double>(x) * ct + static_cast<double>(y) * st;
      const double v = base + amp * std::sin(2.0 * kPi * t / wavelength + phase) + rng.uniform(-12.0, 12.0);
      img.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

/// Writes `<root>/normal/normal_####.pgm` and `<root>/covid/covid_####.pgm`.
/// Each image draws from a stream keyed by (seed, class, index), so the
/// corpus bytes depend only on the options.
inline void write_synthetic_corpus(const std::string& root, const SyntheticOptions& opt) {
  namespace fs = std::filesystem;
  const struct {
    const char* name;
    std::uint64_t tag;
  } classes[] = {{"normal", 0}, {"covid", 1}};
  for (const auto& cls : classes) {
    fs::create_directories(fs::path(root) / cls.name);
    for (int i = 0; i < opt.per_class; ++i) {
      Rng rng = Rng::derive(opt.seed, cls.tag, static_cast<std::uint64_t>(i));
      const GrayImage img = cls.tag == 0 ? synthetic_blob(opt.width, opt.height, rng)
                                         : synthetic_stripes(opt.width, opt.height, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "%s_%04d.pgm", cls.name, i);
      save_pgm(img, (fs::path(root) / cls.name / name).string());
    }
  }
}

}  // namespace cxrnet
