#include "oodbench/faults.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "oodbench/errors.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_severity(int severity) {
  if (severity < 1 || severity > 5)
    throw ParameterError("severity must lie in 1..5, got " + std::to_string(severity));
}

void check_image(const Tensor& x) {
  if (x.shape.size() != 3) throw ShapeError("transform expects a {C,H,W} image");
}

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Bilinear sample of channel c at fractional (sy, sx); out-of-frame taps
// contribute the fill value 0.
double sample_bilinear(const Tensor& x, std::size_t c, double sy, double sx) {
  const double h = static_cast<double>(x.shape[1]);
  const double w = static_cast<double>(x.shape[2]);
  const double fy = std::floor(sy), fx = std::floor(sx);
  const double wy = sy - fy, wx = sx - fx;
  double acc = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    const double yy = fy + dy;
    if (yy < 0.0 || yy >= h) continue;
    for (int dx = 0; dx <= 1; ++dx) {
      const double xx = fx + dx;
      if (xx < 0.0 || xx >= w) continue;
      const double weight = (dy ? wy : 1.0 - wy) * (dx ? wx : 1.0 - wx);
      acc += weight * x.at3(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    }
  }
  return acc;
}

// Clamp-to-border bilinear sample; used where the source point is inside the
// frame by construction and edge taps should replicate.
double sample_clamped(const Tensor& x, std::size_t c, double sy, double sx) {
  const long h = static_cast<long>(x.shape[1]);
  const long w = static_cast<long>(x.shape[2]);
  const double fy = std::floor(sy), fx = std::floor(sx);
  const double wy = sy - fy, wx = sx - fx;
  double acc = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    const long yy = std::min(h - 1, std::max(0L, static_cast<long>(fy) + dy));
    for (int dx = 0; dx <= 1; ++dx) {
      const long xx = std::min(w - 1, std::max(0L, static_cast<long>(fx) + dx));
      const double weight = (dy ? wy : 1.0 - wy) * (dx ? wx : 1.0 - wx);
      acc += weight * x.at3(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    }
  }
  return acc;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return std::string(buf);
}

double param_of(const FaultTemplate& t, const std::string& key) {
  const auto it = t.params.find(key);
  if (it == t.params.end())
    throw ParameterError("fault template '" + t.name + "' needs parameter '" + key + "'");
  return it->second;
}

}  // namespace

double gaussian_noise_sigma(int severity) {
  check_severity(severity);
  constexpr double table[5] = {0.04, 0.06, 0.08, 0.09, 0.10};
  return table[severity - 1];
}

double gaussian_blur_sigma(int severity) {
  check_severity(severity);
  constexpr double table[5] = {0.5, 0.75, 1.0, 1.25, 1.5};
  return table[severity - 1];
}

double zoom_blur_factor(int severity) {
  check_severity(severity);
  return 1.0 + 0.04 * static_cast<double>(severity);
}

int glass_blur_delta(int severity) {
  check_severity(severity);
  constexpr int table[5] = {1, 1, 2, 2, 3};
  return table[severity - 1];
}

double snow_density(int severity) {
  check_severity(severity);
  constexpr double table[5] = {0.03, 0.06, 0.09, 0.13, 0.18};
  return table[severity - 1];
}

double fog_weight(int severity) {
  check_severity(severity);
  constexpr double table[5] = {0.15, 0.25, 0.35, 0.45, 0.55};
  return table[severity - 1];
}

double pixel_trap_fraction(int severity) {
  check_severity(severity);
  constexpr double table[5] = {0.10, 0.20, 0.30, 0.45, 0.60};
  return table[severity - 1];
}

std::size_t row_add_k(int severity) {
  check_severity(severity);
  constexpr std::size_t table[5] = {1, 1, 2, 2, 3};
  return table[severity - 1];
}

int shifted_pixel_max(int severity) {
  check_severity(severity);
  constexpr int table[5] = {1, 2, 3, 4, 6};
  return table[severity - 1];
}

Tensor gaussian_noise(const Tensor& x, double sigma, std::uint64_t seed) {
  check_image(x);
  if (sigma < 0.0) throw ParameterError("noise sigma must be non-negative");
  Tensor out = x;
  Rng rng(seed);
  for (double& v : out.data) v = clip01(v + sigma * rng.normal());
  return out;
}

Tensor gaussian_blur(const Tensor& x, double sigma) {
  check_image(x);
  if (sigma < 0.0) throw ParameterError("blur sigma must be non-negative");
  if (sigma == 0.0) return x;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  const std::size_t h = x.shape[1], w = x.shape[2];
  if (static_cast<std::size_t>(2 * radius + 1) > std::min(h, w))
    throw ParameterError("blur kernel " + std::to_string(2 * radius + 1) +
                         " larger than image " + shape_str(x.shape));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;

  // Separable passes with replicated borders.
  Tensor tmp(x.shape), out(x.shape);
  for (std::size_t c = 0; c < x.shape[0]; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const long sx = std::min<long>(static_cast<long>(w) - 1,
                                         std::max(0L, static_cast<long>(xx) + i));
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 x.at3(c, y, static_cast<std::size_t>(sx));
        }
        tmp.at3(c, y, xx) = acc;
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const long sy = std::min<long>(static_cast<long>(h) - 1,
                                         std::max(0L, static_cast<long>(y) + i));
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 tmp.at3(c, static_cast<std::size_t>(sy), xx);
        }
        out.at3(c, y, xx) = clip01(acc);
      }
    }
  }
  return out;
}

Tensor zoom_blur(const Tensor& x, double max_factor) {
  check_image(x);
  if (max_factor < 1.0) throw ParameterError("zoom factor must be >= 1");
  const double cy = static_cast<double>(x.shape[1] - 1) / 2.0;
  const double cx = static_cast<double>(x.shape[2] - 1) / 2.0;
  Tensor out(x.shape);
  std::size_t count = 0;
  for (double f = 1.0; f <= max_factor + 1e-12; f += 0.01, ++count) {
    for (std::size_t c = 0; c < x.shape[0]; ++c) {
      for (std::size_t y = 0; y < x.shape[1]; ++y) {
        for (std::size_t xx = 0; xx < x.shape[2]; ++xx) {
          const double sy = cy + (static_cast<double>(y) - cy) / f;
          const double sx = cx + (static_cast<double>(xx) - cx) / f;
          out.at3(c, y, xx) += sample_clamped(x, c, sy, sx);
        }
      }
    }
  }
  for (double& v : out.data) v = clip01(v / static_cast<double>(count));
  return out;
}

Tensor glass_blur(const Tensor& x, int max_delta, std::uint64_t seed) {
  check_image(x);
  if (max_delta < 0) throw ParameterError("glass blur delta must be non-negative");
  Tensor out = x;
  Rng rng(seed);
  const long h = static_cast<long>(x.shape[1]), w = static_cast<long>(x.shape[2]);
  for (long y = 0; y < h; ++y) {
    for (long xx = 0; xx < w; ++xx) {
      const long dy = static_cast<long>(rng.below(2 * max_delta + 1)) - max_delta;
      const long dx = static_cast<long>(rng.below(2 * max_delta + 1)) - max_delta;
      const long sy = std::min(h - 1, std::max(0L, y + dy));
      const long sx = std::min(w - 1, std::max(0L, xx + dx));
      for (std::size_t c = 0; c < x.shape[0]; ++c)
        std::swap(out.at3(c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)),
                  out.at3(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
    }
  }
  return gaussian_blur(out, 0.5);
}

Tensor snow(const Tensor& x, double density, std::uint64_t seed) {
  check_image(x);
  if (density < 0.0 || density > 1.0)
    throw ParameterError("snow density must lie in [0,1]");
  const std::size_t h = x.shape[1], w = x.shape[2];
  // Speck layer, then a short diagonal motion smear.
  Tensor layer({1, h, w});
  Rng rng(seed);
  for (double& v : layer.data)
    v = rng.uniform01() < density ? rng.uniform(0.55, 1.0) : 0.0;
  Tensor smeared({1, h, w});
  constexpr int kTail = 4;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      double acc = 0.0;
      for (int i = 0; i < kTail; ++i) {
        const long sy = static_cast<long>(y) - i;
        const long sx = static_cast<long>(xx) - (i + 1) / 2;
        if (sy < 0 || sx < 0) continue;
        acc += layer.at3(0, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
      smeared.at3(0, y, xx) = acc / kTail;
    }
  }
  Tensor out = x;
  for (std::size_t c = 0; c < x.shape[0]; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out.at3(c, y, xx) = clip01(out.at3(c, y, xx) + smeared.at3(0, y, xx));
  return out;
}

Tensor fog(const Tensor& x, double weight, std::uint64_t seed) {
  check_image(x);
  if (weight < 0.0 || weight > 1.0) throw ParameterError("fog weight must lie in [0,1]");
  if (weight == 0.0) return x;
  const std::size_t h = x.shape[1], w = x.shape[2];

  // Diamond-square plasma on a (2^n + 1) grid covering the image.
  std::size_t g = 1;
  while (g + 1 < std::max(h, w)) g *= 2;
  const std::size_t n = g + 1;
  std::vector<double> plasma(n * n, 0.0);
  auto at = [&](std::size_t y, std::size_t xx) -> double& { return plasma[y * n + xx]; };
  Rng rng(seed);
  at(0, 0) = rng.uniform01();
  at(0, g) = rng.uniform01();
  at(g, 0) = rng.uniform01();
  at(g, g) = rng.uniform01();
  double amp = 0.5;
  for (std::size_t step = g; step > 1; step /= 2, amp *= 0.55) {
    const std::size_t half = step / 2;
    for (std::size_t y = half; y < n; y += step) {
      for (std::size_t xx = half; xx < n; xx += step) {
        const double avg = (at(y - half, xx - half) + at(y - half, xx + half) +
                            at(y + half, xx - half) + at(y + half, xx + half)) / 4.0;
        at(y, xx) = avg + rng.uniform(-amp, amp);
      }
    }
    for (std::size_t y = 0; y < n; y += half) {
      for (std::size_t xx = (y / half) % 2 == 0 ? half : 0; xx < n; xx += step) {
        double sum = 0.0;
        int cnt = 0;
        if (y >= half) { sum += at(y - half, xx); ++cnt; }
        if (y + half < n) { sum += at(y + half, xx); ++cnt; }
        if (xx >= half) { sum += at(y, xx - half); ++cnt; }
        if (xx + half < n) { sum += at(y, xx + half); ++cnt; }
        at(y, xx) = sum / cnt + rng.uniform(-amp, amp);
      }
    }
  }
  double lo = plasma[0], hi = plasma[0];
  for (double v : plasma) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  Tensor out = x;
  for (std::size_t c = 0; c < x.shape[0]; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double p = (at(y, xx) - lo) / span;
        const double fogv = 0.5 + 0.5 * p;  // fog is bright
        out.at3(c, y, xx) = clip01((1.0 - weight) * out.at3(c, y, xx) + weight * fogv);
      }
    }
  }
  return out;
}

Tensor rotate(const Tensor& x, double angle_deg) {
  check_image(x);
  const double a = angle_deg * kPi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cy = static_cast<double>(x.shape[1] - 1) / 2.0;
  const double cx = static_cast<double>(x.shape[2] - 1) / 2.0;
  Tensor out(x.shape);
  for (std::size_t c = 0; c < x.shape[0]; ++c) {
    for (std::size_t y = 0; y < x.shape[1]; ++y) {
      for (std::size_t xx = 0; xx < x.shape[2]; ++xx) {
        const double dx = static_cast<double>(xx) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double sx = cx + dx * ca + dy * sa;
        const double sy = cy - dx * sa + dy * ca;
        out.at3(c, y, xx) = clip01(sample_bilinear(x, c, sy, sx));
      }
    }
  }
  return out;
}

Tensor brightness(const Tensor& x, double delta) {
  check_image(x);
  Tensor out = x;
  for (double& v : out.data) v = clip01(v + delta);
  return out;
}

Tensor contrast(const Tensor& x, double factor) {
  check_image(x);
  if (factor < 0.0) throw ParameterError("contrast factor must be non-negative");
  Tensor out = x;
  for (double& v : out.data) v = clip01(0.5 + (v - 0.5) * factor);
  return out;
}

Tensor pixel_trap(const Tensor& x, double row_fraction, std::uint64_t seed) {
  check_image(x);
  if (row_fraction < 0.0 || row_fraction > 1.0)
    throw ParameterError("row fraction must lie in [0,1]");
  const std::size_t h = x.shape[1];
  std::size_t n_rows = static_cast<std::size_t>(
      std::lround(row_fraction * static_cast<double>(h)));
  if (row_fraction > 0.0) n_rows = std::max<std::size_t>(1, n_rows);
  std::vector<std::size_t> rows(h);
  for (std::size_t i = 0; i < h; ++i) rows[i] = i;
  Rng rng(seed);
  rng.shuffle(rows);
  Tensor out = x;
  for (std::size_t i = 0; i < n_rows; ++i)
    for (std::size_t c = 0; c < x.shape[0]; ++c)
      for (std::size_t xx = 0; xx < x.shape[2]; ++xx) out.at3(c, rows[i], xx) = 0.0;
  return out;
}

Tensor row_add_logic(const Tensor& x, std::size_t k) {
  check_image(x);
  if (k == 0) throw ParameterError("row offset must be positive");
  Tensor out = x;
  for (std::size_t c = 0; c < x.shape[0]; ++c)
    for (std::size_t y = k; y < x.shape[1]; ++y)
      for (std::size_t xx = 0; xx < x.shape[2]; ++xx)
        out.at3(c, y, xx) = clip01(x.at3(c, y, xx) + x.at3(c, y - k, xx));
  return out;
}

Tensor shifted_pixel(const Tensor& x, int max_shift, std::uint64_t seed) {
  check_image(x);
  if (max_shift < 0) throw ParameterError("max shift must be non-negative");
  const long w = static_cast<long>(x.shape[2]);
  Tensor out(x.shape);
  for (std::size_t y = 0; y < x.shape[1]; ++y) {
    // One circular offset per row, shared across channels.
    Rng rng(mix_seed(seed, y));
    const long off = static_cast<long>(rng.below(2 * max_shift + 1)) - max_shift;
    for (std::size_t c = 0; c < x.shape[0]; ++c) {
      for (long xx = 0; xx < w; ++xx) {
        const long sx = ((xx - off) % w + w) % w;
        out.at3(c, y, static_cast<std::size_t>(xx)) =
            x.at3(c, y, static_cast<std::size_t>(sx));
      }
    }
  }
  return out;
}

Tensor fgsm(const Network& net, const Tensor& x, int label, double epsilon) {
  if (epsilon < 0.0) throw ParameterError("fgsm epsilon must be non-negative");
  const Tensor g = input_gradient(net, x, label, 1.0);
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double s = g.data[i] > 0.0 ? 1.0 : (g.data[i] < 0.0 ? -1.0 : 0.0);
    out.data[i] = clip01(out.data[i] + epsilon * s);
  }
  return out;
}

FaultCategory fault_category(const std::string& name) {
  if (name == "gaussian_noise") return FaultCategory::Noise;
  if (name == "gaussian_blur" || name == "zoom_blur" || name == "glass_blur" ||
      name == "snow" || name == "fog" || name == "rotate" || name == "brightness" ||
      name == "contrast")
    return FaultCategory::Shift;
  if (name == "pixel_trap" || name == "row_add_logic" || name == "shifted_pixel")
    return FaultCategory::Anomaly;
  if (name == "fgsm") return FaultCategory::Adversarial;
  if (name == "novelty") return FaultCategory::Novelty;
  throw ParameterError("unknown fault '" + name + "'");
}

std::string fault_tag(const FaultTemplate& t) {
  if (t.severity > 0) return t.name + "-" + std::to_string(t.severity);
  if (t.name == "rotate") return t.name + "-" + fmt_g(param_of(t, "angle_deg"));
  if (t.name == "brightness") return t.name + "-" + fmt_g(param_of(t, "delta"));
  if (t.name == "contrast") return t.name + "-" + fmt_g(param_of(t, "factor"));
  if (t.name == "fgsm") {
    const auto it = t.params.find("epsilon");
    return t.name + "-" + fmt_g(it == t.params.end() ? 0.01 : it->second);
  }
  return t.name;
}

std::vector<LabeledInstance> apply_template(const std::vector<LabeledInstance>& data,
                                            const FaultTemplate& t, const Network* net) {
  const FaultCategory cat = fault_category(t.name);
  if (cat == FaultCategory::Novelty)
    throw ParameterError("novelty templates are assembled by the dataset stage");
  if (t.name == "fgsm" && net == nullptr)
    throw ParameterError("fgsm template needs a trained model");
  const std::string tag = fault_tag(t);

  std::vector<LabeledInstance> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LabeledInstance& src = data[i];
    for (double v : src.image.data)
      if (v < 0.0 || v > 1.0)
        throw IntegrityError("instance " + src.id + " has pixels outside [0,1]");
    const std::uint64_t seed = mix_seed(t.seed, i);
    LabeledInstance inst = src;
    if (t.name == "gaussian_noise")
      inst.image = gaussian_noise(src.image, gaussian_noise_sigma(t.severity), seed);
    else if (t.name == "gaussian_blur")
      inst.image = gaussian_blur(src.image, gaussian_blur_sigma(t.severity));
    else if (t.name == "zoom_blur")
      inst.image = zoom_blur(src.image, zoom_blur_factor(t.severity));
    else if (t.name == "glass_blur")
      inst.image = glass_blur(src.image, glass_blur_delta(t.severity), seed);
    else if (t.name == "snow")
      inst.image = snow(src.image, snow_density(t.severity), seed);
    else if (t.name == "fog")
      inst.image = fog(src.image, fog_weight(t.severity), seed);
    else if (t.name == "rotate")
      inst.image = rotate(src.image, param_of(t, "angle_deg"));
    else if (t.name == "brightness")
      inst.image = brightness(src.image, param_of(t, "delta"));
    else if (t.name == "contrast")
      inst.image = contrast(src.image, param_of(t, "factor"));
    else if (t.name == "pixel_trap")
      inst.image = pixel_trap(src.image, pixel_trap_fraction(t.severity), seed);
    else if (t.name == "row_add_logic")
      inst.image = row_add_logic(src.image, row_add_k(t.severity));
    else if (t.name == "shifted_pixel")
      inst.image = shifted_pixel(src.image, shifted_pixel_max(t.severity), seed);
    else if (t.name == "fgsm") {
      const auto it = t.params.find("epsilon");
      inst.image = fgsm(*net, src.image, src.label, it == t.params.end() ? 0.01 : it->second);
    } else {
      throw ParameterError("unknown fault '" + t.name + "'");
    }
    inst.origin = Origin::OOD;
    inst.variation = tag;
    inst.id = src.id + ":" + tag;
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace oodbench
