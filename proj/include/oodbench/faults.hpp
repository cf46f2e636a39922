#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oodbench/datasets.hpp"
#include "oodbench/network.hpp"
#include "oodbench/tensor.hpp"

namespace oodbench {

// Transforms are pure functions of (input, parameters, seed); outputs stay
// in [0,1]. Severity 1..5 indexes the parameter tables below, which are this
// project's documented constants and are non-decreasing in severity.

double gaussian_noise_sigma(int severity);   // {0.04, 0.06, 0.08, 0.09, 0.10}
double gaussian_blur_sigma(int severity);    // {0.5, 0.75, 1.0, 1.25, 1.5}
double zoom_blur_factor(int severity);       // 1 + 0.04 * severity
int glass_blur_delta(int severity);          // {1, 1, 2, 2, 3}
double snow_density(int severity);           // {0.03, 0.06, 0.09, 0.13, 0.18}
double fog_weight(int severity);             // {0.15, 0.25, 0.35, 0.45, 0.55}
double pixel_trap_fraction(int severity);    // {0.10, 0.20, 0.30, 0.45, 0.60}
std::size_t row_add_k(int severity);         // {1, 1, 2, 2, 3}
int shifted_pixel_max(int severity);         // {1, 2, 3, 4, 6}

Tensor gaussian_noise(const Tensor& x, double sigma, std::uint64_t seed);
Tensor gaussian_blur(const Tensor& x, double sigma);  // sigma 0 -> identity
Tensor zoom_blur(const Tensor& x, double max_factor);
Tensor glass_blur(const Tensor& x, int max_delta, std::uint64_t seed);
Tensor snow(const Tensor& x, double density, std::uint64_t seed);
Tensor fog(const Tensor& x, double weight, std::uint64_t seed);  // weight 0 -> identity
// Positive angles rotate the content clockwise (y axis points down);
// bilinear resampling, out-of-frame fill 0.
Tensor rotate(const Tensor& x, double angle_deg);
Tensor brightness(const Tensor& x, double delta);   // clip(x + delta)
Tensor contrast(const Tensor& x, double factor);    // clip(0.5 + (x-0.5)*factor)
Tensor pixel_trap(const Tensor& x, double row_fraction, std::uint64_t seed);
Tensor row_add_logic(const Tensor& x, std::size_t k);  // saturating row add
Tensor shifted_pixel(const Tensor& x, int max_shift, std::uint64_t seed);

// clip(x + epsilon * sign(d/dx nll(x, label))). sign(0) = 0, so pixels with
// zero gradient never move; epsilon 0 is an exact identity.
Tensor fgsm(const Network& net, const Tensor& x, int label, double epsilon);

enum class FaultCategory { Noise, Shift, Anomaly, Adversarial, Novelty };

struct FaultTemplate {
  std::string name;  // transform name, or "novelty"
  int severity = 0;  // 1..5 for table-driven transforms, else 0
  std::map<std::string, double> params;  // angle_deg | delta | factor | epsilon
  std::uint64_t seed = 0;
};

FaultCategory fault_category(const std::string& name);
std::string fault_tag(const FaultTemplate& t);

// Applies the template to every instance: image transformed, label kept,
// origin set to OOD, variation set to the template tag, ":<tag>" appended to
// the id. Per-instance seeds derive from (template seed, position), so the
// result does not depend on traversal order. net is required for "fgsm".
// Novelty is assembled in the datasets module, not here.
std::vector<LabeledInstance> apply_template(const std::vector<LabeledInstance>& data,
                                            const FaultTemplate& t,
                                            const Network* net = nullptr);

}  // namespace oodbench
