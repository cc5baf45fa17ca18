#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sag {

enum class GuidanceMode { CfgOnly, Dcfg };

// Parameters of dual classifier-free guidance:
//   w      constant null-CFG weight, w >= 0
//   r      late-stage weak-CFG weight, r >= -1
//   T      schedule cutoff in normalized time, 0 <= T <= 1
// The weak-CFG weight schedule is piecewise constant:
//   w_t = r    for 0 <= t <= T   (boundary t == T inclusive)
//   w_t = -1   for T <  t <= 1   (early, noisiest phase: subject-agnostic only)
struct GuidanceSpec {
    double w = 0.0;
    double r = 0.0;
    double T = 1.0;
    GuidanceMode mode = GuidanceMode::CfgOnly;

    void validate() const;
};

GuidanceMode guidance_mode_from_string(const std::string& s);
std::string to_string(GuidanceMode m);

// Piecewise-constant schedule value at normalized time t in [0,1].
double weight_at(const GuidanceSpec& spec, double t_norm);

// Conventional classifier-free guidance: (1+w)*eps_c - w*eps_null.
// Computed as eps_c + w*(eps_c - eps_null) so that eps_c == eps_null gives
// eps_c bit-for-bit.
std::vector<double> cfg(std::span<const double> eps_c, std::span<const double> eps_null, double w);

// Weak classifier-free guidance between the subject-aware and the
// subject-agnostic prediction: (1+w_t)*eps_c - w_t*eps_c0.
// w_t == -1 returns eps_c0 exactly (the early-stage branch uses solely the
// subject-agnostic condition, and the output must not depend on eps_c at all).
std::vector<double> weak_cfg(std::span<const double> eps_c, std::span<const double> eps_c0,
                             double w_t);

// Full record of one guided prediction.
struct GuidedPrediction {
    std::vector<double> eps_c;
    std::optional<std::vector<double>> eps_c0;  // absent in cfg-only mode
    std::vector<double> eps_null;
    double w_t = 0.0;
    std::vector<double> eps_bar;    // weak-CFG output (== eps_c in cfg-only mode)
    std::vector<double> eps_tilde;  // final guided prediction
};

// Dual CFG: eps_bar = weak_cfg(eps_c, eps_c0, w_t) with w_t from the
// schedule, then eps_tilde = (1+w)*eps_bar - w*eps_null.
GuidedPrediction dcfg(std::span<const double> eps_c, std::span<const double> eps_c0,
                      std::span<const double> eps_null, const GuidanceSpec& spec, double t_norm);

// cfg-only counterpart producing the same record type.
GuidedPrediction cfg_prediction(std::span<const double> eps_c, std::span<const double> eps_null,
                                const GuidanceSpec& spec, double t_norm);

}  // namespace sag
