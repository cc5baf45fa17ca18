#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sag {

enum class ScheduleKind { Linear, Cosine };

// Discrete forward-process coefficients over steps k = 1..num_steps.
// Internally 0-based: beta[k-1], alpha_bar[k-1]. alpha_bar_at(0) == 1 by
// convention (the clean-data endpoint), which the samplers rely on.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::Linear;
    int num_steps = 0;           // T0
    double beta_min = 0.0;       // schedule parameters, echoed into files
    double beta_max = 0.0;
    std::vector<double> beta;       // size T0, beta[k-1] in (0,1)
    std::vector<double> alpha_bar;  // size T0, cumulative product of (1-beta)

    double beta_at(int k) const;       // k in [1, T0]
    double alpha_bar_at(int k) const;  // k in [0, T0], alpha_bar_at(0) = 1
    double t_norm(int k) const { return static_cast<double>(k) / num_steps; }
};

// beta[k] interpolates beta_min -> beta_max linearly over k = 1..T0.
NoiseSchedule make_linear_schedule(int num_steps, double beta_min, double beta_max);

// Squared-cosine alpha_bar profile; betas derived from consecutive ratios
// and clamped to (0, 0.999].
NoiseSchedule make_cosine_schedule(int num_steps);

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps, double beta_min, double beta_max);

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

struct NoisySample {
    std::vector<double> x_t;
    int k = 0;
    std::vector<double> eps;  // the injected noise
};

// x_t = sqrt(alpha_bar[k]) * x0 + sqrt(1 - alpha_bar[k]) * eps
NoisySample q_sample(std::span<const double> x0, int k, std::span<const double> eps,
                     const NoiseSchedule& sched);

}  // namespace sag
