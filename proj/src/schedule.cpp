#include "sag/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace sag {

double NoiseSchedule::beta_at(int k) const {
    if (k < 1 || k > num_steps) throw std::invalid_argument("beta_at: step out of range");
    return beta[static_cast<std::size_t>(k) - 1];
}

double NoiseSchedule::alpha_bar_at(int k) const {
    if (k == 0) return 1.0;
    if (k < 1 || k > num_steps) throw std::invalid_argument("alpha_bar_at: step out of range");
    return alpha_bar[static_cast<std::size_t>(k) - 1];
}

static void validate(const NoiseSchedule& s) {
    double prev = 1.0;
    for (int k = 1; k <= s.num_steps; ++k) {
        double b = s.beta_at(k), ab = s.alpha_bar_at(k);
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta outside (0,1)");
        if (!(ab > 0.0 && ab < 1.0)) throw std::invalid_argument("schedule: alpha_bar outside (0,1)");
        if (!(ab < prev)) throw std::invalid_argument("schedule: alpha_bar not strictly decreasing");
        prev = ab;
    }
}

NoiseSchedule make_linear_schedule(int num_steps, double beta_min, double beta_max) {
    if (num_steps < 1) throw std::invalid_argument("make_linear_schedule: num_steps must be >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.kind = ScheduleKind::Linear;
    s.num_steps = num_steps;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.beta.resize(num_steps);
    s.alpha_bar.resize(num_steps);
    double prod = 1.0;
    for (int k = 1; k <= num_steps; ++k) {
        double b = (num_steps == 1)
                       ? beta_min
                       : beta_min + (beta_max - beta_min) * (k - 1) / static_cast<double>(num_steps - 1);
        prod *= 1.0 - b;
        s.beta[k - 1] = b;
        s.alpha_bar[k - 1] = prod;
    }
    validate(s);
    return s;
}

NoiseSchedule make_cosine_schedule(int num_steps) {
    if (num_steps < 1) throw std::invalid_argument("make_cosine_schedule: num_steps must be >= 1");
    const double offs = 0.008;
    auto f = [&](double k) {
        double v = std::cos((k / num_steps + offs) / (1.0 + offs) * M_PI / 2.0);
        return v * v;
    };
    NoiseSchedule s;
    s.kind = ScheduleKind::Cosine;
    s.num_steps = num_steps;
    s.beta.resize(num_steps);
    s.alpha_bar.resize(num_steps);
    const double f0 = f(0.0);
    double prev = 1.0;
    for (int k = 1; k <= num_steps; ++k) {
        double ab = f(static_cast<double>(k)) / f0;
        double b = 1.0 - ab / prev;
        if (b > 0.999) b = 0.999;
        if (b < 1e-12) b = 1e-12;
        s.beta[k - 1] = b;
        prev = prev * (1.0 - b);
        s.alpha_bar[k - 1] = prev;
    }
    s.beta_min = s.beta.front();
    s.beta_max = s.beta.back();
    validate(s);
    return s;
}

NoiseSchedule make_schedule(ScheduleKind kind, int num_steps, double beta_min, double beta_max) {
    if (kind == ScheduleKind::Cosine) return make_cosine_schedule(num_steps);
    return make_linear_schedule(num_steps, beta_min, beta_max);
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "cosine") return ScheduleKind::Cosine;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::Linear ? "linear" : "cosine";
}

NoisySample q_sample(std::span<const double> x0, int k, std::span<const double> eps,
                     const NoiseSchedule& sched) {
    if (k < 1 || k > sched.num_steps) throw std::invalid_argument("q_sample: step out of range");
    if (x0.size() != eps.size()) throw std::invalid_argument("q_sample: dimension mismatch");
    const double ab = sched.alpha_bar_at(k);
    const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    NoisySample out;
    out.k = k;
    out.x_t.resize(x0.size());
    out.eps.assign(eps.begin(), eps.end());
    for (std::size_t i = 0; i < x0.size(); ++i) out.x_t[i] = cs * x0[i] + cn * eps[i];
    return out;
}

}  // namespace sag
