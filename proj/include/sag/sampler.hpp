#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sag/batch_ops.hpp"
#include "sag/conditioning.hpp"
#include "sag/denoiser.hpp"
#include "sag/guidance.hpp"
#include "sag/schedule.hpp"

namespace sag {

enum class SamplerKind { DdpmAncestral, Ddim };

SamplerKind sampler_kind_from_string(const std::string& s);
std::string to_string(SamplerKind k);

struct SamplerConfig {
    SamplerKind kind = SamplerKind::Ddim;
    int num_steps = 100;   // strided steps; DDPM requires num_steps == T0
    double eta = 0.0;      // DDIM stochasticity, 0 = deterministic
    double x0_clip = 9.0;  // clamp on the implied x0 estimate; 0 disables
    std::uint64_t seed = 0;
    int batch = 1;  // independent chains
    bool record_trace = true;
};

// Strictly decreasing step indices from T0 toward 1.
std::vector<int> strided_steps(int num_steps, int T0);

struct TraceStep {
    int chain = 0;
    int k = 0;
    double t_norm = 0.0;
    double w_t = 0.0;
    std::vector<double> eps_c;
    std::vector<double> eps_c0;  // empty in cfg mode
    std::vector<double> eps_null;
    std::vector<double> eps_tilde;
    std::vector<double> x_before;
    std::vector<double> x_after;
};

struct SampleTrace {
    GuidanceSpec spec;
    SamplerConfig config;
    int data_dim = 0;
    std::vector<TraceStep> steps;  // chain-major, step order within chain
};

struct SampleResult {
    int data_dim = 0;
    int batch = 0;
    std::vector<double> samples;  // batch * data_dim
    SampleTrace trace;            // empty unless record_trace
};

// Ancestral DDPM update k -> k-1; injects no noise at k == 1.
std::vector<double> ddpm_step(std::span<const double> x_k, std::span<const double> eps_tilde,
                              int k, const NoiseSchedule& sched, Rng& rng, double x0_clip = 0.0);

// DDIM update k -> k_next (k_next may be 0). eta == 0 draws no randomness.
std::vector<double> ddim_step(std::span<const double> x_k, std::span<const double> eps_tilde,
                              int k, int k_next, const NoiseSchedule& sched, double eta, Rng& rng,
                              double x0_clip = 0.0);

// Reverse-process sampling with pluggable guidance. In dcfg mode c0 must be
// present and the denoiser is evaluated three times per step (c, c0, phi);
// cfg mode evaluates twice. Chains own independent randomness streams derived
// from (seed, chain), so results do not depend on scheduling.
SampleResult sample(const Denoiser& model, const EmbeddingTables& tables,
                    const NoiseSchedule& sched, const Condition& c,
                    const std::optional<Condition>& c0, const GuidanceSpec& spec,
                    const SamplerConfig& config, Exec exec = Exec::Parallel);

SampleResult sample_serial(const Denoiser& model, const EmbeddingTables& tables,
                           const NoiseSchedule& sched, const Condition& c,
                           const std::optional<Condition>& c0, const GuidanceSpec& spec,
                           const SamplerConfig& config);

}  // namespace sag
