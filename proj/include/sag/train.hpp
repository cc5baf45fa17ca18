#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sag/batch_ops.hpp"
#include "sag/conditioning.hpp"
#include "sag/denoiser.hpp"
#include "sag/schedule.hpp"
#include "sag/toy_world.hpp"

namespace sag {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second-moment state for one parameter block.
struct AdamState {
    std::vector<double> m, v;
    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               std::int64_t t, double lr, const AdamParams& hp);

struct TrainConfig {
    int steps = 30000;
    int batch_size = 128;
    double learning_rate = 1e-4;
    double lr_final = -1.0;  // < 0: constant lr; otherwise cosine decay target
    AdamParams adam;
    double dropout_prob = 0.1;     // P(condition replaced by phi)
    double mix_ratio = 0.1;        // p: P(draw from the domain-specific pool)
    double token_reg_weight = 1.0; // weight on ||s||^2 for the active subject slot
    std::uint64_t seed = 7;
    int log_every = 50;  // loss-curve sampling stride
};

struct LossRow {
    int step = 0;
    double loss_total = 0.0;
    double loss_denoise = 0.0;
    double loss_reg = 0.0;
};

struct TrainStats {
    std::int64_t domain_draws = 0;
    std::int64_t general_draws = 0;
    std::int64_t dropout_draws = 0;
    double initial_loss = 0.0;  // L_d at step 0
    double final_loss = 0.0;    // mean L_d over the last 100 steps
    std::vector<LossRow> curve;
};

struct TrainResult {
    Denoiser model;
    EmbeddingTables tables;
    TrainStats stats;
};

// Base training on the labeled mixture. Per step, batch elements are drawn
// domain-specific with probability mix_ratio, general otherwise. Conditions:
//   domain-specific        (style 0, generic row of the subject)
//   general, 60%           (style, generic row)            -- full caption
//   general, 20%           (no content, generic row)       -- subject-only caption
//   general, 20%           (style, null subject)           -- style-only caption
// and any element becomes phi with probability dropout_prob. The caption split
// keeps both the subject-only and the style-only conditioning pathways
// trained, which the agnostic constructions rely on at inference time.
// token_reg_weight penalizes mean ||generic row||^2 over elements whose
// subject slot is active. Throws numerical_error on divergence.
TrainResult train(std::span<const LabeledPoint> dataset, const TrainConfig& config,
                  const WorldSpec& world, const DenoiserArch& arch, const NoiseSchedule& sched,
                  double table_init_scale = 0.7);

}  // namespace sag
