#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sag/denoiser.hpp"
#include "sag/schedule.hpp"
#include "sag/toy_world.hpp"
#include "sag/train.hpp"

namespace sag {

enum class SubjectProvenance { Inverted, Encoded };

struct SubjectEmbedding {
    std::vector<double> s;
    SubjectProvenance provenance = SubjectProvenance::Inverted;
    int subject_id = 0;
    double norm() const;
};

struct InvertConfig {
    int steps = 600;
    double learning_rate = 3e-2;
    AdamParams adam;
    double token_reg_weight = 1e-3;
    std::uint64_t seed = 99;
    int log_every = 10;
};

// Textual-inversion analog: optimizes a subject token against the denoising
// objective with the base model frozen. The token is trained under the bare
// subject template (no content segment), so it has to account for the
// references on its own; initialization is the generic-table row of the
// subject's class. Objective: L = L_d(references) + reg * ||s||^2.
SubjectEmbedding invert_subject(const Denoiser& model, const EmbeddingTables& tables,
                                const NoiseSchedule& sched,
                                std::span<const LabeledPoint> references, const InvertConfig& cfg,
                                std::vector<LossRow>* trace = nullptr);

// --- encoder flavor ----------------------------------------------------------

struct EncoderArch {
    int input_dim = 2;
    int hidden = 32;
    int out_dim = 16;  // D_s
};

// Three-layer MLP mapping a reference point to a subject embedding.
class SubjectEncoder {
public:
    explicit SubjectEncoder(const EncoderArch& arch);
    const EncoderArch& arch() const { return arch_; }
    std::size_t param_count() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::span<double> segment(const std::string& name);
    std::span<const double> segment(const std::string& name) const;
    void init_params(Rng& rng);

    std::vector<double> encode(std::span<const double> x) const;
    // backward of dLoss/ds into parameter grad (accumulated)
    void backward(std::span<const double> x, std::span<const double> ds,
                  std::span<double> grad) const;

private:
    EncoderArch arch_;
    std::vector<double> params_;
    std::vector<ParamSegment> segments_;
};

struct EncoderTrainConfig {
    int steps = 8000;
    int batch_size = 128;
    double learning_rate = 5e-4;
    AdamParams adam;
    double mix_ratio = 0.1;
    double dropout_prob = 0.1;
    double token_reg_weight = 1e-3;
    std::uint64_t seed = 11;
    int log_every = 50;
};

struct EncoderTrainResult {
    SubjectEncoder encoder;
    TrainStats stats;
};

// ELITE analog: trains the encoder MLP jointly with the model's condition
// projection (w_in_c); every other weight and both tables stay frozen.
// Domain-specific batch elements are conditioned on (style 0, encoder(x0))
// with the encoder applied to the training point itself; general elements
// keep the base caption structure against the frozen tables. Mutates
// model.w_in_c in place.
EncoderTrainResult train_subject_encoder(Denoiser& model, const EmbeddingTables& tables,
                                         const NoiseSchedule& sched,
                                         std::span<const LabeledPoint> dataset,
                                         const EncoderTrainConfig& cfg);

}  // namespace sag
