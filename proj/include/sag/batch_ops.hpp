#pragma once

#include <span>
#include <vector>

#include "sag/conditioning.hpp"
#include "sag/denoiser.hpp"
#include "sag/schedule.hpp"

namespace sag {

enum class Exec { Serial, Parallel };

// One batch of denoiser inputs with conditions already embedded.
// Struct-of-arrays layout, row-major per element.
struct Batch {
    int size = 0;
    int data_dim = 0;
    int cond_dim = 0;
    std::vector<double> x_t;     // size * data_dim
    std::vector<double> t_norm;  // size
    std::vector<double> cond;    // size * cond_dim
    std::vector<double> eps;     // size * data_dim, regression targets

    void resize(int n, int dx, int dc);
    std::span<double> x_row(int i) { return {x_t.data() + static_cast<std::size_t>(i) * data_dim, static_cast<std::size_t>(data_dim)}; }
    std::span<double> cond_row(int i) { return {cond.data() + static_cast<std::size_t>(i) * cond_dim, static_cast<std::size_t>(cond_dim)}; }
    std::span<double> eps_row(int i) { return {eps.data() + static_cast<std::size_t>(i) * data_dim, static_cast<std::size_t>(data_dim)}; }
    std::span<const double> x_row(int i) const { return {x_t.data() + static_cast<std::size_t>(i) * data_dim, static_cast<std::size_t>(data_dim)}; }
    std::span<const double> cond_row(int i) const { return {cond.data() + static_cast<std::size_t>(i) * cond_dim, static_cast<std::size_t>(cond_dim)}; }
    std::span<const double> eps_row(int i) const { return {eps.data() + static_cast<std::size_t>(i) * data_dim, static_cast<std::size_t>(data_dim)}; }
};

// Gradient accumulation granularity: elements are grouped into fixed chunks
// of this size, one gradient buffer per chunk, folded in chunk order. The
// grouping is independent of the thread count, so parallel and serial paths
// produce bitwise-identical gradients.
inline constexpr int kGradChunk = 16;

// Reusable buffers for loss_grad_batch.
struct LossGradBuffers {
    std::vector<double> pred;        // B * data_dim
    std::vector<double> grad_slab;   // n_chunks * param_count
    std::vector<double> dcond;       // B * cond_dim
    std::vector<Workspace> scratch;  // one per thread
    void resize(const Denoiser& model, int batch_size);
    int batch_size() const { return batch_size_; }

private:
    int batch_size_ = -1;
};

// OpenMP-parallel prediction over a batch; `serial` is the reference
// implementation kept for testing and benchmarking.
void predict_batch(const Denoiser& model, const Batch& batch, std::span<double> out, Exec exec);
void predict_batch_serial(const Denoiser& model, const Batch& batch, std::span<double> out);

struct BatchLoss {
    double loss = 0.0;  // mean over batch of ||pred - eps||^2
};

// Loss + gradient of the mean squared noise-prediction error.
// grad_out (param_count) receives the parameter gradient; buffers.dcond holds
// per-element condition-embedding gradients for the caller to route into
// embedding tables / subject vectors / encoders.
BatchLoss loss_grad_batch(const Denoiser& model, const Batch& batch, LossGradBuffers& buffers,
                          std::span<double> grad_out, Exec exec);
BatchLoss loss_grad_batch_serial(const Denoiser& model, const Batch& batch,
                                 LossGradBuffers& buffers, std::span<double> grad_out);

// Mean denoising loss over labeled pairs (x0, Condition): draws (k, eps) per
// element from rng, forms x_t via q_sample and compares the prediction
// against the injected noise. Deterministic given the rng state.
double denoising_loss(const Denoiser& model, const EmbeddingTables& tables,
                      std::span<const std::pair<std::vector<double>, Condition>> batch,
                      const NoiseSchedule& sched, Rng& rng);

}  // namespace sag
