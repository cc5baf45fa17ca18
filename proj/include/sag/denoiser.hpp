#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sag/conditioning.hpp"
#include "sag/rng.hpp"

namespace sag {

// Architecture of the noise predictor: a tanh MLP taking
//   [x_t (data_dim) | time features (2*time_features) | condition (D_c+D_s)]
// through one input projection, hidden_depth hidden layers and a linear head.
// Time features are sin/cos pairs with trainable frequencies, initialized to
// the geometric ladder 2*pi*2^j.
struct DenoiserArch {
    int data_dim = 2;
    int content_dim = 8;
    int subject_dim = 16;
    int time_features = 8;
    int hidden_width = 192;
    int hidden_depth = 2;  // hidden->hidden layers after the input layer

    int cond_dim() const { return content_dim + subject_dim; }
    int input_dim() const { return data_dim + 2 * time_features + cond_dim(); }
};

struct ParamSegment {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
};

// Flat-array offsets of every segment, resolved once at construction so the
// kernels never do name lookups.
struct ParamLayout {
    std::size_t time_freq = 0, w_in_x = 0, w_in_t = 0, w_in_c = 0, b_in = 0;
    std::vector<std::size_t> w_h, b_h;
    std::size_t w_out = 0, b_out = 0;
};

// Parameters live in one flat array; named segments give the layout:
//   time_freq, w_in_x, w_in_t, w_in_c, b_in, w_h<l>, b_h<l> ..., w_out, b_out
class Denoiser {
public:
    explicit Denoiser(const DenoiserArch& arch);
    Denoiser(const Denoiser& other)
        : arch_(other.arch_), params_(other.params_), segments_(other.segments_),
          lay_(other.lay_) {}
    Denoiser(Denoiser&& other) noexcept
        : arch_(other.arch_), params_(std::move(other.params_)),
          segments_(std::move(other.segments_)), lay_(std::move(other.lay_)) {}
    Denoiser& operator=(const Denoiser& other) {
        arch_ = other.arch_;
        params_ = other.params_;
        segments_ = other.segments_;
        lay_ = other.lay_;
        return *this;
    }

    const DenoiserArch& arch() const { return arch_; }
    std::size_t param_count() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    const std::vector<ParamSegment>& segments() const { return segments_; }
    const ParamLayout& layout() const { return lay_; }
    std::span<double> segment(const std::string& name);
    std::span<const double> segment(const std::string& name) const;

    // Random init: He-style input/hidden weights, zero biases, zero output
    // head (so an untrained model predicts exactly zero), ladder frequencies.
    void init_params(Rng& rng);

    std::uint64_t eval_count() const { return eval_count_.load(std::memory_order_relaxed); }
    void reset_eval_count() const { eval_count_.store(0, std::memory_order_relaxed); }
    void bump_eval_count() const { eval_count_.fetch_add(1, std::memory_order_relaxed); }

private:
    DenoiserArch arch_;
    std::vector<double> params_;
    std::vector<ParamSegment> segments_;
    ParamLayout lay_;
    mutable std::atomic<std::uint64_t> eval_count_{0};
};

// Scratch buffers for one forward/backward pass; reusable across calls.
struct Workspace {
    std::vector<double> time_feat;   // 2F
    std::vector<double> h;           // (depth+1) x W activations
    std::vector<double> delta;       // W
    std::vector<double> delta_next;  // W
    std::vector<double> dtf;         // 2F
    std::vector<double> dout;        // data_dim
    void resize(const DenoiserArch& arch);
};

// eps(x_t, t_norm, cond_embedding); writes data_dim values into out.
// Pure given inputs; bumps the model's evaluation counter.
void denoiser_forward(const Denoiser& model, std::span<const double> x_t, double t_norm,
                      std::span<const double> cond_embedding, std::span<double> out,
                      Workspace& ws);

// Convenience forms.
std::vector<double> denoiser_forward(const Denoiser& model, std::span<const double> x_t,
                                     double t_norm, std::span<const double> cond_embedding);
std::vector<double> forward(const Denoiser& model, const EmbeddingTables& tables,
                            std::span<const double> x_t, double t_norm, const Condition& c);

// Reverse-mode pass for one element. dout is dLoss/d(prediction). Accumulates
// into grad (size param_count); when non-empty, dcond receives
// dLoss/d(cond embedding) for this element (overwritten). Requires the
// workspace state left by denoiser_forward for the same inputs; scratch
// fields of ws are clobbered.
void denoiser_backward(const Denoiser& model, std::span<const double> x_t, double t_norm,
                       std::span<const double> cond_embedding, Workspace& ws,
                       std::span<const double> dout, std::span<double> grad,
                       std::span<double> dcond);

}  // namespace sag
