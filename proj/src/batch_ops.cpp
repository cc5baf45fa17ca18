#include "sag/batch_ops.hpp"

#include <algorithm>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sag {

void Batch::resize(int n, int dx, int dc) {
    size = n;
    data_dim = dx;
    cond_dim = dc;
    x_t.assign(static_cast<std::size_t>(n) * dx, 0.0);
    t_norm.assign(n, 0.0);
    cond.assign(static_cast<std::size_t>(n) * dc, 0.0);
    eps.assign(static_cast<std::size_t>(n) * dx, 0.0);
}

static int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void LossGradBuffers::resize(const Denoiser& model, int batch_size) {
    const auto& a = model.arch();
    const int n_chunks = (batch_size + kGradChunk - 1) / kGradChunk;
    batch_size_ = batch_size;
    pred.assign(static_cast<std::size_t>(batch_size) * a.data_dim, 0.0);
    grad_slab.assign(static_cast<std::size_t>(n_chunks) * model.param_count(), 0.0);
    dcond.assign(static_cast<std::size_t>(batch_size) * a.cond_dim(), 0.0);
    scratch.resize(std::max(1, max_threads()));
    for (auto& w : scratch) w.resize(a);
}

void predict_batch_serial(const Denoiser& model, const Batch& batch, std::span<double> out) {
    const auto& a = model.arch();
    if (out.size() != static_cast<std::size_t>(batch.size) * a.data_dim)
        throw std::invalid_argument("predict_batch: output size mismatch");
    Workspace ws;
    ws.resize(a);
    for (int i = 0; i < batch.size; ++i) {
        denoiser_forward(model, batch.x_row(i), batch.t_norm[i], batch.cond_row(i),
                         out.subspan(static_cast<std::size_t>(i) * a.data_dim, a.data_dim), ws);
    }
}

void predict_batch(const Denoiser& model, const Batch& batch, std::span<double> out, Exec exec) {
    if (exec == Exec::Serial) {
        predict_batch_serial(model, batch, out);
        return;
    }
    const auto& a = model.arch();
    if (out.size() != static_cast<std::size_t>(batch.size) * a.data_dim)
        throw std::invalid_argument("predict_batch: output size mismatch");
    std::vector<Workspace> pool(std::max(1, max_threads()));
    for (auto& w : pool) w.resize(a);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < batch.size; ++i) {
#ifdef _OPENMP
        Workspace& ws = pool[omp_get_thread_num()];
#else
        Workspace& ws = pool[0];
#endif
        denoiser_forward(model, batch.x_row(i), batch.t_norm[i], batch.cond_row(i),
                         out.subspan(static_cast<std::size_t>(i) * a.data_dim, a.data_dim), ws);
    }
}

static BatchLoss loss_grad_impl(const Denoiser& model, const Batch& batch,
                                LossGradBuffers& buffers, std::span<double> grad_out,
                                bool parallel) {
    const auto& a = model.arch();
    const std::size_t P = model.param_count();
    if (batch.size == 0) throw std::invalid_argument("loss_grad_batch: empty batch");
    if (grad_out.size() != P) throw std::invalid_argument("loss_grad_batch: grad size mismatch");
    const int n_chunks = (batch.size + kGradChunk - 1) / kGradChunk;
    if (buffers.batch_size() != batch.size) buffers.resize(model, batch.size);
    std::fill(buffers.grad_slab.begin(), buffers.grad_slab.end(), 0.0);

    // Work is split into fixed-size element chunks. Each chunk accumulates its
    // gradient left to right into its own buffer; buffers are then folded in
    // chunk order. The grouping depends only on kGradChunk, so the result is
    // identical for any thread count and for the serial reference.
    const double inv_b = 1.0 / batch.size;
    auto chunk = [&](int ci, Workspace& ws) {
        auto gc = std::span<double>(buffers.grad_slab).subspan(static_cast<std::size_t>(ci) * P, P);
        const int lo = ci * kGradChunk;
        const int hi = std::min(batch.size, lo + kGradChunk);
        for (int i = lo; i < hi; ++i) {
            auto pred = std::span<double>(buffers.pred).subspan(
                static_cast<std::size_t>(i) * a.data_dim, a.data_dim);
            denoiser_forward(model, batch.x_row(i), batch.t_norm[i], batch.cond_row(i), pred, ws);
            auto target = batch.eps_row(i);
            for (int j = 0; j < a.data_dim; ++j) ws.dout[j] = 2.0 * (pred[j] - target[j]) * inv_b;
            auto dci = std::span<double>(buffers.dcond)
                           .subspan(static_cast<std::size_t>(i) * a.cond_dim(), a.cond_dim());
            denoiser_backward(model, batch.x_row(i), batch.t_norm[i], batch.cond_row(i), ws,
                              ws.dout, gc, dci);
        }
    };

    if (parallel) {
#pragma omp parallel for schedule(static)
        for (int ci = 0; ci < n_chunks; ++ci) {
#ifdef _OPENMP
            Workspace& ws = buffers.scratch[omp_get_thread_num()];
#else
            Workspace& ws = buffers.scratch[0];
#endif
            chunk(ci, ws);
        }
    } else {
        Workspace& ws = buffers.scratch[0];
        for (int ci = 0; ci < n_chunks; ++ci) chunk(ci, ws);
    }

    std::fill(grad_out.begin(), grad_out.end(), 0.0);
    for (int ci = 0; ci < n_chunks; ++ci) {
        const double* gi = buffers.grad_slab.data() + static_cast<std::size_t>(ci) * P;
        for (std::size_t j = 0; j < P; ++j) grad_out[j] += gi[j];
    }

    BatchLoss out;
    double loss = 0.0;
    for (int i = 0; i < batch.size; ++i) {
        auto pred = std::span<const double>(buffers.pred)
                        .subspan(static_cast<std::size_t>(i) * a.data_dim, a.data_dim);
        auto target = batch.eps_row(i);
        for (int j = 0; j < a.data_dim; ++j) {
            const double d = pred[j] - target[j];
            loss += d * d;
        }
    }
    out.loss = loss * inv_b;
    return out;
}

BatchLoss loss_grad_batch(const Denoiser& model, const Batch& batch, LossGradBuffers& buffers,
                          std::span<double> grad_out, Exec exec) {
    return loss_grad_impl(model, batch, buffers, grad_out, exec == Exec::Parallel);
}

BatchLoss loss_grad_batch_serial(const Denoiser& model, const Batch& batch,
                                 LossGradBuffers& buffers, std::span<double> grad_out) {
    return loss_grad_impl(model, batch, buffers, grad_out, false);
}

double denoising_loss(const Denoiser& model, const EmbeddingTables& tables,
                      std::span<const std::pair<std::vector<double>, Condition>> batch,
                      const NoiseSchedule& sched, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("denoising_loss: empty batch");
    const auto& a = model.arch();
    Batch b;
    b.resize(static_cast<int>(batch.size()), a.data_dim, a.cond_dim());
    std::vector<double> eps(a.data_dim);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& [x0, cnd] = batch[i];
        if (x0.size() != static_cast<std::size_t>(a.data_dim))
            throw std::invalid_argument("denoising_loss: x0 dimension mismatch");
        const int k = static_cast<int>(rng.uniform_int(1, sched.num_steps));
        for (auto& e : eps) e = rng.normal();
        NoisySample ns = q_sample(x0, k, eps, sched);
        auto xr = b.x_row(static_cast<int>(i));
        std::copy(ns.x_t.begin(), ns.x_t.end(), xr.begin());
        b.t_norm[i] = sched.t_norm(k);
        embed_into(cnd, tables, b.cond_row(static_cast<int>(i)));
        auto er = b.eps_row(static_cast<int>(i));
        std::copy(eps.begin(), eps.end(), er.begin());
    }
    std::vector<double> pred(static_cast<std::size_t>(b.size) * a.data_dim);
    predict_batch(model, b, pred, Exec::Serial);
    double loss = 0.0;
    for (int i = 0; i < b.size; ++i)
        for (int j = 0; j < a.data_dim; ++j) {
            const double d = pred[static_cast<std::size_t>(i) * a.data_dim + j] -
                             b.eps[static_cast<std::size_t>(i) * a.data_dim + j];
            loss += d * d;
        }
    return loss / b.size;
}

}  // namespace sag
