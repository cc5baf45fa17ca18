#include "sag/denoiser.hpp"

#include "sag/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace sag {

Denoiser::Denoiser(const DenoiserArch& arch) : arch_(arch) {
    if (arch.data_dim < 1 || arch.content_dim < 1 || arch.subject_dim < 1 ||
        arch.time_features < 1 || arch.hidden_width < 1 || arch.hidden_depth < 0)
        throw std::invalid_argument("denoiser: bad architecture");
    const std::size_t W = arch.hidden_width;
    const std::size_t F = arch.time_features;
    std::size_t off = 0;
    auto add = [&](const std::string& name, std::size_t count, std::size_t* slot) {
        segments_.push_back({name, off, count});
        if (slot) *slot = off;
        off += count;
    };
    add("time_freq", F, &lay_.time_freq);
    add("w_in_x", W * arch.data_dim, &lay_.w_in_x);
    add("w_in_t", W * 2 * F, &lay_.w_in_t);
    add("w_in_c", W * arch.cond_dim(), &lay_.w_in_c);
    add("b_in", W, &lay_.b_in);
    lay_.w_h.resize(arch.hidden_depth);
    lay_.b_h.resize(arch.hidden_depth);
    for (int l = 0; l < arch.hidden_depth; ++l) {
        add("w_h" + std::to_string(l), W * W, &lay_.w_h[l]);
        add("b_h" + std::to_string(l), W, &lay_.b_h[l]);
    }
    add("w_out", static_cast<std::size_t>(arch.data_dim) * W, &lay_.w_out);
    add("b_out", arch.data_dim, &lay_.b_out);
    params_.assign(off, 0.0);
}

std::span<double> Denoiser::segment(const std::string& name) {
    for (const auto& s : segments_)
        if (s.name == name) return {params_.data() + s.offset, s.count};
    throw std::invalid_argument("denoiser: unknown segment " + name);
}

std::span<const double> Denoiser::segment(const std::string& name) const {
    for (const auto& s : segments_)
        if (s.name == name) return {params_.data() + s.offset, s.count};
    throw std::invalid_argument("denoiser: unknown segment " + name);
}

void Denoiser::init_params(Rng& rng) {
    auto fill = [&](std::span<double> w, double scale) {
        for (auto& v : w) v = scale * rng.normal();
    };
    auto freq = segment("time_freq");
    for (std::size_t j = 0; j < freq.size(); ++j)
        freq[j] = 2.0 * M_PI * std::pow(2.0, static_cast<double>(j));
    fill(segment("w_in_x"), 1.0 / std::sqrt(static_cast<double>(arch_.data_dim)));
    fill(segment("w_in_t"), 1.0 / std::sqrt(2.0 * arch_.time_features));
    fill(segment("w_in_c"), 1.0 / std::sqrt(static_cast<double>(arch_.cond_dim())));
    // b_in stays zero
    for (int l = 0; l < arch_.hidden_depth; ++l)
        fill(segment("w_h" + std::to_string(l)),
             1.0 / std::sqrt(static_cast<double>(arch_.hidden_width)));
    // w_out, b_out stay zero: a fresh model predicts the zero vector
}

void Workspace::resize(const DenoiserArch& arch) {
    time_feat.assign(2 * static_cast<std::size_t>(arch.time_features), 0.0);
    h.assign(static_cast<std::size_t>(arch.hidden_depth + 1) * arch.hidden_width, 0.0);
    delta.assign(arch.hidden_width, 0.0);
    delta_next.assign(arch.hidden_width, 0.0);
    dtf.assign(2 * static_cast<std::size_t>(arch.time_features), 0.0);
    dout.assign(arch.data_dim, 0.0);
}

// dot product with four independent accumulators; fixed summation tree keeps
// it deterministic while breaking the FMA latency chain
static inline double dot4(const double* __restrict w, const double* __restrict x, int n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
        a0 += w[j] * x[j];
        a1 += w[j + 1] * x[j + 1];
        a2 += w[j + 2] * x[j + 2];
        a3 += w[j + 3] * x[j + 3];
    }
    for (; j < n; ++j) a0 += w[j] * x[j];
    return (a0 + a1) + (a2 + a3);
}

static void check_forward_args(const Denoiser& m, std::span<const double> x_t, double t_norm,
                               std::span<const double> ce, std::span<const double> out) {
    const auto& a = m.arch();
    if (x_t.size() != static_cast<std::size_t>(a.data_dim))
        throw std::invalid_argument("denoiser: x_t dimension mismatch");
    if (ce.size() != static_cast<std::size_t>(a.cond_dim()))
        throw std::invalid_argument("denoiser: condition dimension mismatch");
    if (out.size() != static_cast<std::size_t>(a.data_dim))
        throw std::invalid_argument("denoiser: output dimension mismatch");
    if (!(t_norm > 0.0 && t_norm <= 1.0))
        throw std::invalid_argument("denoiser: t_norm outside (0,1]");
    for (double v : x_t)
        if (!std::isfinite(v)) throw std::invalid_argument("denoiser: non-finite input");
}

void denoiser_forward(const Denoiser& model, std::span<const double> x_t, double t_norm,
                      std::span<const double> ce, std::span<double> out, Workspace& ws) {
    check_forward_args(model, x_t, t_norm, ce, out);
    const auto& a = model.arch();
    const auto& L = model.layout();
    const int W = a.hidden_width, F = a.time_features, DX = a.data_dim, DC = a.cond_dim();
    if (ws.h.size() != static_cast<std::size_t>(a.hidden_depth + 1) * W) ws.resize(a);
    const double* __restrict p = model.params().data();

    for (int j = 0; j < F; ++j) {
        const double ang = p[L.time_freq + j] * t_norm;
        ws.time_feat[j] = std::sin(ang);
        ws.time_feat[F + j] = std::cos(ang);
    }
    const double* __restrict tf = ws.time_feat.data();
    double* __restrict h0 = ws.h.data();
    for (int i = 0; i < W; ++i) {
        double acc = p[L.b_in + i];
        const double* __restrict wx = p + L.w_in_x + static_cast<std::size_t>(i) * DX;
        for (int j = 0; j < DX; ++j) acc += wx[j] * x_t[j];
        acc += dot4(p + L.w_in_t + static_cast<std::size_t>(i) * 2 * F, tf, 2 * F);
        acc += dot4(p + L.w_in_c + static_cast<std::size_t>(i) * DC, ce.data(), DC);
        h0[i] = std::tanh(acc);
    }
    for (int l = 0; l < a.hidden_depth; ++l) {
        const double* __restrict wh = p + L.w_h[l];
        const double* __restrict bh = p + L.b_h[l];
        const double* __restrict hin = ws.h.data() + static_cast<std::size_t>(l) * W;
        double* __restrict hout = ws.h.data() + static_cast<std::size_t>(l + 1) * W;
        for (int i = 0; i < W; ++i)
            hout[i] = std::tanh(bh[i] + dot4(wh + static_cast<std::size_t>(i) * W, hin, W));
    }
    const double* __restrict hlast = ws.h.data() + static_cast<std::size_t>(a.hidden_depth) * W;
    for (int i = 0; i < DX; ++i) {
        const double acc =
            p[L.b_out + i] + dot4(p + L.w_out + static_cast<std::size_t>(i) * W, hlast, W);
        out[i] = acc;
        if (!std::isfinite(acc)) throw numerical_error("denoiser: non-finite prediction");
    }
    model.bump_eval_count();
}

std::vector<double> denoiser_forward(const Denoiser& model, std::span<const double> x_t,
                                     double t_norm, std::span<const double> ce) {
    Workspace ws;
    ws.resize(model.arch());
    std::vector<double> out(model.arch().data_dim);
    denoiser_forward(model, x_t, t_norm, ce, out, ws);
    return out;
}

std::vector<double> forward(const Denoiser& model, const EmbeddingTables& tables,
                            std::span<const double> x_t, double t_norm, const Condition& c) {
    std::vector<double> ce(model.arch().cond_dim());
    embed_into(c, tables, ce);
    return denoiser_forward(model, x_t, t_norm, ce);
}

void denoiser_backward(const Denoiser& model, std::span<const double> x_t, double t_norm,
                       std::span<const double> ce, Workspace& ws, std::span<const double> dout,
                       std::span<double> grad, std::span<double> dcond) {
    const auto& a = model.arch();
    const auto& L = model.layout();
    const int W = a.hidden_width, F = a.time_features, DX = a.data_dim, DC = a.cond_dim();
    if (grad.size() != model.param_count())
        throw std::invalid_argument("denoiser_backward: gradient size mismatch");
    if (dout.size() != static_cast<std::size_t>(DX))
        throw std::invalid_argument("denoiser_backward: dout size mismatch");
    if (!dcond.empty() && dcond.size() != static_cast<std::size_t>(DC))
        throw std::invalid_argument("denoiser_backward: dcond size mismatch");

    const double* __restrict p = model.params().data();
    double* __restrict g = grad.data();
    const double* __restrict hlast = ws.h.data() + static_cast<std::size_t>(a.hidden_depth) * W;

    double* __restrict delta = ws.delta.data();
    double* __restrict delta_next = ws.delta_next.data();
    std::fill(ws.delta.begin(), ws.delta.end(), 0.0);
    if (!dcond.empty()) std::fill(dcond.begin(), dcond.end(), 0.0);

    for (int i = 0; i < DX; ++i) {
        g[L.b_out + i] += dout[i];
        double* __restrict grow = g + L.w_out + static_cast<std::size_t>(i) * W;
        const double* __restrict row = p + L.w_out + static_cast<std::size_t>(i) * W;
        for (int j = 0; j < W; ++j) {
            grow[j] += dout[i] * hlast[j];
            delta[j] += dout[i] * row[j];
        }
    }
    for (int l = a.hidden_depth - 1; l >= 0; --l) {
        const double* __restrict hout = ws.h.data() + static_cast<std::size_t>(l + 1) * W;
        const double* __restrict hin = ws.h.data() + static_cast<std::size_t>(l) * W;
        const double* __restrict wh = p + L.w_h[l];
        double* __restrict g_wh = g + L.w_h[l];
        double* __restrict g_bh = g + L.b_h[l];
        std::fill(ws.delta_next.begin(), ws.delta_next.end(), 0.0);
        for (int i = 0; i < W; ++i) {
            const double da = delta[i] * (1.0 - hout[i] * hout[i]);
            g_bh[i] += da;
            double* __restrict grow = g_wh + static_cast<std::size_t>(i) * W;
            const double* __restrict row = wh + static_cast<std::size_t>(i) * W;
            for (int j = 0; j < W; ++j) {
                grow[j] += da * hin[j];
                delta_next[j] += da * row[j];
            }
        }
        std::swap(delta, delta_next);
        std::swap(ws.delta, ws.delta_next);
    }
    const double* __restrict h0 = ws.h.data();
    const double* __restrict tf = ws.time_feat.data();
    std::fill(ws.dtf.begin(), ws.dtf.end(), 0.0);
    double* __restrict dtf = ws.dtf.data();
    for (int i = 0; i < W; ++i) {
        const double da = delta[i] * (1.0 - h0[i] * h0[i]);
        g[L.b_in + i] += da;
        double* __restrict gx = g + L.w_in_x + static_cast<std::size_t>(i) * DX;
        for (int j = 0; j < DX; ++j) gx[j] += da * x_t[j];
        double* __restrict gt = g + L.w_in_t + static_cast<std::size_t>(i) * 2 * F;
        const double* __restrict wt = p + L.w_in_t + static_cast<std::size_t>(i) * 2 * F;
        for (int j = 0; j < 2 * F; ++j) {
            gt[j] += da * tf[j];
            dtf[j] += da * wt[j];
        }
        double* __restrict gc = g + L.w_in_c + static_cast<std::size_t>(i) * DC;
        const double* __restrict wc = p + L.w_in_c + static_cast<std::size_t>(i) * DC;
        if (dcond.empty()) {
            for (int j = 0; j < DC; ++j) gc[j] += da * ce[j];
        } else {
            double* __restrict dc = dcond.data();
            for (int j = 0; j < DC; ++j) {
                gc[j] += da * ce[j];
                dc[j] += da * wc[j];
            }
        }
    }
    // d sin(f t)/df = t cos(f t), d cos(f t)/df = -t sin(f t)
    for (int j = 0; j < F; ++j) {
        const double ang = p[L.time_freq + j] * t_norm;
        g[L.time_freq + j] +=
            dtf[j] * t_norm * std::cos(ang) - dtf[F + j] * t_norm * std::sin(ang);
    }
}

}  // namespace sag
