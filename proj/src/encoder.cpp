#include <cmath>
#include <stdexcept>

#include "sag/errors.hpp"
#include "sag/subject.hpp"

namespace sag {

SubjectEncoder::SubjectEncoder(const EncoderArch& arch) : arch_(arch) {
    if (arch.input_dim < 1 || arch.hidden < 1 || arch.out_dim < 1)
        throw std::invalid_argument("encoder: bad architecture");
    std::size_t off = 0;
    auto add = [&](const std::string& name, std::size_t count) {
        segments_.push_back({name, off, count});
        off += count;
    };
    add("w1", static_cast<std::size_t>(arch.hidden) * arch.input_dim);
    add("b1", arch.hidden);
    add("w2", static_cast<std::size_t>(arch.hidden) * arch.hidden);
    add("b2", arch.hidden);
    add("w3", static_cast<std::size_t>(arch.out_dim) * arch.hidden);
    add("b3", arch.out_dim);
    params_.assign(off, 0.0);
}

std::span<double> SubjectEncoder::segment(const std::string& name) {
    for (const auto& s : segments_)
        if (s.name == name) return {params_.data() + s.offset, s.count};
    throw std::invalid_argument("encoder: unknown segment " + name);
}

std::span<const double> SubjectEncoder::segment(const std::string& name) const {
    for (const auto& s : segments_)
        if (s.name == name) return {params_.data() + s.offset, s.count};
    throw std::invalid_argument("encoder: unknown segment " + name);
}

void SubjectEncoder::init_params(Rng& rng) {
    auto fill = [&](std::span<double> w, double scale) {
        for (auto& v : w) v = scale * rng.normal();
    };
    fill(segment("w1"), 1.0 / std::sqrt(static_cast<double>(arch_.input_dim)));
    fill(segment("w2"), 1.0 / std::sqrt(static_cast<double>(arch_.hidden)));
    fill(segment("w3"), 1.0 / std::sqrt(static_cast<double>(arch_.hidden)));
}

std::vector<double> SubjectEncoder::encode(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(arch_.input_dim))
        throw std::invalid_argument("encoder: input dimension mismatch");
    const int H = arch_.hidden;
    auto w1 = segment("w1");
    auto b1 = segment("b1");
    auto w2 = segment("w2");
    auto b2 = segment("b2");
    auto w3 = segment("w3");
    auto b3 = segment("b3");
    std::vector<double> h1(H), h2(H), out(arch_.out_dim);
    for (int i = 0; i < H; ++i) {
        double acc = b1[i];
        for (int j = 0; j < arch_.input_dim; ++j)
            acc += w1[static_cast<std::size_t>(i) * arch_.input_dim + j] * x[j];
        h1[i] = std::tanh(acc);
    }
    for (int i = 0; i < H; ++i) {
        double acc = b2[i];
        for (int j = 0; j < H; ++j) acc += w2[static_cast<std::size_t>(i) * H + j] * h1[j];
        h2[i] = std::tanh(acc);
    }
    for (int i = 0; i < arch_.out_dim; ++i) {
        double acc = b3[i];
        for (int j = 0; j < H; ++j) acc += w3[static_cast<std::size_t>(i) * H + j] * h2[j];
        out[i] = acc;
    }
    return out;
}

void SubjectEncoder::backward(std::span<const double> x, std::span<const double> ds,
                              std::span<double> grad) const {
    if (grad.size() != params_.size())
        throw std::invalid_argument("encoder backward: grad size mismatch");
    const int H = arch_.hidden;
    // recompute activations (encoder is tiny)
    auto w1 = segment("w1");
    auto b1 = segment("b1");
    auto w2 = segment("w2");
    auto b2 = segment("b2");
    auto w3 = segment("w3");
    std::vector<double> h1(H), h2(H);
    for (int i = 0; i < H; ++i) {
        double acc = b1[i];
        for (int j = 0; j < arch_.input_dim; ++j)
            acc += w1[static_cast<std::size_t>(i) * arch_.input_dim + j] * x[j];
        h1[i] = std::tanh(acc);
    }
    for (int i = 0; i < H; ++i) {
        double acc = b2[i];
        for (int j = 0; j < H; ++j) acc += w2[static_cast<std::size_t>(i) * H + j] * h1[j];
        h2[i] = std::tanh(acc);
    }
    auto seg = [&](const std::string& name) -> std::span<double> {
        for (const auto& s : segments_)
            if (s.name == name) return {grad.data() + s.offset, s.count};
        throw std::invalid_argument("encoder backward: unknown segment");
    };
    auto g_w3 = seg("w3");
    auto g_b3 = seg("b3");
    std::vector<double> dh2(H, 0.0);
    for (int i = 0; i < arch_.out_dim; ++i) {
        g_b3[i] += ds[i];
        for (int j = 0; j < H; ++j) {
            g_w3[static_cast<std::size_t>(i) * H + j] += ds[i] * h2[j];
            dh2[j] += ds[i] * w3[static_cast<std::size_t>(i) * H + j];
        }
    }
    auto g_w2 = seg("w2");
    auto g_b2 = seg("b2");
    std::vector<double> dh1(H, 0.0);
    for (int i = 0; i < H; ++i) {
        const double da = dh2[i] * (1.0 - h2[i] * h2[i]);
        g_b2[i] += da;
        for (int j = 0; j < H; ++j) {
            g_w2[static_cast<std::size_t>(i) * H + j] += da * h1[j];
            dh1[j] += da * w2[static_cast<std::size_t>(i) * H + j];
        }
    }
    auto g_w1 = seg("w1");
    auto g_b1 = seg("b1");
    for (int i = 0; i < H; ++i) {
        const double da = dh1[i] * (1.0 - h1[i] * h1[i]);
        g_b1[i] += da;
        for (int j = 0; j < arch_.input_dim; ++j)
            g_w1[static_cast<std::size_t>(i) * arch_.input_dim + j] += da * x[j];
    }
}

EncoderTrainResult train_subject_encoder(Denoiser& model, const EmbeddingTables& tables,
                                         const NoiseSchedule& sched,
                                         std::span<const LabeledPoint> dataset,
                                         const EncoderTrainConfig& cfg) {
    const auto& a = model.arch();
    if (dataset.empty()) throw std::invalid_argument("train_subject_encoder: empty dataset");
    std::vector<int> domain_idx, general_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        (dataset[i].domain_tag == DomainTag::DomainSpecific ? domain_idx : general_idx)
            .push_back(static_cast<int>(i));
    if (domain_idx.empty())
        throw std::invalid_argument("train_subject_encoder: no domain-specific points");

    Rng rng(cfg.seed);
    EncoderArch earch{a.data_dim, 32, a.subject_dim};
    SubjectEncoder enc(earch);
    enc.init_params(rng);

    Batch batch;
    batch.resize(cfg.batch_size, a.data_dim, a.cond_dim());
    LossGradBuffers buffers;
    buffers.resize(model, cfg.batch_size);
    std::vector<double> grad(model.param_count());
    std::vector<double> g_enc(enc.param_count());
    AdamState st_enc, st_winc;
    st_enc.resize(enc.param_count());
    auto w_in_c = model.segment("w_in_c");
    st_winc.resize(w_in_c.size());
    std::vector<double> eps(a.data_dim);
    std::vector<int> el_domain(cfg.batch_size);  // 1 when the encoder path was used
    std::vector<std::vector<double>> el_sv(cfg.batch_size);
    std::vector<Point2> el_x(cfg.batch_size);

    EncoderTrainResult out{std::move(enc), {}};
    TrainStats& stats = out.stats;
    const double inv_b = 1.0 / cfg.batch_size;
    double tail_sum = 0.0;
    int tail_n = 0;

    for (int step = 0; step < cfg.steps; ++step) {
        double reg_term = 0.0;
        for (int i = 0; i < cfg.batch_size; ++i) {
            const bool use_domain = rng.bernoulli(cfg.mix_ratio);
            const auto& pt = use_domain
                                 ? dataset[domain_idx[rng.uniform_int(0, static_cast<std::int64_t>(domain_idx.size()) - 1)]]
                                 : dataset[general_idx[rng.uniform_int(0, static_cast<std::int64_t>(general_idx.size()) - 1)]];
            (use_domain ? stats.domain_draws : stats.general_draws) += 1;

            int style_id = pt.style_id;
            int generic_id = pt.subject_id;
            bool enc_path = use_domain;
            if (!use_domain) {
                const double u = rng.uniform();
                if (u < 0.2) style_id = -1;
                else if (u < 0.4) generic_id = -1;
            }
            const bool drop = rng.bernoulli(cfg.dropout_prob);
            if (drop) {
                style_id = -1;
                generic_id = -1;
                enc_path = false;
                stats.dropout_draws += 1;
            }
            el_domain[i] = -1;

            const int k = static_cast<int>(rng.uniform_int(1, sched.num_steps));
            for (auto& e : eps) e = rng.normal();
            const double ab = sched.alpha_bar_at(k);
            const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
            auto xr = batch.x_row(i);
            for (int j = 0; j < a.data_dim; ++j) xr[j] = cs * pt.x[j] + cn * eps[j];
            batch.t_norm[i] = sched.t_norm(k);
            auto er = batch.eps_row(i);
            std::copy(eps.begin(), eps.end(), er.begin());

            auto cr = batch.cond_row(i);
            std::fill(cr.begin(), cr.end(), 0.0);
            if (style_id >= 0) {
                auto row = tables.style_row(style_id);
                std::copy(row.begin(), row.end(), cr.begin());
            }
            if (enc_path) {
                std::vector<double> xin(pt.x.begin(), pt.x.end());
                el_sv[i] = out.encoder.encode(xin);
                std::copy(el_sv[i].begin(), el_sv[i].end(), cr.begin() + a.content_dim);
                el_domain[i] = 1;
                el_x[i] = pt.x;  // kept for the encoder backward pass
                double n2 = 0.0;
                for (double v : el_sv[i]) n2 += v * v;
                reg_term += cfg.token_reg_weight * n2 * inv_b;
            } else if (generic_id >= 0) {
                auto row = tables.generic_row(generic_id);
                std::copy(row.begin(), row.end(), cr.begin() + a.content_dim);
            }
        }

        const BatchLoss bl = loss_grad_batch(model, batch, buffers, grad, Exec::Parallel);
        if (!std::isfinite(bl.loss))
            throw numerical_error("train_subject_encoder: non-finite loss at step " +
                                  std::to_string(step));

        std::fill(g_enc.begin(), g_enc.end(), 0.0);
        std::vector<double> ds(a.subject_dim);
        for (int i = 0; i < cfg.batch_size; ++i) {
            if (el_domain[i] < 0) continue;
            const double* dc = buffers.dcond.data() + static_cast<std::size_t>(i) * a.cond_dim();
            for (int j = 0; j < a.subject_dim; ++j)
                ds[j] = dc[a.content_dim + j] + cfg.token_reg_weight * 2.0 * el_sv[i][j] * inv_b;
            out.encoder.backward(el_x[i], ds, g_enc);
        }

        // only the condition projection and the encoder receive updates
        const std::int64_t t = step + 1;
        std::span<double> winc = model.segment("w_in_c");
        std::span<const double> g_winc = [&] {
            for (const auto& s : model.segments())
                if (s.name == "w_in_c")
                    return std::span<const double>(grad.data() + s.offset, s.count);
            throw std::logic_error("w_in_c segment missing");
        }();
        adam_step(winc, g_winc, st_winc, t, cfg.learning_rate, cfg.adam);
        adam_step(out.encoder.params(), g_enc, st_enc, t, cfg.learning_rate, cfg.adam);

        if (step == 0) stats.initial_loss = bl.loss;
        if (step >= cfg.steps - 100) {
            tail_sum += bl.loss;
            ++tail_n;
        }
        if (step % cfg.log_every == 0 || step == cfg.steps - 1)
            stats.curve.push_back({step, bl.loss + reg_term, bl.loss, reg_term});
    }
    stats.final_loss = tail_n > 0 ? tail_sum / tail_n : stats.initial_loss;
    return out;
}

}  // namespace sag
