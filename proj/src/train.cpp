#include "sag/train.hpp"

#include <cmath>
#include <stdexcept>

#include "sag/errors.hpp"

namespace sag {

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               std::int64_t t, double lr, const AdamParams& hp) {
    if (params.size() != grad.size() || state.m.size() != params.size())
        throw std::invalid_argument("adam_step: size mismatch");
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grad[i];
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
        const double mh = state.m[i] / bc1;
        const double vh = state.v[i] / bc2;
        params[i] -= lr * mh / (std::sqrt(vh) + hp.eps);
    }
}

TrainResult train(std::span<const LabeledPoint> dataset, const TrainConfig& config,
                  const WorldSpec& world, const DenoiserArch& arch, const NoiseSchedule& sched,
                  double table_init_scale) {
    if (config.steps < 0 || config.batch_size < 1)
        throw std::invalid_argument("train: bad steps/batch");
    if (!(config.dropout_prob >= 0.0 && config.dropout_prob < 1.0))
        throw std::invalid_argument("train: dropout_prob must be in [0,1)");
    if (!(config.mix_ratio > 0.0 && config.mix_ratio <= 1.0))
        throw std::invalid_argument("train: mix_ratio must be in (0,1]");
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    std::vector<int> domain_idx, general_idx;
    std::vector<bool> style_seen(world.num_styles, false);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (dataset[i].domain_tag == DomainTag::DomainSpecific ? domain_idx : general_idx)
            .push_back(static_cast<int>(i));
        style_seen[dataset[i].style_id] = true;
    }
    for (int s = 0; s < world.num_styles; ++s)
        if (!style_seen[s]) throw std::invalid_argument("train: dataset does not cover style " +
                                                        std::to_string(s));

    Rng rng(config.seed);
    Denoiser model(arch);
    model.init_params(rng);
    EmbeddingTables tables = init_tables(world.num_styles, world.num_subjects, arch.content_dim,
                                         arch.subject_dim, table_init_scale, rng);

    const std::size_t P = model.param_count();
    AdamState st_model, st_style, st_generic;
    st_model.resize(P);
    st_style.resize(tables.style.size());
    st_generic.resize(tables.generic.size());

    Batch batch;
    batch.resize(config.batch_size, arch.data_dim, arch.cond_dim());
    LossGradBuffers buffers;
    buffers.resize(model, config.batch_size);
    std::vector<double> grad(P);
    std::vector<double> g_style(tables.style.size());
    std::vector<double> g_generic(tables.generic.size());
    std::vector<double> eps(arch.data_dim);

    // per-element bookkeeping for gradient routing
    std::vector<int> el_style(config.batch_size);    // style id or -1
    std::vector<int> el_generic(config.batch_size);  // generic row id or -1

    TrainResult out{std::move(model), std::move(tables), {}};
    TrainStats& stats = out.stats;
    const double inv_b = 1.0 / config.batch_size;
    double tail_sum = 0.0;
    int tail_n = 0;

    for (int step = 0; step < config.steps; ++step) {
        double reg_term = 0.0;
        for (int i = 0; i < config.batch_size; ++i) {
            const bool use_domain = !domain_idx.empty() && rng.bernoulli(config.mix_ratio);
            const auto& pt = use_domain
                                 ? dataset[domain_idx[rng.uniform_int(0, static_cast<std::int64_t>(domain_idx.size()) - 1)]]
                                 : dataset[general_idx[rng.uniform_int(0, static_cast<std::int64_t>(general_idx.size()) - 1)]];
            (use_domain ? stats.domain_draws : stats.general_draws) += 1;

            int style_id = pt.style_id;
            int generic_id = pt.subject_id;
            if (!use_domain) {
                const double u = rng.uniform();
                if (u < 0.2) style_id = -1;        // subject-only caption
                else if (u < 0.4) generic_id = -1; // style-only caption
            }
            if (rng.bernoulli(config.dropout_prob)) {  // phi
                style_id = -1;
                generic_id = -1;
                stats.dropout_draws += 1;
            }
            el_style[i] = style_id;
            el_generic[i] = generic_id;

            const int k = static_cast<int>(rng.uniform_int(1, sched.num_steps));
            for (auto& e : eps) e = rng.normal();
            const double ab = sched.alpha_bar_at(k);
            const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
            auto xr = batch.x_row(i);
            for (int j = 0; j < arch.data_dim; ++j) xr[j] = cs * pt.x[j] + cn * eps[j];
            batch.t_norm[i] = sched.t_norm(k);
            auto er = batch.eps_row(i);
            std::copy(eps.begin(), eps.end(), er.begin());

            auto cr = batch.cond_row(i);
            std::fill(cr.begin(), cr.end(), 0.0);
            if (style_id >= 0) {
                auto row = out.tables.style_row(style_id);
                std::copy(row.begin(), row.end(), cr.begin());
            }
            if (generic_id >= 0) {
                auto row = out.tables.generic_row(generic_id);
                std::copy(row.begin(), row.end(), cr.begin() + arch.content_dim);
                double n2 = 0.0;
                for (double v : row) n2 += v * v;
                reg_term += config.token_reg_weight * n2 * inv_b;
            }
        }

        const BatchLoss bl = loss_grad_batch(out.model, batch, buffers, grad, Exec::Parallel);
        if (!std::isfinite(bl.loss))
            throw numerical_error("train: non-finite loss at step " + std::to_string(step));

        std::fill(g_style.begin(), g_style.end(), 0.0);
        std::fill(g_generic.begin(), g_generic.end(), 0.0);
        for (int i = 0; i < config.batch_size; ++i) {
            const double* dc = buffers.dcond.data() + static_cast<std::size_t>(i) * arch.cond_dim();
            if (el_style[i] >= 0) {
                double* gr = g_style.data() + static_cast<std::size_t>(el_style[i]) * arch.content_dim;
                for (int j = 0; j < arch.content_dim; ++j) gr[j] += dc[j];
            }
            if (el_generic[i] >= 0) {
                double* gr =
                    g_generic.data() + static_cast<std::size_t>(el_generic[i]) * arch.subject_dim;
                auto row = out.tables.generic_row(el_generic[i]);
                for (int j = 0; j < arch.subject_dim; ++j)
                    gr[j] += dc[arch.content_dim + j] +
                             config.token_reg_weight * 2.0 * row[j] * inv_b;
            }
        }

        double lr = config.learning_rate;
        if (config.lr_final >= 0.0)
            lr = config.lr_final + (config.learning_rate - config.lr_final) * 0.5 *
                                       (1.0 + std::cos(M_PI * step / config.steps));
        const std::int64_t t = step + 1;
        adam_step(out.model.params(), grad, st_model, t, lr, config.adam);
        adam_step(out.tables.style, g_style, st_style, t, lr, config.adam);
        adam_step(out.tables.generic, g_generic, st_generic, t, lr, config.adam);

        if (step == 0) stats.initial_loss = bl.loss;
        if (step >= config.steps - 100) {
            tail_sum += bl.loss;
            ++tail_n;
        }
        if (step % config.log_every == 0 || step == config.steps - 1)
            stats.curve.push_back({step, bl.loss + reg_term, bl.loss, reg_term});
    }
    stats.final_loss = tail_n > 0 ? tail_sum / tail_n : stats.initial_loss;
    return out;
}

}  // namespace sag
