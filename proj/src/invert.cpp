#include <cmath>
#include <stdexcept>

#include "sag/errors.hpp"
#include "sag/subject.hpp"

namespace sag {

double SubjectEmbedding::norm() const {
    double n2 = 0.0;
    for (double v : s) n2 += v * v;
    return std::sqrt(n2);
}

SubjectEmbedding invert_subject(const Denoiser& model, const EmbeddingTables& tables,
                                const NoiseSchedule& sched,
                                std::span<const LabeledPoint> references, const InvertConfig& cfg,
                                std::vector<LossRow>* trace) {
    if (references.empty()) throw std::invalid_argument("invert_subject: no references");
    if (cfg.steps < 0) throw std::invalid_argument("invert_subject: negative step count");
    const auto& a = model.arch();
    const int subject_id = references.front().subject_id;
    const int cls = subject_id;  // generic classes are one per subject

    SubjectEmbedding se;
    se.provenance = SubjectProvenance::Inverted;
    se.subject_id = subject_id;
    auto row = tables.generic_row(cls);
    se.s.assign(row.begin(), row.end());

    const int B = static_cast<int>(references.size());
    Rng rng(cfg.seed);
    Batch batch;
    batch.resize(B, a.data_dim, a.cond_dim());
    LossGradBuffers buffers;
    buffers.resize(model, B);
    std::vector<double> grad(model.param_count());  // discarded; base stays frozen
    std::vector<double> gs(a.subject_dim);
    AdamState st;
    st.resize(a.subject_dim);
    std::vector<double> eps(a.data_dim);

    for (int step = 0; step < cfg.steps; ++step) {
        for (int i = 0; i < B; ++i) {
            const auto& ref = references[i];
            const int k = static_cast<int>(rng.uniform_int(1, sched.num_steps));
            for (auto& e : eps) e = rng.normal();
            const double ab = sched.alpha_bar_at(k);
            const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
            auto xr = batch.x_row(i);
            for (int j = 0; j < a.data_dim; ++j) xr[j] = cs * ref.x[j] + cn * eps[j];
            batch.t_norm[i] = sched.t_norm(k);
            auto er = batch.eps_row(i);
            std::copy(eps.begin(), eps.end(), er.begin());
            // bare-subject template: content segment zero, token in the subject slot
            auto cr = batch.cond_row(i);
            std::fill(cr.begin(), cr.end(), 0.0);
            std::copy(se.s.begin(), se.s.end(), cr.begin() + a.content_dim);
        }
        const BatchLoss bl = loss_grad_batch(model, batch, buffers, grad, Exec::Parallel);
        if (!std::isfinite(bl.loss))
            throw numerical_error("invert_subject: non-finite loss at step " + std::to_string(step));

        double reg = 0.0;
        std::fill(gs.begin(), gs.end(), 0.0);
        for (int i = 0; i < B; ++i) {
            const double* dc = buffers.dcond.data() + static_cast<std::size_t>(i) * a.cond_dim();
            for (int j = 0; j < a.subject_dim; ++j) gs[j] += dc[a.content_dim + j];
        }
        for (int j = 0; j < a.subject_dim; ++j) {
            gs[j] += cfg.token_reg_weight * 2.0 * se.s[j];
            reg += cfg.token_reg_weight * se.s[j] * se.s[j];
        }
        adam_step(se.s, gs, st, step + 1, cfg.learning_rate, cfg.adam);
        if (trace && (step % cfg.log_every == 0 || step == cfg.steps - 1))
            trace->push_back({step, bl.loss + reg, bl.loss, reg});
    }
    return se;
}

}  // namespace sag
