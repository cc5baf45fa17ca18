#include "sag/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sag/errors.hpp"

namespace sag {

SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "ddpm") return SamplerKind::DdpmAncestral;
    if (s == "ddim") return SamplerKind::Ddim;
    throw std::invalid_argument("unknown sampler kind: " + s);
}

std::string to_string(SamplerKind k) {
    return k == SamplerKind::DdpmAncestral ? "ddpm" : "ddim";
}

std::vector<int> strided_steps(int num_steps, int T0) {
    if (num_steps < 1 || num_steps > T0)
        throw std::invalid_argument("strided_steps: need 1 <= num_steps <= T0");
    std::vector<int> ks(num_steps);
    for (int i = 0; i < num_steps; ++i) {
        int k = T0 - static_cast<int>(std::llround(static_cast<double>(i) * T0 / num_steps));
        ks[i] = k;
    }
    for (int i = 0; i + 1 < num_steps; ++i)
        if (!(ks[i] > ks[i + 1]) || ks[i + 1] < 1)
            throw std::invalid_argument("strided_steps: stride produced a non-decreasing step set");
    return ks;
}

static void clip_inplace(std::vector<double>& v, double bound) {
    if (bound <= 0.0) return;
    for (auto& x : v) x = std::clamp(x, -bound, bound);
}

std::vector<double> ddpm_step(std::span<const double> x_k, std::span<const double> eps_tilde,
                              int k, const NoiseSchedule& sched, Rng& rng, double x0_clip) {
    if (k < 1 || k > sched.num_steps) throw std::invalid_argument("ddpm_step: step out of range");
    if (x_k.size() != eps_tilde.size()) throw std::invalid_argument("ddpm_step: dimension mismatch");
    const double ab_k = sched.alpha_bar_at(k);
    const double ab_prev = sched.alpha_bar_at(k - 1);
    const double beta = sched.beta_at(k);
    const double alpha = 1.0 - beta;
    std::vector<double> x0(x_k.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
        x0[i] = (x_k[i] - std::sqrt(1.0 - ab_k) * eps_tilde[i]) / std::sqrt(ab_k);
    clip_inplace(x0, x0_clip);
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab_k);
    const double ck = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab_k);
    const double sigma = k > 1 ? std::sqrt((1.0 - ab_prev) / (1.0 - ab_k) * beta) : 0.0;
    std::vector<double> out(x_k.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = c0 * x0[i] + ck * x_k[i];
        if (sigma > 0.0) out[i] += sigma * rng.normal();
    }
    return out;
}

std::vector<double> ddim_step(std::span<const double> x_k, std::span<const double> eps_tilde,
                              int k, int k_next, const NoiseSchedule& sched, double eta, Rng& rng,
                              double x0_clip) {
    if (k < 1 || k > sched.num_steps || k_next < 0 || k_next >= k)
        throw std::invalid_argument("ddim_step: invalid step pair");
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("ddim_step: eta outside [0,1]");
    if (x_k.size() != eps_tilde.size()) throw std::invalid_argument("ddim_step: dimension mismatch");
    const double ab_k = sched.alpha_bar_at(k);
    const double ab_n = sched.alpha_bar_at(k_next);
    std::vector<double> x0(x_k.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
        x0[i] = (x_k[i] - std::sqrt(1.0 - ab_k) * eps_tilde[i]) / std::sqrt(ab_k);
    clip_inplace(x0, x0_clip);
    double sigma = 0.0;
    if (eta > 0.0 && k_next >= 1)
        sigma = eta * std::sqrt((1.0 - ab_n) / (1.0 - ab_k)) * std::sqrt(1.0 - ab_k / ab_n);
    const double dir = std::sqrt(std::max(1.0 - ab_n - sigma * sigma, 0.0));
    std::vector<double> out(x_k.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::sqrt(ab_n) * x0[i] + dir * eps_tilde[i];
        if (sigma > 0.0) out[i] += sigma * rng.normal();
    }
    return out;
}

static void validate_sample_args(const NoiseSchedule& sched, const GuidanceSpec& spec,
                                 const SamplerConfig& cfg, bool has_c0) {
    spec.validate();
    if (spec.mode == GuidanceMode::Dcfg && !has_c0)
        throw std::invalid_argument("sample: dcfg mode requires a subject-agnostic condition c0");
    if (cfg.batch < 1) throw std::invalid_argument("sample: batch must be >= 1");
    if (cfg.kind == SamplerKind::DdpmAncestral && cfg.num_steps != sched.num_steps)
        throw std::invalid_argument("sample: ancestral DDPM runs the full schedule (num_steps == T0)");
}

static void run_chain(const Denoiser& model, const NoiseSchedule& sched,
                      std::span<const double> ce_c, std::span<const double> ce_c0,
                      std::span<const double> ce_null, const GuidanceSpec& spec,
                      const SamplerConfig& cfg, const std::vector<int>& ks, int chain,
                      std::span<double> out_sample, SampleTrace* trace, Workspace& ws) {
    const auto& a = model.arch();
    const bool dcfg_mode = spec.mode == GuidanceMode::Dcfg;
    Rng rng = derive_stream(cfg.seed, static_cast<std::uint64_t>(chain));
    std::vector<double> x(a.data_dim);
    for (auto& v : x) v = rng.normal();

    std::vector<double> e_c(a.data_dim), e_c0(a.data_dim), e_null(a.data_dim);
    for (std::size_t si = 0; si < ks.size(); ++si) {
        const int k = ks[si];
        const int k_next = si + 1 < ks.size() ? ks[si + 1] : 0;
        const double t = sched.t_norm(k);
        denoiser_forward(model, x, t, ce_c, e_c, ws);
        if (dcfg_mode) denoiser_forward(model, x, t, ce_c0, e_c0, ws);
        denoiser_forward(model, x, t, ce_null, e_null, ws);

        GuidedPrediction gp = dcfg_mode ? dcfg(e_c, e_c0, e_null, spec, t)
                                        : cfg_prediction(e_c, e_null, spec, t);

        std::vector<double> x_next =
            cfg.kind == SamplerKind::Ddim
                ? ddim_step(x, gp.eps_tilde, k, k_next, sched, cfg.eta, rng, cfg.x0_clip)
                : ddpm_step(x, gp.eps_tilde, k, sched, rng, cfg.x0_clip);
        for (double v : x_next)
            if (!std::isfinite(v))
                throw numerical_error("sample: non-finite state at step k=" + std::to_string(k) +
                                      " chain=" + std::to_string(chain));
        if (trace) {
            TraceStep& ts = trace->steps[static_cast<std::size_t>(chain) * ks.size() + si];
            ts.chain = chain;
            ts.k = k;
            ts.t_norm = t;
            ts.w_t = gp.w_t;
            ts.eps_c = gp.eps_c;
            if (dcfg_mode) ts.eps_c0 = *gp.eps_c0;
            ts.eps_null = gp.eps_null;
            ts.eps_tilde = gp.eps_tilde;
            ts.x_before = x;
            ts.x_after = x_next;
        }
        x = std::move(x_next);
    }
    std::copy(x.begin(), x.end(), out_sample.begin());
}

static SampleResult sample_impl(const Denoiser& model, const EmbeddingTables& tables,
                                const NoiseSchedule& sched, const Condition& c,
                                const std::optional<Condition>& c0, const GuidanceSpec& spec,
                                const SamplerConfig& cfg, bool parallel) {
    validate_sample_args(sched, spec, cfg, c0.has_value());
    const auto& a = model.arch();
    const std::vector<int> ks = strided_steps(cfg.num_steps, sched.num_steps);

    std::vector<double> ce_c(a.cond_dim()), ce_c0(a.cond_dim()), ce_null(a.cond_dim(), 0.0);
    embed_into(c, tables, ce_c);
    if (c0.has_value()) embed_into(*c0, tables, ce_c0);
    embed_into(null_condition(), tables, ce_null);

    SampleResult res;
    res.data_dim = a.data_dim;
    res.batch = cfg.batch;
    res.samples.assign(static_cast<std::size_t>(cfg.batch) * a.data_dim, 0.0);
    SampleTrace* trace = nullptr;
    if (cfg.record_trace) {
        res.trace.spec = spec;
        res.trace.config = cfg;
        res.trace.data_dim = a.data_dim;
        res.trace.steps.resize(static_cast<std::size_t>(cfg.batch) * ks.size());
        trace = &res.trace;
    }

    if (parallel) {
        std::exception_ptr err;
#pragma omp parallel
        {
            Workspace ws;
            ws.resize(a);
#pragma omp for schedule(static)
            for (int chain = 0; chain < cfg.batch; ++chain) {
                try {
                    run_chain(model, sched, ce_c, ce_c0, ce_null, spec, cfg, ks, chain,
                              std::span<double>(res.samples)
                                  .subspan(static_cast<std::size_t>(chain) * a.data_dim, a.data_dim),
                              trace, ws);
                } catch (...) {
#pragma omp critical
                    if (!err) err = std::current_exception();
                }
            }
        }
        if (err) std::rethrow_exception(err);
    } else {
        Workspace ws;
        ws.resize(a);
        for (int chain = 0; chain < cfg.batch; ++chain)
            run_chain(model, sched, ce_c, ce_c0, ce_null, spec, cfg, ks, chain,
                      std::span<double>(res.samples)
                          .subspan(static_cast<std::size_t>(chain) * a.data_dim, a.data_dim),
                      trace, ws);
    }
    return res;
}

SampleResult sample(const Denoiser& model, const EmbeddingTables& tables,
                    const NoiseSchedule& sched, const Condition& c,
                    const std::optional<Condition>& c0, const GuidanceSpec& spec,
                    const SamplerConfig& cfg, Exec exec) {
    return sample_impl(model, tables, sched, c, c0, spec, cfg, exec == Exec::Parallel);
}

SampleResult sample_serial(const Denoiser& model, const EmbeddingTables& tables,
                           const NoiseSchedule& sched, const Condition& c,
                           const std::optional<Condition>& c0, const GuidanceSpec& spec,
                           const SamplerConfig& cfg) {
    return sample_impl(model, tables, sched, c, c0, spec, cfg, false);
}

}  // namespace sag
