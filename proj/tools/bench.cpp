// Benchmark: OpenMP batch kernels against their serial reference
// implementations (forward, loss+gradient, full sampling chains).

#include <chrono>
#include <cstdio>
#include <vector>

#include "sag/batch_ops.hpp"
#include "sag/sampler.hpp"
#include "sag/schedule.hpp"
#include "sag/train.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace sag;
using clock_type = std::chrono::steady_clock;

static double ms_since(clock_type::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp: not enabled\n");
#endif
    DenoiserArch arch;
    Rng rng(42);
    Denoiser model(arch);
    model.init_params(rng);
    // output head must be nonzero for representative arithmetic
    for (auto& v : model.segment("w_out")) v = 0.05 * rng.normal();

    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    EmbeddingTables tables =
        init_tables(3, 5, arch.content_dim, arch.subject_dim, 0.7, rng);

    for (int B : {64, 256, 1024}) {
        Batch batch;
        batch.resize(B, arch.data_dim, arch.cond_dim());
        for (auto& v : batch.x_t) v = rng.normal();
        for (auto& v : batch.cond) v = 0.5 * rng.normal();
        for (auto& v : batch.eps) v = rng.normal();
        for (int i = 0; i < B; ++i) batch.t_norm[i] = (i % 1000 + 1) / 1000.0;

        std::vector<double> out(static_cast<std::size_t>(B) * arch.data_dim);
        const int reps = 20;

        auto t0 = clock_type::now();
        for (int r = 0; r < reps; ++r) predict_batch_serial(model, batch, out);
        const double fwd_serial = ms_since(t0) / reps;
        t0 = clock_type::now();
        for (int r = 0; r < reps; ++r) predict_batch(model, batch, out, Exec::Parallel);
        const double fwd_par = ms_since(t0) / reps;

        LossGradBuffers buffers;
        buffers.resize(model, B);
        std::vector<double> grad(model.param_count());
        t0 = clock_type::now();
        for (int r = 0; r < reps; ++r) loss_grad_batch_serial(model, batch, buffers, grad);
        const double grad_serial = ms_since(t0) / reps;
        t0 = clock_type::now();
        for (int r = 0; r < reps; ++r) loss_grad_batch(model, batch, buffers, grad, Exec::Parallel);
        const double grad_par = ms_since(t0) / reps;

        std::printf("B=%5d  forward %8.3f ms -> %8.3f ms (x%.2f)   loss+grad %8.3f ms -> %8.3f ms (x%.2f)\n",
                    B, fwd_serial, fwd_par, fwd_serial / fwd_par, grad_serial, grad_par,
                    grad_serial / grad_par);
    }

    // sampling chains
    GuidanceSpec spec;
    spec.mode = GuidanceMode::Dcfg;
    spec.w = 2.0;
    spec.r = 0.0;
    spec.T = 0.9;
    Condition c = make_subject_aware(ContentSpec{1}, make_separate_embedding(
                                                          std::vector<double>(arch.subject_dim, 0.3), 1));
    std::optional<Condition> c0 = make_agnostic_separate_flavor(c);
    SamplerConfig scfg;
    scfg.num_steps = 50;
    scfg.batch = 256;
    scfg.seed = 7;
    scfg.record_trace = false;

    auto t0 = clock_type::now();
    SampleResult rs = sample_serial(model, tables, sched, c, c0, spec, scfg);
    const double smp_serial = ms_since(t0);
    t0 = clock_type::now();
    SampleResult rp = sample(model, tables, sched, c, c0, spec, scfg, Exec::Parallel);
    const double smp_par = ms_since(t0);
    const bool equal = rs.samples == rp.samples;
    std::printf("sample  (256 chains x 50 steps, dcfg)  %8.1f ms -> %8.1f ms (x%.2f)  bitwise_equal=%s\n",
                smp_serial, smp_par, smp_serial / smp_par, equal ? "yes" : "NO");
    return equal ? 0 : 1;
}
