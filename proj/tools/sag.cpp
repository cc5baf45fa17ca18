// sag: train / customize / sample a guided-diffusion toy model and audit the
// result files. See README.md for the configuration reference.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "sag/batch_ops.hpp"
#include "sag/checkpoint.hpp"
#include "sag/config.hpp"
#include "sag/errors.hpp"
#include "sag/report.hpp"
#include "sag/runner.hpp"

namespace fs = std::filesystem;
using namespace sag;

namespace {

Config load_config(const std::string& path) {
    if (path.empty()) throw config_error("missing --config");
    if (!fs::exists(path)) throw config_error("config file not found: " + path);
    return parse_config_file(path);
}

std::vector<LabeledPoint> generate_dataset(const Config& cfg, const WorldSpec& world, Rng& rng) {
    return sag::generate_dataset(world, cfg.get_int("dataset", "n_domain", 2000),
                                 cfg.get_int("dataset", "n_general", 18000), rng);
}

std::vector<LabeledPoint> dataset_from_config(const Config& cfg, const WorldSpec& world,
                                              const std::string& dataset_in) {
    if (!dataset_in.empty()) return read_dataset_csv(dataset_in);
    cfg.check_keys("dataset", {"n_domain", "n_general"});
    Rng rng(world.seed);
    return generate_dataset(cfg, world, rng);
}

struct GuidanceOverrides {
    std::optional<double> w, r, T;
    std::optional<std::string> mode;
    std::optional<int> style, steps, batch;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> subject, agnostic;

    void apply(Config& cfg) const {
        if (w) cfg.set("sample", "w", fmt_double(*w));
        if (r) cfg.set("sample", "r", fmt_double(*r));
        if (T) cfg.set("sample", "T", fmt_double(*T));
        if (mode) cfg.set("sample", "mode", *mode);
        if (style) cfg.set("sample", "style", std::to_string(*style));
        if (steps) cfg.set("sample", "num_steps", std::to_string(*steps));
        if (batch) cfg.set("sample", "batch", std::to_string(*batch));
        if (seed) cfg.set("sample", "seed", std::to_string(*seed));
        if (subject) cfg.set("sample", "subject", *subject);
        if (agnostic) cfg.set("sample", "agnostic", *agnostic);
    }
};

int cmd_train(const std::string& config_path, const std::string& out,
              const std::string& dataset_out, const std::string& dataset_in,
              std::optional<std::uint64_t> seed, std::optional<int> steps) {
    Config cfg = load_config(config_path);
    if (seed) cfg.set("train", "seed", std::to_string(*seed));
    if (steps) cfg.set("train", "steps", std::to_string(*steps));
    const WorldSpec world = world_from_config(cfg);
    world.validate();
    const DenoiserArch arch = arch_from_config(cfg);
    const NoiseSchedule sched = schedule_from_config(cfg);
    const TrainConfig tc = train_config_from(cfg);
    const auto dataset = dataset_from_config(cfg, world, dataset_in);
    if (!dataset_out.empty()) write_dataset_csv(dataset_out, dataset, cfg.serialize());

    TrainResult res = train(dataset, tc, world, arch, sched,
                            cfg.get_double("model", "table_init", 0.7));
    save_checkpoint(out, res.model, res.tables, sched, cfg.serialize());
    write_loss_csv(out + ".loss.csv", res.stats.curve, cfg.serialize());
    std::fprintf(stderr, "train: %d steps, L_d %.4f -> %.4f (domain %lld / general %lld / phi %lld)\n",
                 tc.steps, res.stats.initial_loss, res.stats.final_loss,
                 static_cast<long long>(res.stats.domain_draws),
                 static_cast<long long>(res.stats.general_draws),
                 static_cast<long long>(res.stats.dropout_draws));
    std::printf("checkpoint %s\n", out.c_str());
    return 0;
}

int cmd_invert(const std::string& config_path, const std::string& ckpt_path,
               const std::string& out, std::optional<std::uint64_t> seed,
               std::optional<int> steps, std::optional<int> subject) {
    Config cfg = load_config(config_path);
    if (seed) cfg.set("invert", "seed", std::to_string(*seed));
    if (steps) cfg.set("invert", "steps", std::to_string(*steps));
    if (subject) cfg.set("invert", "subject", std::to_string(*subject));
    const WorldSpec world = world_from_config(cfg);
    Checkpoint ck = load_checkpoint(ckpt_path);
    const InvertConfig ic = invert_config_from(cfg);

    const int subject_id = cfg.get_int("invert", "subject", 0);
    const int ref_style = cfg.get_int("invert", "reference_style", 0);
    const int n_refs = cfg.get_int("invert", "num_references", 8);
    Rng ref_rng(cfg.get_u64("invert", "reference_seed", 4242));
    std::vector<LabeledPoint> refs(n_refs);
    for (auto& p : refs) {
        p.subject_id = subject_id;
        p.style_id = ref_style;
        p.domain_tag = DomainTag::DomainSpecific;
        p.x = draw_point(world, subject_id, ref_style, ref_rng);
    }

    std::vector<LossRow> trace;
    SubjectEmbedding s = invert_subject(ck.model, ck.tables, ck.sched, refs, ic, &trace);
    save_subject(out, s, cfg.serialize());
    write_loss_csv(out + ".loss.csv", trace, cfg.serialize());
    std::fprintf(stderr, "invert: subject %d, %d steps, |s| = %.4f\n", subject_id, ic.steps,
                 s.norm());
    std::printf("subject %s\n", out.c_str());
    return 0;
}

int cmd_encode(const std::string& config_path, const std::string& ckpt_path,
               const std::string& out_dir, std::optional<std::uint64_t> seed,
               std::optional<int> subject) {
    Config cfg = load_config(config_path);
    if (seed) cfg.set("encoder", "seed", std::to_string(*seed));
    const WorldSpec world = world_from_config(cfg);
    Checkpoint ck = load_checkpoint(ckpt_path);
    const EncoderTrainConfig ec = encoder_config_from(cfg);
    Rng rng(world.seed);
    const auto dataset = generate_dataset(cfg, world, rng);

    fs::create_directories(out_dir);
    EncoderTrainResult res = train_subject_encoder(ck.model, ck.tables, ck.sched, dataset, ec);
    save_checkpoint(out_dir + "/encoder_model.ckpt", ck.model, ck.tables, ck.sched,
                    cfg.serialize(), &res.encoder);
    write_loss_csv(out_dir + "/encoder_loss.csv", res.stats.curve, cfg.serialize());

    const int subject_id = subject.value_or(cfg.get_int("invert", "subject", 0));
    const int ref_style = cfg.get_int("invert", "reference_style", 0);
    Rng ref_rng(cfg.get_u64("invert", "reference_seed", 4242));
    const Point2 ref = draw_point(world, subject_id, ref_style, ref_rng);
    SubjectEmbedding s;
    s.provenance = SubjectProvenance::Encoded;
    s.subject_id = subject_id;
    s.s = res.encoder.encode(std::vector<double>{ref[0], ref[1]});
    save_subject(out_dir + "/subject_encoded.bin", s, cfg.serialize());
    std::fprintf(stderr, "encode: %d steps, L_d %.4f -> %.4f, |s| = %.4f\n", ec.steps,
                 res.stats.initial_loss, res.stats.final_loss, s.norm());
    std::printf("encoder %s/encoder_model.ckpt\nsubject %s/subject_encoded.bin\n", out_dir.c_str(),
                out_dir.c_str());
    return 0;
}

struct SampleSetup {
    Checkpoint ck;
    WorldSpec world;
    SubjectSource source;
    Condition c;
    std::optional<Condition> c0;
    GuidanceSpec spec;
    SamplerConfig scfg;
    int style = 1;
};

SampleSetup sample_setup(Config& cfg, const std::string& ckpt_path) {
    SampleSetup s{load_checkpoint(ckpt_path), world_from_config(cfg), {}, {}, std::nullopt,
                  {}, {}, 1};
    s.spec = guidance_from_config(cfg);
    s.scfg = sampler_config_from(cfg);
    s.style = cfg.get_int("sample", "style", 1);
    s.source = parse_subject_source(cfg.require_str("sample", "subject"));
    s.c = build_condition(s.style, s.source);
    if (s.spec.mode == GuidanceMode::Dcfg) {
        const std::string agn = cfg.get_str("sample", "agnostic", "zero");
        if (agn == "zero") {
            if (s.source.kind == SubjectSource::Kind::Token)
                throw config_error(
                    "agnostic=zero requires a separate-embedding subject (use separate:<path>)");
            s.c0 = build_agnostic(s.c, AgnosticFlavor::SeparateZero, 0);
        } else if (agn.rfind("generic:", 0) == 0) {
            const int cls = std::stoi(agn.substr(8));
            s.c0 = build_agnostic(s.c, AgnosticFlavor::TokenGeneric, cls);
        } else {
            throw config_error("bad agnostic spec (zero | generic:<id>): " + agn);
        }
    }
    return s;
}

int cmd_sample(const std::string& config_path, const std::string& ckpt_path,
               const std::string& out_dir, const GuidanceOverrides& ov) {
    Config cfg = load_config(config_path);
    ov.apply(cfg);
    SampleSetup s = sample_setup(cfg, ckpt_path);
    fs::create_directories(out_dir);

    EvalOutcome eo = run_guided_eval(s.ck.model, s.ck.tables, s.ck.sched, s.world, s.c, s.c0,
                                     s.spec, s.scfg, s.source.subject_id(), s.style);
    write_samples_csv(out_dir + "/samples.csv", eo.result, s.spec, cfg.serialize());
    write_trace_csv(out_dir + "/trace.csv", eo.result.trace, s.ck.sched, cfg.serialize());
    std::printf("samples %s/samples.csv\ntrace %s/trace.csv\n", out_dir.c_str(), out_dir.c_str());
    std::printf("subject_alignment %s\ncontent_alignment %s\n",
                fmt_double(eo.report.subject_alignment).c_str(),
                fmt_double(eo.report.content_alignment).c_str());
    return 0;
}

std::vector<GuidanceSpec> parse_grid(const std::string& text) {
    std::vector<GuidanceSpec> out;
    std::string entry;
    std::istringstream is(text);
    while (std::getline(is, entry, '|')) {
        std::istringstream es(entry);
        std::string tok;
        GuidanceSpec g;
        bool have_mode = false;
        while (es >> tok) {
            if (!have_mode) {
                g.mode = guidance_mode_from_string(tok);
                have_mode = true;
                continue;
            }
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw config_error("bad grid token: " + tok);
            const std::string key = tok.substr(0, eq);
            const double val = std::stod(tok.substr(eq + 1));
            if (key == "w") g.w = val;
            else if (key == "r") g.r = val;
            else if (key == "T") g.T = val;
            else throw config_error("unknown grid key: " + key);
        }
        if (!have_mode) continue;  // empty entry
        g.validate();
        out.push_back(g);
    }
    if (out.empty()) throw config_error("grid is empty");
    return out;
}

int cmd_ablate(const std::string& plan_path, const std::string& out_dir) {
    Config plan = load_config(plan_path);
    plan.check_keys("plan", {"world_config", "checkpoint", "subject", "agnostic", "style",
                             "samples", "seed", "grid"});
    Config wcfg = load_config(plan.require_str("plan", "world_config"));
    const WorldSpec world = world_from_config(wcfg);
    Checkpoint ck = load_checkpoint(plan.require_str("plan", "checkpoint"));
    const auto grid = parse_grid(plan.require_str("plan", "grid"));

    SubjectSource source = parse_subject_source(plan.require_str("plan", "subject"));
    const int style = plan.get_int("plan", "style", 1);
    const int n = plan.get_int("plan", "samples", 500);
    const std::uint64_t seed = plan.get_u64("plan", "seed", 777);
    const std::string agn = plan.get_str("plan", "agnostic", "zero");

    SamplerConfig scfg = sampler_config_from(wcfg);
    scfg.batch = n;
    scfg.seed = seed;
    scfg.record_trace = false;

    const Condition c = build_condition(style, source);
    std::optional<Condition> c0;
    if (agn == "zero") c0 = build_agnostic(c, AgnosticFlavor::SeparateZero, 0);
    else if (agn.rfind("generic:", 0) == 0)
        c0 = build_agnostic(c, AgnosticFlavor::TokenGeneric, std::stoi(agn.substr(8)));
    else throw config_error("bad agnostic spec: " + agn);

    fs::create_directories(out_dir);
    std::vector<AblationRow> rows;
    for (const auto& g : grid) {
        EvalOutcome eo = run_guided_eval(ck.model, ck.tables, ck.sched, world, c,
                                         g.mode == GuidanceMode::Dcfg ? c0 : std::nullopt, g, scfg,
                                         source.subject_id(), style);
        rows.push_back({g, eo.report.subject_alignment, eo.report.content_alignment, n, seed});
        std::fprintf(stderr, "ablate: mode=%s w=%g r=%g T=%g -> subject %.3f content %.3f\n",
                     to_string(g.mode).c_str(), g.w, g.r, g.T, eo.report.subject_alignment,
                     eo.report.content_alignment);
    }
    write_results_csv(out_dir + "/results.csv", rows, plan.serialize());
    write_ablation_plots(out_dir, rows);
    std::printf("results %s/results.csv\n", out_dir.c_str());
    return 0;
}

int cmd_report(const std::string& trace_path) {
    AuditResult r = audit_trace_csv(trace_path);
    std::printf("report: %ld rows, %d chains, max guidance error %s, max schedule error %s\n",
                r.rows_checked, r.chains, fmt_double(r.max_guidance_err).c_str(),
                fmt_double(r.max_schedule_err).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subject-agnostic guidance toy diffusion engine"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, out, dataset_out, dataset_in, trace_path, plan_path;
    GuidanceOverrides ov;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps, subject_id;

    auto* train = app.add_subcommand("train", "train the base model");
    train->add_option("--config", config_path)->required();
    train->add_option("--out", out)->required();
    train->add_option("--dataset-out", dataset_out);
    train->add_option("--dataset-in", dataset_in);
    train->add_option("--seed", seed);
    train->add_option("--steps", steps);

    auto* invert = app.add_subcommand("invert", "optimize a subject token (base frozen)");
    invert->add_option("--config", config_path)->required();
    invert->add_option("--checkpoint", ckpt_path)->required();
    invert->add_option("--out", out)->required();
    invert->add_option("--seed", seed);
    invert->add_option("--steps", steps);
    invert->add_option("--subject", subject_id);

    auto* encode = app.add_subcommand("encode", "train the subject encoder and encode a reference");
    encode->add_option("--config", config_path)->required();
    encode->add_option("--checkpoint", ckpt_path)->required();
    encode->add_option("--out", out)->required();
    encode->add_option("--seed", seed);
    encode->add_option("--subject", subject_id);

    auto* sample = app.add_subcommand("sample", "guided sampling with CFG or DCFG");
    sample->add_option("--config", config_path)->required();
    sample->add_option("--checkpoint", ckpt_path)->required();
    sample->add_option("--out", out)->required();
    sample->add_option("--subject", ov.subject);
    sample->add_option("--agnostic", ov.agnostic);
    sample->add_option("--style", ov.style);
    sample->add_option("--w", ov.w);
    sample->add_option("--r", ov.r);
    sample->add_option("--T", ov.T);
    sample->add_option("--mode", ov.mode);
    sample->add_option("--steps", ov.steps);
    sample->add_option("--n", ov.batch);
    sample->add_option("--seed", ov.seed);

    auto* ablate = app.add_subcommand("ablate", "evaluate a guidance grid without retraining");
    ablate->add_option("--plan", plan_path)->required();
    ablate->add_option("--out", out)->required();

    auto* report = app.add_subcommand("report", "re-verify a trace csv");
    report->add_option("--trace", trace_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train))
            return cmd_train(config_path, out, dataset_out, dataset_in, seed, steps);
        if (app.got_subcommand(invert))
            return cmd_invert(config_path, ckpt_path, out, seed, steps, subject_id);
        if (app.got_subcommand(encode)) return cmd_encode(config_path, ckpt_path, out, seed, subject_id);
        if (app.got_subcommand(sample)) return cmd_sample(config_path, ckpt_path, out, ov);
        if (app.got_subcommand(ablate)) return cmd_ablate(plan_path, out);
        if (app.got_subcommand(report)) return cmd_report(trace_path);
    } catch (const config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const numerical_error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const audit_error& e) {
        std::fprintf(stderr, "audit mismatch: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
