#include "sag/runner.hpp"

#include "sag/svg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sag {

const char* kVersion = "sag 1.0.0";

WorldSpec world_from_config(const Config& cfg) {
    cfg.check_keys("world", {"num_subjects", "num_styles", "radius", "blob_sigma", "ring_radius",
                             "ring_sigma", "bar_offset", "bar_sigma_long", "bar_sigma_trans",
                             "num_domain_subjects", "subject_score_lambda", "seed"});
    WorldSpec w;
    w.num_subjects = cfg.get_int("world", "num_subjects", w.num_subjects);
    w.num_styles = cfg.get_int("world", "num_styles", w.num_styles);
    w.radius = cfg.get_double("world", "radius", w.radius);
    w.blob_sigma = cfg.get_double("world", "blob_sigma", w.blob_sigma);
    w.ring_radius = cfg.get_double("world", "ring_radius", w.ring_radius);
    w.ring_sigma = cfg.get_double("world", "ring_sigma", w.ring_sigma);
    w.bar_offset = cfg.get_double("world", "bar_offset", w.bar_offset);
    w.bar_sigma_long = cfg.get_double("world", "bar_sigma_long", w.bar_sigma_long);
    w.bar_sigma_trans = cfg.get_double("world", "bar_sigma_trans", w.bar_sigma_trans);
    w.num_domain_subjects = cfg.get_int("world", "num_domain_subjects", w.num_domain_subjects);
    w.subject_score_lambda = cfg.get_double("world", "subject_score_lambda", w.subject_score_lambda);
    w.seed = cfg.get_u64("world", "seed", w.seed);
    return w;
}

DenoiserArch arch_from_config(const Config& cfg) {
    cfg.check_keys("model", {"hidden_width", "hidden_depth", "time_features", "content_dim",
                             "subject_dim", "table_init"});
    DenoiserArch a;
    a.hidden_width = cfg.get_int("model", "hidden_width", a.hidden_width);
    a.hidden_depth = cfg.get_int("model", "hidden_depth", a.hidden_depth);
    a.time_features = cfg.get_int("model", "time_features", a.time_features);
    a.content_dim = cfg.get_int("model", "content_dim", a.content_dim);
    a.subject_dim = cfg.get_int("model", "subject_dim", a.subject_dim);
    return a;
}

NoiseSchedule schedule_from_config(const Config& cfg) {
    cfg.check_keys("schedule", {"kind", "num_steps", "beta_min", "beta_max"});
    return make_schedule(schedule_kind_from_string(cfg.get_str("schedule", "kind", "linear")),
                         cfg.get_int("schedule", "num_steps", 1000),
                         cfg.get_double("schedule", "beta_min", 1e-4),
                         cfg.get_double("schedule", "beta_max", 0.02));
}

TrainConfig train_config_from(const Config& cfg) {
    cfg.check_keys("train", {"steps", "batch_size", "learning_rate", "lr_final", "adam_beta1",
                             "adam_beta2", "adam_eps", "dropout_prob", "mix_ratio",
                             "token_reg_weight", "seed", "log_every"});
    TrainConfig t;
    t.steps = cfg.get_int("train", "steps", t.steps);
    t.batch_size = cfg.get_int("train", "batch_size", t.batch_size);
    t.learning_rate = cfg.get_double("train", "learning_rate", 1e-4);
    t.lr_final = cfg.get_double("train", "lr_final", t.lr_final);
    t.adam.beta1 = cfg.get_double("train", "adam_beta1", t.adam.beta1);
    t.adam.beta2 = cfg.get_double("train", "adam_beta2", t.adam.beta2);
    t.adam.eps = cfg.get_double("train", "adam_eps", t.adam.eps);
    t.dropout_prob = cfg.get_double("train", "dropout_prob", t.dropout_prob);
    t.mix_ratio = cfg.get_double("train", "mix_ratio", t.mix_ratio);
    t.token_reg_weight = cfg.get_double("train", "token_reg_weight", t.token_reg_weight);
    t.seed = cfg.get_u64("train", "seed", t.seed);
    t.log_every = cfg.get_int("train", "log_every", t.log_every);
    return t;
}

InvertConfig invert_config_from(const Config& cfg) {
    cfg.check_keys("invert", {"steps", "learning_rate", "token_reg_weight", "seed", "subject",
                              "num_references", "reference_style", "reference_seed", "log_every"});
    InvertConfig ic;
    ic.steps = cfg.get_int("invert", "steps", ic.steps);
    ic.learning_rate = cfg.get_double("invert", "learning_rate", ic.learning_rate);
    ic.token_reg_weight = cfg.get_double("invert", "token_reg_weight", 1.0);
    ic.seed = cfg.get_u64("invert", "seed", ic.seed);
    ic.log_every = cfg.get_int("invert", "log_every", ic.log_every);
    return ic;
}

EncoderTrainConfig encoder_config_from(const Config& cfg) {
    cfg.check_keys("encoder", {"steps", "batch_size", "learning_rate", "mix_ratio", "dropout_prob",
                               "token_reg_weight", "seed", "log_every"});
    EncoderTrainConfig ec;
    ec.steps = cfg.get_int("encoder", "steps", ec.steps);
    ec.batch_size = cfg.get_int("encoder", "batch_size", ec.batch_size);
    ec.learning_rate = cfg.get_double("encoder", "learning_rate", ec.learning_rate);
    ec.mix_ratio = cfg.get_double("encoder", "mix_ratio", ec.mix_ratio);
    ec.dropout_prob = cfg.get_double("encoder", "dropout_prob", ec.dropout_prob);
    ec.token_reg_weight = cfg.get_double("encoder", "token_reg_weight", ec.token_reg_weight);
    ec.seed = cfg.get_u64("encoder", "seed", ec.seed);
    ec.log_every = cfg.get_int("encoder", "log_every", ec.log_every);
    return ec;
}

SamplerConfig sampler_config_from(const Config& cfg) {
    cfg.check_keys("sample", {"kind", "num_steps", "eta", "x0_clip", "seed", "batch", "style",
                              "w", "r", "T", "mode", "subject", "agnostic"});
    SamplerConfig s;
    s.kind = sampler_kind_from_string(cfg.get_str("sample", "kind", "ddim"));
    s.num_steps = cfg.get_int("sample", "num_steps", s.num_steps);
    s.eta = cfg.get_double("sample", "eta", s.eta);
    s.x0_clip = cfg.get_double("sample", "x0_clip", s.x0_clip);
    s.seed = cfg.get_u64("sample", "seed", s.seed);
    s.batch = cfg.get_int("sample", "batch", s.batch);
    return s;
}

GuidanceSpec guidance_from_config(const Config& cfg) {
    GuidanceSpec g;
    g.w = cfg.get_double("sample", "w", g.w);
    g.r = cfg.get_double("sample", "r", g.r);
    g.T = cfg.get_double("sample", "T", g.T);
    g.mode = guidance_mode_from_string(cfg.get_str("sample", "mode", "cfg"));
    g.validate();
    return g;
}

// --- subject sources ------------------------------------------------------------

int SubjectSource::subject_id() const {
    return kind == Kind::Generic ? generic_id : embedding.subject_id;
}

SubjectSource parse_subject_source(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw config_error("subject spec must be token:<path>, separate:<path> or generic:<id>: " +
                           spec);
    const std::string kind = spec.substr(0, colon);
    const std::string rest = spec.substr(colon + 1);
    SubjectSource s;
    if (kind == "token") {
        s.kind = SubjectSource::Kind::Token;
        s.path = rest;
        s.embedding = load_subject(rest);
    } else if (kind == "separate") {
        s.kind = SubjectSource::Kind::Separate;
        s.path = rest;
        s.embedding = load_subject(rest);
    } else if (kind == "generic") {
        s.kind = SubjectSource::Kind::Generic;
        try {
            s.generic_id = std::stoi(rest);
        } catch (const std::exception&) {
            throw config_error("bad generic class id: " + rest);
        }
    } else {
        throw config_error("unknown subject kind: " + kind);
    }
    return s;
}

Condition build_condition(int style_id, const SubjectSource& source) {
    switch (source.kind) {
        case SubjectSource::Kind::Token:
            return make_subject_aware(ContentSpec{style_id}, make_learned_token(source.embedding.s));
        case SubjectSource::Kind::Separate:
            return make_subject_aware(ContentSpec{style_id},
                                      make_separate_embedding(source.embedding.s, 1));
        case SubjectSource::Kind::Generic: {
            Condition c;
            c.content = ContentSpec{style_id};
            c.subject = GenericDescriptor{source.generic_id};
            return c;
        }
    }
    throw std::logic_error("unreachable");
}

Condition build_agnostic(const Condition& c, AgnosticFlavor flavor, int generic_class) {
    if (flavor == AgnosticFlavor::TokenGeneric) return make_agnostic_token_flavor(c, generic_class);
    return make_agnostic_separate_flavor(c);
}

// --- evaluation -------------------------------------------------------------------

std::vector<Point2> result_points(const SampleResult& r) {
    if (r.data_dim != 2) throw std::invalid_argument("result_points: data_dim != 2");
    std::vector<Point2> pts(r.batch);
    for (int i = 0; i < r.batch; ++i)
        pts[i] = {r.samples[2 * static_cast<std::size_t>(i)],
                  r.samples[2 * static_cast<std::size_t>(i) + 1]};
    return pts;
}

EvalOutcome run_guided_eval(const Denoiser& model, const EmbeddingTables& tables,
                            const NoiseSchedule& sched, const WorldSpec& world, const Condition& c,
                            const std::optional<Condition>& c0, const GuidanceSpec& spec,
                            const SamplerConfig& scfg, int subject_id, int style_id) {
    EvalOutcome out{AlignmentReport{}, sample(model, tables, sched, c, c0, spec, scfg)};
    const auto pts = result_points(out.result);
    out.report = alignment_report(pts, subject_id, style_id, world);
    return out;
}

// --- csv writers --------------------------------------------------------------------

static void common_comments(CsvWriter& w, const std::string& config_echo) {
    w.comment("version", kVersion);
    if (!config_echo.empty()) {
        // embed the resolved config as escaped single-line metadata
        std::string one;
        for (char ch : config_echo) {
            if (ch == '\n') one += "\\n";
            else one += ch;
        }
        w.comment("config", one);
    }
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& curve,
                    const std::string& config_echo) {
    CsvWriter w(path);
    common_comments(w, config_echo);
    w.header({"step", "loss_total", "loss_denoise", "loss_reg"});
    for (const auto& r : curve)
        w.row({std::to_string(r.step), fmt_double(r.loss_total), fmt_double(r.loss_denoise),
               fmt_double(r.loss_reg)});
    w.close();
}

void write_dataset_csv(const std::string& path, const std::vector<LabeledPoint>& data,
                       const std::string& config_echo) {
    CsvWriter w(path);
    common_comments(w, config_echo);
    w.header({"x0", "x1", "subject_id", "style_id", "domain_tag"});
    for (const auto& p : data)
        w.row({fmt_double(p.x[0]), fmt_double(p.x[1]), std::to_string(p.subject_id),
               std::to_string(p.style_id),
               p.domain_tag == DomainTag::DomainSpecific ? "domain_specific" : "general"});
    w.close();
}

std::vector<LabeledPoint> read_dataset_csv(const std::string& path) {
    CsvFile f = read_csv(path);
    for (const char* c : {"x0", "x1", "subject_id", "style_id", "domain_tag"})
        if (f.col(c) < 0) throw config_error(std::string("dataset csv: missing column ") + c);
    std::vector<LabeledPoint> out;
    out.reserve(f.rows.size());
    for (const auto& row : f.rows) {
        LabeledPoint p;
        p.x = {std::stod(row[f.col("x0")]), std::stod(row[f.col("x1")])};
        p.subject_id = std::stoi(row[f.col("subject_id")]);
        p.style_id = std::stoi(row[f.col("style_id")]);
        p.domain_tag = row[f.col("domain_tag")] == "domain_specific" ? DomainTag::DomainSpecific
                                                                     : DomainTag::General;
        out.push_back(p);
    }
    return out;
}

static std::vector<std::string> guidance_cells(const GuidanceSpec& spec) {
    return {fmt_double(spec.w), fmt_double(spec.r), fmt_double(spec.T), to_string(spec.mode)};
}

void write_samples_csv(const std::string& path, const SampleResult& result,
                       const GuidanceSpec& spec, const std::string& config_echo) {
    if (result.data_dim != 2) throw std::invalid_argument("write_samples_csv: data_dim != 2");
    CsvWriter w(path);
    common_comments(w, config_echo);
    w.header({"chain", "w", "r", "T", "mode", "x0", "x1"});
    for (int i = 0; i < result.batch; ++i) {
        auto cells = guidance_cells(spec);
        std::vector<std::string> row;
        row.push_back(std::to_string(i));
        row.insert(row.end(), cells.begin(), cells.end());
        row.push_back(fmt_double(result.samples[2 * static_cast<std::size_t>(i)]));
        row.push_back(fmt_double(result.samples[2 * static_cast<std::size_t>(i) + 1]));
        w.row(row);
    }
    w.close();
}

void write_trace_csv(const std::string& path, const SampleTrace& trace,
                     const NoiseSchedule& sched, const std::string& config_echo) {
    if (trace.data_dim != 2) throw std::invalid_argument("write_trace_csv: data_dim != 2");
    CsvWriter w(path);
    common_comments(w, config_echo);
    w.comment("schedule.kind", to_string(sched.kind));
    w.comment("schedule.num_steps", std::to_string(sched.num_steps));
    w.comment("schedule.beta_min", fmt_double(sched.beta_min));
    w.comment("schedule.beta_max", fmt_double(sched.beta_max));
    w.comment("sampler.kind", to_string(trace.config.kind));
    w.comment("sampler.num_steps", std::to_string(trace.config.num_steps));
    w.comment("sampler.eta", fmt_double(trace.config.eta));
    w.comment("sampler.x0_clip", fmt_double(trace.config.x0_clip));
    w.comment("sampler.seed", std::to_string(trace.config.seed));
    w.comment("sampler.batch", std::to_string(trace.config.batch));
    w.header({"chain", "k", "t_norm", "w", "r", "T", "mode", "w_t",
              "eps_c_0", "eps_c_1", "eps_c0_0", "eps_c0_1", "eps_null_0", "eps_null_1",
              "eps_tilde_0", "eps_tilde_1", "x_before_0", "x_before_1", "x_after_0", "x_after_1"});
    for (const auto& s : trace.steps) {
        std::vector<std::string> row;
        row.push_back(std::to_string(s.chain));
        row.push_back(std::to_string(s.k));
        row.push_back(fmt_double(s.t_norm));
        auto g = guidance_cells(trace.spec);
        row.insert(row.end(), g.begin(), g.end());
        row.push_back(fmt_double(s.w_t));
        row.push_back(fmt_double(s.eps_c[0]));
        row.push_back(fmt_double(s.eps_c[1]));
        if (s.eps_c0.empty()) {
            row.push_back("");
            row.push_back("");
        } else {
            row.push_back(fmt_double(s.eps_c0[0]));
            row.push_back(fmt_double(s.eps_c0[1]));
        }
        row.push_back(fmt_double(s.eps_null[0]));
        row.push_back(fmt_double(s.eps_null[1]));
        row.push_back(fmt_double(s.eps_tilde[0]));
        row.push_back(fmt_double(s.eps_tilde[1]));
        row.push_back(fmt_double(s.x_before[0]));
        row.push_back(fmt_double(s.x_before[1]));
        row.push_back(fmt_double(s.x_after[0]));
        row.push_back(fmt_double(s.x_after[1]));
        w.row(row);
    }
    w.close();
}

void write_results_csv(const std::string& path, const std::vector<AblationRow>& rows,
                       const std::string& config_echo) {
    CsvWriter w(path);
    common_comments(w, config_echo);
    w.header({"w", "r", "T", "mode", "subject_alignment", "content_alignment", "n", "seed"});
    for (const auto& r : rows) {
        auto cells = guidance_cells(r.spec);
        cells.push_back(fmt_double(r.subject_alignment));
        cells.push_back(fmt_double(r.content_alignment));
        cells.push_back(std::to_string(r.n));
        cells.push_back(std::to_string(r.seed));
        w.row(cells);
    }
    w.close();
}

void write_ablation_plots(const std::string& dir, const std::vector<AblationRow>& rows) {
    std::vector<AblationRow> t_rows, r_rows;
    for (const auto& r : rows) {
        if (r.spec.mode != GuidanceMode::Dcfg) continue;
        if (r.spec.r == 0.0) t_rows.push_back(r);
        if (r.spec.T == 0.9) r_rows.push_back(r);
    }
    if (t_rows.size() >= 2) {
        PlotSeries sa{"subject alignment", "#1f77b4", {}};
        PlotSeries ca{"content alignment", "#d62728", {}};
        for (const auto& r : t_rows) {
            sa.points.emplace_back(r.spec.T, r.subject_alignment);
            ca.points.emplace_back(r.spec.T, r.content_alignment);
        }
        write_line_plot_svg(dir + "/alignment_vs_T.svg", "alignment vs cutoff T (r=0)", "T",
                            "alignment", {sa, ca});
    }
    if (r_rows.size() >= 2) {
        PlotSeries sa{"subject alignment", "#1f77b4", {}};
        PlotSeries ca{"content alignment", "#d62728", {}};
        for (const auto& r : r_rows) {
            sa.points.emplace_back(r.spec.r, r.subject_alignment);
            ca.points.emplace_back(r.spec.r, r.content_alignment);
        }
        write_line_plot_svg(dir + "/alignment_vs_r.svg", "alignment vs late weight r (T=0.9)", "r",
                            "alignment", {sa, ca});
    }
}

static std::vector<double> ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rk(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rk[idx[k]] = avg;
        i = j + 1;
    }
    return rk;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length series");
    const auto rx = ranks(x), ry = ranks(y);
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace sag
