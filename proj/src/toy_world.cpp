#include "sag/toy_world.hpp"

#include <cmath>
#include <stdexcept>

namespace sag {

Point2 WorldSpec::center(int subject_id) const {
    if (subject_id < 0 || subject_id >= num_subjects)
        throw std::out_of_range("subject id out of range");
    const double a = 2.0 * M_PI * subject_id / num_subjects;
    return {radius * std::cos(a), radius * std::sin(a)};
}

Point2 WorldSpec::outward_axis(int subject_id) const {
    const double a = 2.0 * M_PI * subject_id / num_subjects;
    return {std::cos(a), std::sin(a)};
}

Point2 draw_point(const WorldSpec& spec, int subject_id, int style_id, Rng& rng) {
    const Point2 mu = spec.center(subject_id);
    switch (style_id) {
        case 0:
            return {mu[0] + spec.blob_sigma * rng.normal(), mu[1] + spec.blob_sigma * rng.normal()};
        case 1: {
            const double th = 2.0 * M_PI * rng.uniform();
            const double rr = spec.ring_radius + spec.ring_sigma * rng.normal();
            return {mu[0] + rr * std::cos(th), mu[1] + rr * std::sin(th)};
        }
        case 2: {
            const Point2 ax = spec.outward_axis(subject_id);
            const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
            const double u = sign * spec.bar_offset + spec.bar_sigma_long * rng.normal();
            const double v = spec.bar_sigma_trans * rng.normal();
            return {mu[0] + u * ax[0] - v * ax[1], mu[1] + u * ax[1] + v * ax[0]};
        }
        default:
            throw std::out_of_range("style id out of range");
    }
}

double style_density(const WorldSpec& spec, int subject_id, int style_id, const Point2& x) {
    const Point2 mu = spec.center(subject_id);
    const double dx = x[0] - mu[0], dy = x[1] - mu[1];
    switch (style_id) {
        case 0: {
            const double s2 = spec.blob_sigma * spec.blob_sigma;
            return std::exp(-(dx * dx + dy * dy) / (2.0 * s2)) / (2.0 * M_PI * s2);
        }
        case 1: {
            double r = std::sqrt(dx * dx + dy * dy);
            if (r < 1e-12) r = 1e-12;
            const double z = (r - spec.ring_radius) / spec.ring_sigma;
            const double radial = std::exp(-0.5 * z * z) / (std::sqrt(2.0 * M_PI) * spec.ring_sigma);
            return radial / (2.0 * M_PI * r);
        }
        case 2: {
            const Point2 ax = spec.outward_axis(subject_id);
            const double u = dx * ax[0] + dy * ax[1];
            const double v = -dx * ax[1] + dy * ax[0];
            const double sl = spec.bar_sigma_long, st = spec.bar_sigma_trans;
            auto lobe = [&](double uu) {
                return std::exp(-0.5 * uu * uu / (sl * sl)) / (std::sqrt(2.0 * M_PI) * sl);
            };
            const double along = 0.5 * (lobe(u - spec.bar_offset) + lobe(u + spec.bar_offset));
            const double across = std::exp(-0.5 * v * v / (st * st)) / (std::sqrt(2.0 * M_PI) * st);
            return along * across;
        }
        default:
            throw std::out_of_range("style id out of range");
    }
}

int nearest_subject(const WorldSpec& spec, const Point2& x) {
    int best = 0;
    double best_d2 = 1e300;
    for (int g = 0; g < spec.num_subjects; ++g) {
        const Point2 mu = spec.center(g);
        const double d2 = (x[0] - mu[0]) * (x[0] - mu[0]) + (x[1] - mu[1]) * (x[1] - mu[1]);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = g;
        }
    }
    return best;
}

int classify_style(const WorldSpec& spec, const Point2& x) {
    const int g = nearest_subject(spec, x);
    int best = 0;
    double best_p = -1.0;
    for (int s = 0; s < spec.num_styles; ++s) {
        const double p = style_density(spec, g, s, x);
        if (p > best_p) {
            best_p = p;
            best = s;
        }
    }
    return best;
}

std::vector<LabeledPoint> generate_dataset(const WorldSpec& spec, int n_domain, int n_general,
                                           Rng& rng) {
    if (n_domain < 0 || n_general < 0) throw std::invalid_argument("generate_dataset: negative count");
    if (spec.num_subjects < 1 || spec.num_styles < 1)
        throw std::invalid_argument("generate_dataset: degenerate world");
    if (n_domain > 0 && spec.num_domain_subjects < 1)
        throw std::invalid_argument("generate_dataset: no domain subjects configured");
    std::vector<LabeledPoint> out;
    out.reserve(static_cast<std::size_t>(n_domain) + n_general);
    for (int i = 0; i < n_domain; ++i) {
        LabeledPoint p;
        p.subject_id = static_cast<int>(rng.uniform_int(0, spec.num_domain_subjects - 1));
        p.style_id = 0;
        p.domain_tag = DomainTag::DomainSpecific;
        p.x = draw_point(spec, p.subject_id, p.style_id, rng);
        out.push_back(p);
    }
    for (int i = 0; i < n_general; ++i) {
        LabeledPoint p;
        p.subject_id = static_cast<int>(rng.uniform_int(0, spec.num_subjects - 1));
        p.style_id = static_cast<int>(rng.uniform_int(0, spec.num_styles - 1));
        p.domain_tag = DomainTag::General;
        p.x = draw_point(spec, p.subject_id, p.style_id, rng);
        out.push_back(p);
    }
    return out;
}

double subject_alignment(std::span<const Point2> samples, int subject_id, const WorldSpec& spec) {
    if (samples.empty()) throw std::invalid_argument("subject_alignment: empty input");
    double cx = 0.0, cy = 0.0;
    for (const auto& p : samples) {
        cx += p[0];
        cy += p[1];
    }
    cx /= static_cast<double>(samples.size());
    cy /= static_cast<double>(samples.size());
    const Point2 mu = spec.center(subject_id);
    const double d2 = (cx - mu[0]) * (cx - mu[0]) + (cy - mu[1]) * (cy - mu[1]);
    return std::exp(-d2 / spec.subject_score_lambda);
}

double content_alignment(std::span<const Point2> samples, int style_id, const WorldSpec& spec) {
    if (samples.empty()) throw std::invalid_argument("content_alignment: empty input");
    if (style_id < 0 || style_id >= spec.num_styles)
        throw std::out_of_range("content_alignment: style id out of range");
    std::size_t hits = 0;
    for (const auto& p : samples)
        if (classify_style(spec, p) == style_id) ++hits;
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

AlignmentReport alignment_report(std::span<const Point2> samples, int subject_id, int style_id,
                                 const WorldSpec& spec) {
    AlignmentReport r;
    r.n = static_cast<int>(samples.size());
    r.subject_alignment = subject_alignment(samples, subject_id, spec);
    r.style_counts.assign(spec.num_styles, 0);
    double cx = 0.0, cy = 0.0;
    for (const auto& p : samples) {
        ++r.style_counts[classify_style(spec, p)];
        cx += p[0];
        cy += p[1];
    }
    r.centroid = {cx / r.n, cy / r.n};
    r.content_alignment = static_cast<double>(r.style_counts[style_id]) / r.n;
    return r;
}

double estimate_style_accuracy(const WorldSpec& spec, int subject_id, int style_id, int n,
                               std::uint64_t seed) {
    Rng rng(seed);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const Point2 x = draw_point(spec, subject_id, style_id, rng);
        if (classify_style(spec, x) == style_id) ++hits;
    }
    return static_cast<double>(hits) / n;
}

void WorldSpec::validate(double min_pairwise_accuracy) const {
    if (num_subjects < 1) throw std::invalid_argument("world: need at least one subject");
    if (num_styles < 1 || num_styles > 3) throw std::invalid_argument("world: num_styles in [1,3]");
    if (num_domain_subjects < 0 || num_domain_subjects > num_subjects)
        throw std::invalid_argument("world: bad domain subject count");
    if (!(radius > 0.0 && blob_sigma > 0.0 && ring_radius > 0.0 && ring_sigma > 0.0 &&
          bar_offset > 0.0 && bar_sigma_long > 0.0 && bar_sigma_trans > 0.0 &&
          subject_score_lambda > 0.0))
        throw std::invalid_argument("world: scale parameters must be positive");
    for (int i = 0; i < num_subjects; ++i)
        for (int j = i + 1; j < num_subjects; ++j) {
            const Point2 a = center(i), b = center(j);
            const double d2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
            if (d2 < 1e-12) throw std::invalid_argument("world: coinciding subject centers");
        }
    // Style separability gate: every style must be recovered from its own
    // draws at the required rate (this bounds each pairwise confusion).
    for (int s = 0; s < num_styles; ++s) {
        const double acc = estimate_style_accuracy(*this, 0, s, 4000, seed ^ 0xabcdef12u ^ s);
        if (acc < min_pairwise_accuracy)
            throw std::invalid_argument("world: styles not separable enough (accuracy " +
                                        std::to_string(acc) + " for style " + std::to_string(s) +
                                        ")");
    }
}

}  // namespace sag
