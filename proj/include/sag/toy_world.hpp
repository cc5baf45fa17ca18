#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sag/rng.hpp"

namespace sag {

using Point2 = std::array<double, 2>;

enum class DomainTag { DomainSpecific, General };

// Synthetic "subject x style" world on the plane.
//
// Subjects are cluster centers evenly spaced on a circle of the given radius.
// Styles render a subject as:
//   0  isotropic blob      N(center, blob_sigma^2 I)
//   1  ring                radius ring_radius, radial thickness ring_sigma
//   2  bar                 a split bar along the subject's outward axis: two
//                          lobes at +-bar_offset with longitudinal sigma
//                          bar_sigma_long and transverse sigma bar_sigma_trans
//                          (the gap keeps styles geometrically separable; the
//                          lobes are symmetric so the style's mean stays at
//                          the subject center)
//
// The first num_domain_subjects subjects form the domain-specific subset, and
// domain-specific data is rendered in style 0 only (the "photos of dogs and
// cats" analog).
struct WorldSpec {
    int num_subjects = 5;
    int num_styles = 3;
    double radius = 4.0;
    double blob_sigma = 0.22;
    double ring_radius = 0.9;
    double ring_sigma = 0.10;
    double bar_offset = 2.0;
    double bar_sigma_long = 0.35;
    double bar_sigma_trans = 0.12;
    int num_domain_subjects = 2;
    double subject_score_lambda = 4.0;  // lambda in exp(-d^2/lambda)
    std::uint64_t seed = 505;

    Point2 center(int subject_id) const;
    Point2 outward_axis(int subject_id) const;

    // Throws unless the spec is sane and every pair of styles is separable at
    // >= min_pairwise_accuracy by the in-world Bayes classifier (estimated by
    // seeded Monte Carlo at validation time).
    void validate(double min_pairwise_accuracy = 0.95) const;
};

struct LabeledPoint {
    Point2 x{};
    int subject_id = 0;
    int style_id = 0;
    DomainTag domain_tag = DomainTag::General;
};

struct AlignmentReport {
    double subject_alignment = 0.0;
    double content_alignment = 0.0;
    int n = 0;
    Point2 centroid{};
    std::vector<int> style_counts;  // per-style classification counts
};

// One draw from the generative law of (subject_id, style_id).
Point2 draw_point(const WorldSpec& spec, int subject_id, int style_id, Rng& rng);

// Density of style `style_id` anchored at subject `subject_id`.
double style_density(const WorldSpec& spec, int subject_id, int style_id, const Point2& x);

// Index of the center nearest to x.
int nearest_subject(const WorldSpec& spec, const Point2& x);

// Maximum-likelihood style label with densities anchored at the nearest center.
int classify_style(const WorldSpec& spec, const Point2& x);

// n_domain points from the restricted subject subset (style 0), then
// n_general points uniform over all subjects and styles. Reproducible from
// spec.seed via the passed rng.
std::vector<LabeledPoint> generate_dataset(const WorldSpec& spec, int n_domain, int n_general,
                                           Rng& rng);

// exp(-d^2/lambda) where d is the distance from the sample centroid to the
// subject's center. 1 iff the centroid coincides with the center.
double subject_alignment(std::span<const Point2> samples, int subject_id, const WorldSpec& spec);

// Fraction of samples the closed-form ML style classifier assigns to style_id.
double content_alignment(std::span<const Point2> samples, int style_id, const WorldSpec& spec);

AlignmentReport alignment_report(std::span<const Point2> samples, int subject_id, int style_id,
                                 const WorldSpec& spec);

// Monte-Carlo estimate (seeded, deterministic) of P(classified == style | x ~
// style at subject). Used by spec validation; tests pin it against an
// independent quadrature oracle.
double estimate_style_accuracy(const WorldSpec& spec, int subject_id, int style_id, int n,
                               std::uint64_t seed);

}  // namespace sag
