#pragma once

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "sag/rng.hpp"

namespace sag {

// The subject slot of a condition. Four variants:
//  - LearnedToken: an optimized pseudo-token embedding (textual-inversion style)
//  - SeparateEmbedding: an independent subject embedding plus an attention
//    mask bit; mask == 0 requires a zero embedding
//  - GenericDescriptor: a row of the learned generic-class table ("a dog")
//  - NullSubject: no subject information at all
struct LearnedToken {
    std::vector<double> embedding;
};
struct SeparateEmbedding {
    std::vector<double> embedding;
    int mask = 1;
};
struct GenericDescriptor {
    int class_id = 0;
};
struct NullSubject {};

using SubjectSlot = std::variant<LearnedToken, SeparateEmbedding, GenericDescriptor, NullSubject>;

SubjectSlot make_learned_token(std::vector<double> embedding);
// mask == 0 forces the embedding to zero (the two are coupled by construction)
SubjectSlot make_separate_embedding(std::vector<double> embedding, int mask);

// Toy analog of the text prompt minus the subject token: a style class id.
struct ContentSpec {
    int style_id = 0;
};

// The conditioning input c. content == nullopt means "no content" (used by
// the canonical null condition and by subject-only captions).
struct Condition {
    std::optional<ContentSpec> content;
    SubjectSlot subject = NullSubject{};
};

// Learned lookup tables backing embed(). Immutable after training.
struct EmbeddingTables {
    int content_dim = 0;  // D_c
    int subject_dim = 0;  // D_s
    int num_styles = 0;
    int num_generic = 0;
    std::vector<double> style;    // num_styles x D_c, row-major
    std::vector<double> generic;  // num_generic x D_s, row-major

    std::span<const double> style_row(int id) const;
    std::span<const double> generic_row(int id) const;
    std::span<double> style_row(int id);
    std::span<double> generic_row(int id);
};

// Random rows ~ N(0, init_scale^2); throws if any two rows of a table
// coincide (embed must stay injective on distinct ids).
EmbeddingTables init_tables(int num_styles, int num_generic, int content_dim, int subject_dim,
                            double init_scale, Rng& rng);
void check_tables_distinct(const EmbeddingTables& tables);

// --- condition constructors -------------------------------------------------

// Subject-aware condition c: content plus a LearnedToken or SeparateEmbedding.
Condition make_subject_aware(ContentSpec content, SubjectSlot subject);

// Token flavor of the subject-agnostic condition c0: the learned token is
// replaced by a generic class descriptor. Content is untouched.
Condition make_agnostic_token_flavor(const Condition& c, int generic_class);

// Separate-embedding flavor of c0: subject embedding and mask both zeroed.
// Content is untouched. Idempotent.
Condition make_agnostic_separate_flavor(const Condition& c);

// The canonical null condition phi: no content, no subject. embed(phi) is the
// zero vector.
Condition null_condition();

bool is_null_condition(const Condition& c);

// --- embedding ---------------------------------------------------------------

// Deterministic concatenation [content segment | subject segment], dimension
// D_c + D_s. Null/masked slots contribute zeros.
std::vector<double> embed(const Condition& c, const EmbeddingTables& tables);

// Writes into out (size D_c + D_s); the allocation-free form used by batch kernels.
void embed_into(const Condition& c, const EmbeddingTables& tables, std::span<double> out);

}  // namespace sag
