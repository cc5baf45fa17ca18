#include "sag/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sag {

SubjectSlot make_learned_token(std::vector<double> embedding) {
    if (embedding.empty()) throw std::invalid_argument("learned token: empty embedding");
    return LearnedToken{std::move(embedding)};
}

SubjectSlot make_separate_embedding(std::vector<double> embedding, int mask) {
    if (embedding.empty()) throw std::invalid_argument("separate embedding: empty embedding");
    if (mask != 0 && mask != 1) throw std::invalid_argument("separate embedding: mask must be 0 or 1");
    if (mask == 0) std::fill(embedding.begin(), embedding.end(), 0.0);
    return SeparateEmbedding{std::move(embedding), mask};
}

std::span<const double> EmbeddingTables::style_row(int id) const {
    if (id < 0 || id >= num_styles) throw std::out_of_range("style id out of range");
    return {style.data() + static_cast<std::size_t>(id) * content_dim,
            static_cast<std::size_t>(content_dim)};
}

std::span<const double> EmbeddingTables::generic_row(int id) const {
    if (id < 0 || id >= num_generic) throw std::out_of_range("generic class id out of range");
    return {generic.data() + static_cast<std::size_t>(id) * subject_dim,
            static_cast<std::size_t>(subject_dim)};
}

std::span<double> EmbeddingTables::style_row(int id) {
    if (id < 0 || id >= num_styles) throw std::out_of_range("style id out of range");
    return {style.data() + static_cast<std::size_t>(id) * content_dim,
            static_cast<std::size_t>(content_dim)};
}

std::span<double> EmbeddingTables::generic_row(int id) {
    if (id < 0 || id >= num_generic) throw std::out_of_range("generic class id out of range");
    return {generic.data() + static_cast<std::size_t>(id) * subject_dim,
            static_cast<std::size_t>(subject_dim)};
}

static bool rows_equal(std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return d2 < 1e-12;
}

void check_tables_distinct(const EmbeddingTables& t) {
    for (int i = 0; i < t.num_styles; ++i)
        for (int j = i + 1; j < t.num_styles; ++j)
            if (rows_equal(t.style_row(i), t.style_row(j)))
                throw std::runtime_error("embedding tables: coinciding style rows");
    for (int i = 0; i < t.num_generic; ++i)
        for (int j = i + 1; j < t.num_generic; ++j)
            if (rows_equal(t.generic_row(i), t.generic_row(j)))
                throw std::runtime_error("embedding tables: coinciding generic rows");
}

EmbeddingTables init_tables(int num_styles, int num_generic, int content_dim, int subject_dim,
                            double init_scale, Rng& rng) {
    if (num_styles < 1 || num_generic < 1 || content_dim < 1 || subject_dim < 1)
        throw std::invalid_argument("init_tables: degenerate dimensions");
    EmbeddingTables t;
    t.content_dim = content_dim;
    t.subject_dim = subject_dim;
    t.num_styles = num_styles;
    t.num_generic = num_generic;
    t.style.resize(static_cast<std::size_t>(num_styles) * content_dim);
    t.generic.resize(static_cast<std::size_t>(num_generic) * subject_dim);
    for (auto& v : t.style) v = init_scale * rng.normal();
    for (auto& v : t.generic) v = init_scale * rng.normal();
    check_tables_distinct(t);
    return t;
}

Condition make_subject_aware(ContentSpec content, SubjectSlot subject) {
    if (!std::holds_alternative<LearnedToken>(subject) &&
        !std::holds_alternative<SeparateEmbedding>(subject))
        throw std::invalid_argument(
            "make_subject_aware: subject must be a learned token or a separate embedding");
    Condition c;
    c.content = content;
    c.subject = std::move(subject);
    return c;
}

Condition make_agnostic_token_flavor(const Condition& c, int generic_class) {
    if (!std::holds_alternative<LearnedToken>(c.subject))
        throw std::invalid_argument("make_agnostic_token_flavor: subject is not a learned token");
    Condition out = c;
    out.subject = GenericDescriptor{generic_class};
    return out;
}

Condition make_agnostic_separate_flavor(const Condition& c) {
    const auto* se = std::get_if<SeparateEmbedding>(&c.subject);
    if (se == nullptr)
        throw std::invalid_argument(
            "make_agnostic_separate_flavor: subject is not a separate embedding");
    Condition out = c;
    out.subject = SeparateEmbedding{std::vector<double>(se->embedding.size(), 0.0), 0};
    return out;
}

Condition null_condition() { return Condition{std::nullopt, NullSubject{}}; }

bool is_null_condition(const Condition& c) {
    return !c.content.has_value() && std::holds_alternative<NullSubject>(c.subject);
}

void embed_into(const Condition& c, const EmbeddingTables& tables, std::span<double> out) {
    const std::size_t dc = static_cast<std::size_t>(tables.content_dim);
    const std::size_t ds = static_cast<std::size_t>(tables.subject_dim);
    if (out.size() != dc + ds) throw std::invalid_argument("embed: output size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    if (c.content.has_value()) {
        auto row = tables.style_row(c.content->style_id);
        std::copy(row.begin(), row.end(), out.begin());
    }
    std::span<double> subj = out.subspan(dc);
    if (const auto* tok = std::get_if<LearnedToken>(&c.subject)) {
        if (tok->embedding.size() != ds)
            throw std::invalid_argument("embed: learned token dimension mismatch");
        std::copy(tok->embedding.begin(), tok->embedding.end(), subj.begin());
    } else if (const auto* se = std::get_if<SeparateEmbedding>(&c.subject)) {
        if (se->embedding.size() != ds)
            throw std::invalid_argument("embed: separate embedding dimension mismatch");
        if (se->mask != 0)
            std::copy(se->embedding.begin(), se->embedding.end(), subj.begin());
    } else if (const auto* gd = std::get_if<GenericDescriptor>(&c.subject)) {
        auto row = tables.generic_row(gd->class_id);
        std::copy(row.begin(), row.end(), subj.begin());
    }
    // NullSubject: zeros already in place
}

std::vector<double> embed(const Condition& c, const EmbeddingTables& tables) {
    std::vector<double> out(static_cast<std::size_t>(tables.content_dim + tables.subject_dim));
    embed_into(c, tables, out);
    return out;
}

}  // namespace sag
