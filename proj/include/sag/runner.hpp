#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sag/checkpoint.hpp"
#include "sag/config.hpp"
#include "sag/csv.hpp"
#include "sag/guidance.hpp"
#include "sag/sampler.hpp"
#include "sag/subject.hpp"
#include "sag/toy_world.hpp"
#include "sag/train.hpp"

namespace sag {

extern const char* kVersion;

// --- config -> typed structs --------------------------------------------------

WorldSpec world_from_config(const Config& cfg);
DenoiserArch arch_from_config(const Config& cfg);
NoiseSchedule schedule_from_config(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);
InvertConfig invert_config_from(const Config& cfg);
EncoderTrainConfig encoder_config_from(const Config& cfg);
SamplerConfig sampler_config_from(const Config& cfg);
GuidanceSpec guidance_from_config(const Config& cfg);

// --- subject sources and conditions -------------------------------------------

// Parses "token:<path>", "separate:<path>", "generic:<id>" subject specs.
struct SubjectSource {
    enum class Kind { Token, Separate, Generic } kind = Kind::Generic;
    std::string path;
    int generic_id = 0;
    SubjectEmbedding embedding;  // loaded for token/separate
    int subject_id() const;
};
SubjectSource parse_subject_source(const std::string& spec);

enum class AgnosticFlavor { TokenGeneric, SeparateZero };

// Subject-aware condition for the requested style.
Condition build_condition(int style_id, const SubjectSource& source);
// Matching subject-agnostic condition; generic_class is the replacement class
// for the token flavor.
Condition build_agnostic(const Condition& c, AgnosticFlavor flavor, int generic_class);

// --- evaluation ----------------------------------------------------------------

std::vector<Point2> result_points(const SampleResult& r);

struct EvalOutcome {
    AlignmentReport report;
    SampleResult result;
};

// One guided sampling run plus alignment metrics against (subject, style).
EvalOutcome run_guided_eval(const Denoiser& model, const EmbeddingTables& tables,
                            const NoiseSchedule& sched, const WorldSpec& world, const Condition& c,
                            const std::optional<Condition>& c0, const GuidanceSpec& spec,
                            const SamplerConfig& scfg, int subject_id, int style_id);

// --- file writers ---------------------------------------------------------------

void write_loss_csv(const std::string& path, const std::vector<LossRow>& curve,
                    const std::string& config_echo);
void write_dataset_csv(const std::string& path, const std::vector<LabeledPoint>& data,
                       const std::string& config_echo);
std::vector<LabeledPoint> read_dataset_csv(const std::string& path);
void write_samples_csv(const std::string& path, const SampleResult& result,
                       const GuidanceSpec& spec, const std::string& config_echo);
void write_trace_csv(const std::string& path, const SampleTrace& trace,
                     const NoiseSchedule& sched, const std::string& config_echo);

struct AblationRow {
    GuidanceSpec spec;
    double subject_alignment = 0.0;
    double content_alignment = 0.0;
    int n = 0;
    std::uint64_t seed = 0;
};
void write_results_csv(const std::string& path, const std::vector<AblationRow>& rows,
                       const std::string& config_echo);
void write_ablation_plots(const std::string& dir, const std::vector<AblationRow>& rows);

// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sag
