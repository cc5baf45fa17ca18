#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sag/conditioning.hpp"
#include "sag/denoiser.hpp"
#include "sag/schedule.hpp"
#include "sag/subject.hpp"

namespace sag {

// Self-describing little-endian binary container:
//   magic "SAGBIN01", u32 format version,
//   kind string, metadata block (string keys; f64 / u64 / string values),
//   segment manifest (name, offset in doubles, count), payload of f64.
// Checkpoints, subject embeddings and encoder bundles all use it. The full
// byte layout is documented in docs/FORMATS.md.
struct BinFile {
    std::string kind;
    std::map<std::string, double> meta_f;
    std::map<std::string, std::uint64_t> meta_u;
    std::map<std::string, std::string> meta_s;
    std::vector<std::pair<std::string, std::vector<double>>> segments;

    const std::vector<double>& segment(const std::string& name) const;
    bool has_segment(const std::string& name) const;
};

void write_bin(const std::string& path, const BinFile& file);
BinFile read_bin(const std::string& path);

struct Checkpoint {
    DenoiserArch arch;
    NoiseSchedule sched;
    Denoiser model;
    EmbeddingTables tables;
    std::optional<SubjectEncoder> encoder;  // present in encoder bundles
    std::string config_echo;                // resolved config text at training time
};

void save_checkpoint(const std::string& path, const Denoiser& model, const EmbeddingTables& tables,
                     const NoiseSchedule& sched, const std::string& config_echo,
                     const SubjectEncoder* encoder = nullptr);
Checkpoint load_checkpoint(const std::string& path);

void save_subject(const std::string& path, const SubjectEmbedding& subject,
                  const std::string& config_echo);
SubjectEmbedding load_subject(const std::string& path);

}  // namespace sag
