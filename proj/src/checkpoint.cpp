#include "sag/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sag {

static constexpr char kMagic[8] = {'S', 'A', 'G', 'B', 'I', 'N', '0', '1'};
static constexpr std::uint32_t kFormatVersion = 1;

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}
void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

const std::vector<double>& BinFile::segment(const std::string& name) const {
    for (const auto& [n, v] : segments)
        if (n == name) return v;
    throw std::runtime_error("checkpoint: missing segment " + name);
}

bool BinFile::has_segment(const std::string& name) const {
    for (const auto& [n, v] : segments)
        if (n == name) return true;
    return false;
}

void write_bin(const std::string& path, const BinFile& file) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, kFormatVersion);
    put_str(buf, file.kind);
    put_u32(buf, static_cast<std::uint32_t>(file.meta_f.size()));
    for (const auto& [k, v] : file.meta_f) {
        put_str(buf, k);
        put_f64(buf, v);
    }
    put_u32(buf, static_cast<std::uint32_t>(file.meta_u.size()));
    for (const auto& [k, v] : file.meta_u) {
        put_str(buf, k);
        put_u64(buf, v);
    }
    put_u32(buf, static_cast<std::uint32_t>(file.meta_s.size()));
    for (const auto& [k, v] : file.meta_s) {
        put_str(buf, k);
        put_str(buf, v);
    }
    put_u32(buf, static_cast<std::uint32_t>(file.segments.size()));
    std::uint64_t off = 0;
    for (const auto& [name, data] : file.segments) {
        put_str(buf, name);
        put_u64(buf, off);
        put_u64(buf, data.size());
        off += data.size();
    }
    for (const auto& [name, data] : file.segments)
        for (double d : data) put_f64(buf, d);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
}

BinFile read_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a sag binary file: " + path);
    Reader r(buf);
    r.pos = sizeof(kMagic);
    const std::uint32_t ver = r.u32();
    if (ver != kFormatVersion)
        throw std::runtime_error("unsupported format version " + std::to_string(ver));
    BinFile f;
    f.kind = r.str();
    for (std::uint32_t i = 0, n = r.u32(); i < n; ++i) {
        std::string k = r.str();
        f.meta_f[k] = r.f64();
    }
    for (std::uint32_t i = 0, n = r.u32(); i < n; ++i) {
        std::string k = r.str();
        f.meta_u[k] = r.u64();
    }
    for (std::uint32_t i = 0, n = r.u32(); i < n; ++i) {
        std::string k = r.str();
        f.meta_s[k] = r.str();
    }
    struct Entry {
        std::string name;
        std::uint64_t offset, count;
    };
    std::vector<Entry> manifest;
    for (std::uint32_t i = 0, n = r.u32(); i < n; ++i) {
        Entry e;
        e.name = r.str();
        e.offset = r.u64();
        e.count = r.u64();
        manifest.push_back(std::move(e));
    }
    const std::size_t payload_start = r.pos;
    for (const auto& e : manifest) {
        Reader pr(buf);
        pr.pos = payload_start + static_cast<std::size_t>(e.offset) * 8;
        std::vector<double> data(e.count);
        for (auto& d : data) d = pr.f64();
        f.segments.emplace_back(e.name, std::move(data));
    }
    return f;
}

void save_checkpoint(const std::string& path, const Denoiser& model, const EmbeddingTables& tables,
                     const NoiseSchedule& sched, const std::string& config_echo,
                     const SubjectEncoder* encoder) {
    BinFile f;
    f.kind = "checkpoint";
    const auto& a = model.arch();
    f.meta_u["arch.data_dim"] = a.data_dim;
    f.meta_u["arch.content_dim"] = a.content_dim;
    f.meta_u["arch.subject_dim"] = a.subject_dim;
    f.meta_u["arch.time_features"] = a.time_features;
    f.meta_u["arch.hidden_width"] = a.hidden_width;
    f.meta_u["arch.hidden_depth"] = a.hidden_depth;
    f.meta_u["tables.num_styles"] = tables.num_styles;
    f.meta_u["tables.num_generic"] = tables.num_generic;
    f.meta_s["schedule.kind"] = to_string(sched.kind);
    f.meta_u["schedule.num_steps"] = sched.num_steps;
    f.meta_f["schedule.beta_min"] = sched.beta_min;
    f.meta_f["schedule.beta_max"] = sched.beta_max;
    f.meta_s["config"] = config_echo;
    for (const auto& s : model.segments()) {
        auto sp = model.segment(s.name);
        f.segments.emplace_back("denoiser." + s.name, std::vector<double>(sp.begin(), sp.end()));
    }
    f.segments.emplace_back("tables.style", tables.style);
    f.segments.emplace_back("tables.generic", tables.generic);
    if (encoder) {
        f.meta_u["encoder.input_dim"] = encoder->arch().input_dim;
        f.meta_u["encoder.hidden"] = encoder->arch().hidden;
        f.meta_u["encoder.out_dim"] = encoder->arch().out_dim;
        auto sp = encoder->params();
        f.segments.emplace_back("encoder.params", std::vector<double>(sp.begin(), sp.end()));
    }
    write_bin(path, f);
}

Checkpoint load_checkpoint(const std::string& path) {
    BinFile f = read_bin(path);
    if (f.kind != "checkpoint") throw std::runtime_error("not a checkpoint file: " + path);
    auto u = [&](const std::string& k) -> std::uint64_t {
        auto it = f.meta_u.find(k);
        if (it == f.meta_u.end()) throw std::runtime_error("checkpoint: missing metadata " + k);
        return it->second;
    };
    DenoiserArch arch;
    arch.data_dim = static_cast<int>(u("arch.data_dim"));
    arch.content_dim = static_cast<int>(u("arch.content_dim"));
    arch.subject_dim = static_cast<int>(u("arch.subject_dim"));
    arch.time_features = static_cast<int>(u("arch.time_features"));
    arch.hidden_width = static_cast<int>(u("arch.hidden_width"));
    arch.hidden_depth = static_cast<int>(u("arch.hidden_depth"));

    Checkpoint ck{arch,
                  make_schedule(schedule_kind_from_string(f.meta_s.at("schedule.kind")),
                                static_cast<int>(u("schedule.num_steps")),
                                f.meta_f.at("schedule.beta_min"), f.meta_f.at("schedule.beta_max")),
                  Denoiser(arch),
                  {},
                  std::nullopt,
                  f.meta_s.count("config") ? f.meta_s.at("config") : ""};

    for (const auto& s : ck.model.segments()) {
        const auto& data = f.segment("denoiser." + s.name);
        if (data.size() != s.count)
            throw std::runtime_error("checkpoint: segment size mismatch for " + s.name);
        std::copy(data.begin(), data.end(), ck.model.segment(s.name).begin());
    }
    ck.tables.content_dim = arch.content_dim;
    ck.tables.subject_dim = arch.subject_dim;
    ck.tables.num_styles = static_cast<int>(u("tables.num_styles"));
    ck.tables.num_generic = static_cast<int>(u("tables.num_generic"));
    ck.tables.style = f.segment("tables.style");
    ck.tables.generic = f.segment("tables.generic");
    if (ck.tables.style.size() !=
            static_cast<std::size_t>(ck.tables.num_styles) * arch.content_dim ||
        ck.tables.generic.size() !=
            static_cast<std::size_t>(ck.tables.num_generic) * arch.subject_dim)
        throw std::runtime_error("checkpoint: table size mismatch");
    if (f.has_segment("encoder.params")) {
        EncoderArch ea;
        ea.input_dim = static_cast<int>(u("encoder.input_dim"));
        ea.hidden = static_cast<int>(u("encoder.hidden"));
        ea.out_dim = static_cast<int>(u("encoder.out_dim"));
        SubjectEncoder enc(ea);
        const auto& data = f.segment("encoder.params");
        if (data.size() != enc.param_count())
            throw std::runtime_error("checkpoint: encoder size mismatch");
        std::copy(data.begin(), data.end(), enc.params().begin());
        ck.encoder = std::move(enc);
    }
    return ck;
}

void save_subject(const std::string& path, const SubjectEmbedding& subject,
                  const std::string& config_echo) {
    BinFile f;
    f.kind = "subject";
    f.meta_u["subject_id"] = static_cast<std::uint64_t>(subject.subject_id);
    f.meta_s["provenance"] =
        subject.provenance == SubjectProvenance::Inverted ? "inverted" : "encoded";
    f.meta_f["norm"] = subject.norm();
    f.meta_s["config"] = config_echo;
    f.segments.emplace_back("s", subject.s);
    write_bin(path, f);
}

SubjectEmbedding load_subject(const std::string& path) {
    BinFile f = read_bin(path);
    if (f.kind != "subject") throw std::runtime_error("not a subject file: " + path);
    SubjectEmbedding s;
    s.s = f.segment("s");
    s.subject_id = static_cast<int>(f.meta_u.at("subject_id"));
    s.provenance = f.meta_s.at("provenance") == "encoded" ? SubjectProvenance::Encoded
                                                          : SubjectProvenance::Inverted;
    for (double v : s.s)
        if (!std::isfinite(v)) throw std::runtime_error("subject file: non-finite embedding");
    return s;
}

}  // namespace sag
