#include "sag/guidance.hpp"

#include <stdexcept>

namespace sag {

void GuidanceSpec::validate() const {
    if (!(w >= 0.0)) throw std::invalid_argument("guidance: w must be >= 0");
    if (!(r >= -1.0)) throw std::invalid_argument("guidance: r must be >= -1");
    if (!(T >= 0.0 && T <= 1.0)) throw std::invalid_argument("guidance: T must be in [0,1]");
}

GuidanceMode guidance_mode_from_string(const std::string& s) {
    if (s == "cfg") return GuidanceMode::CfgOnly;
    if (s == "dcfg") return GuidanceMode::Dcfg;
    throw std::invalid_argument("unknown guidance mode: " + s);
}

std::string to_string(GuidanceMode m) { return m == GuidanceMode::CfgOnly ? "cfg" : "dcfg"; }

double weight_at(const GuidanceSpec& spec, double t_norm) {
    spec.validate();
    if (!(t_norm >= 0.0 && t_norm <= 1.0))
        throw std::invalid_argument("weight_at: t_norm outside [0,1]");
    return t_norm <= spec.T ? spec.r : -1.0;
}

static void check_dims(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

std::vector<double> cfg(std::span<const double> eps_c, std::span<const double> eps_null, double w) {
    check_dims(eps_c, eps_null, "cfg");
    std::vector<double> out(eps_c.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_c[i] + w * (eps_c[i] - eps_null[i]);
    return out;
}

std::vector<double> weak_cfg(std::span<const double> eps_c, std::span<const double> eps_c0,
                             double w_t) {
    check_dims(eps_c, eps_c0, "weak_cfg");
    if (!(w_t >= -1.0)) throw std::invalid_argument("weak_cfg: w_t must be >= -1");
    if (w_t == -1.0) return std::vector<double>(eps_c0.begin(), eps_c0.end());
    std::vector<double> out(eps_c.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_c[i] + w_t * (eps_c[i] - eps_c0[i]);
    return out;
}

GuidedPrediction dcfg(std::span<const double> eps_c, std::span<const double> eps_c0,
                      std::span<const double> eps_null, const GuidanceSpec& spec, double t_norm) {
    check_dims(eps_c, eps_c0, "dcfg");
    check_dims(eps_c, eps_null, "dcfg");
    GuidedPrediction p;
    p.w_t = weight_at(spec, t_norm);
    p.eps_c.assign(eps_c.begin(), eps_c.end());
    p.eps_c0 = std::vector<double>(eps_c0.begin(), eps_c0.end());
    p.eps_null.assign(eps_null.begin(), eps_null.end());
    p.eps_bar = weak_cfg(eps_c, eps_c0, p.w_t);
    p.eps_tilde = cfg(p.eps_bar, eps_null, spec.w);
    return p;
}

GuidedPrediction cfg_prediction(std::span<const double> eps_c, std::span<const double> eps_null,
                                const GuidanceSpec& spec, double t_norm) {
    check_dims(eps_c, eps_null, "cfg");
    spec.validate();
    if (!(t_norm >= 0.0 && t_norm <= 1.0))
        throw std::invalid_argument("cfg_prediction: t_norm outside [0,1]");
    GuidedPrediction p;
    p.w_t = 0.0;
    p.eps_c.assign(eps_c.begin(), eps_c.end());
    p.eps_null.assign(eps_null.begin(), eps_null.end());
    p.eps_bar = p.eps_c;
    p.eps_tilde = cfg(eps_c, eps_null, spec.w);
    return p;
}

}  // namespace sag
