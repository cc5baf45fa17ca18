#pragma once

#include <string>

namespace sag {

struct AuditResult {
    long rows_checked = 0;
    int chains = 0;
    double max_guidance_err = 0.0;
    double max_schedule_err = 0.0;
};

// Re-verifies a trace CSV row by row: the weight schedule value, the weak-CFG
// and null-CFG algebra (recomputed straight from the stored predictions,
// tolerance 1e-10) and chain consistency (x_after of one step equals x_before
// of the next exactly). Throws audit_error on the first violation and
// config_error on schema problems.
AuditResult audit_trace_csv(const std::string& path);

}  // namespace sag
