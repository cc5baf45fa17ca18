#include "sag/report.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sag/config.hpp"
#include "sag/csv.hpp"
#include "sag/errors.hpp"
#include "sag/guidance.hpp"

namespace sag {

static double to_d(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        double d = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return d;
    } catch (const std::exception&) {
        throw config_error(std::string("trace csv: bad number in column ") + what + ": " + s);
    }
}

AuditResult audit_trace_csv(const std::string& path) {
    CsvFile f = read_csv(path);
    const std::vector<std::string> required = {
        "chain", "k",       "t_norm",  "w",        "r",        "T",
        "mode",  "w_t",     "eps_c_0", "eps_c_1",  "eps_c0_0", "eps_c0_1",
        "eps_null_0", "eps_null_1", "eps_tilde_0", "eps_tilde_1",
        "x_before_0", "x_before_1", "x_after_0", "x_after_1"};
    for (const auto& c : required)
        if (f.col(c) < 0) throw config_error("trace csv: missing column " + c);

    const double tol = 1e-10;
    AuditResult res;
    std::map<int, std::pair<double, double>> last_after;  // chain -> x_after
    std::map<int, int> last_k;
    for (std::size_t ri = 0; ri < f.rows.size(); ++ri) {
        const auto& row = f.rows[ri];
        auto cell = [&](const char* name) -> const std::string& {
            return row[static_cast<std::size_t>(f.col(name))];
        };
        const int chain = static_cast<int>(to_d(cell("chain"), "chain"));
        const int k = static_cast<int>(to_d(cell("k"), "k"));
        const double t = to_d(cell("t_norm"), "t_norm");
        GuidanceSpec spec;
        spec.w = to_d(cell("w"), "w");
        spec.r = to_d(cell("r"), "r");
        spec.T = to_d(cell("T"), "T");
        spec.mode = guidance_mode_from_string(cell("mode"));
        const double w_t = to_d(cell("w_t"), "w_t");
        const double ec[2] = {to_d(cell("eps_c_0"), "eps_c"), to_d(cell("eps_c_1"), "eps_c")};
        const double en[2] = {to_d(cell("eps_null_0"), "eps_null"),
                              to_d(cell("eps_null_1"), "eps_null")};
        const double et[2] = {to_d(cell("eps_tilde_0"), "eps_tilde"),
                              to_d(cell("eps_tilde_1"), "eps_tilde")};

        double ebar[2];
        if (spec.mode == GuidanceMode::Dcfg) {
            const std::string& c00 = cell("eps_c0_0");
            const std::string& c01 = cell("eps_c0_1");
            if (c00.empty() || c01.empty())
                throw config_error("trace csv: dcfg row without eps_c0 at data row " +
                                   std::to_string(ri));
            const double ec0[2] = {to_d(c00, "eps_c0"), to_d(c01, "eps_c0")};
            const double expect_wt = t <= spec.T ? spec.r : -1.0;
            const double werr = std::abs(w_t - expect_wt);
            res.max_schedule_err = std::max(res.max_schedule_err, werr);
            if (werr > tol)
                throw audit_error("trace audit: schedule value mismatch at data row " +
                                  std::to_string(ri));
            for (int j = 0; j < 2; ++j) ebar[j] = (1.0 + w_t) * ec[j] - w_t * ec0[j];
        } else {
            for (int j = 0; j < 2; ++j) ebar[j] = ec[j];
        }
        for (int j = 0; j < 2; ++j) {
            const double expect = (1.0 + spec.w) * ebar[j] - spec.w * en[j];
            const double err = std::abs(expect - et[j]);
            res.max_guidance_err = std::max(res.max_guidance_err, err);
            if (err > tol)
                throw audit_error("trace audit: guidance algebra mismatch at data row " +
                                  std::to_string(ri) + " (err " + fmt_double(err) + ")");
        }

        const double xb[2] = {to_d(cell("x_before_0"), "x_before"),
                              to_d(cell("x_before_1"), "x_before")};
        const double xa[2] = {to_d(cell("x_after_0"), "x_after"),
                              to_d(cell("x_after_1"), "x_after")};
        auto it = last_after.find(chain);
        if (it != last_after.end()) {
            if (!(k < last_k[chain]))
                throw audit_error("trace audit: steps not decreasing within chain " +
                                  std::to_string(chain));
            if (xb[0] != it->second.first || xb[1] != it->second.second)
                throw audit_error("trace audit: chain " + std::to_string(chain) +
                                  " x_before does not match previous x_after at data row " +
                                  std::to_string(ri));
        }
        last_after[chain] = {xa[0], xa[1]};
        last_k[chain] = k;
        ++res.rows_checked;
    }
    res.chains = static_cast<int>(last_after.size());
    if (res.rows_checked == 0) throw config_error("trace csv: no data rows");
    return res;
}

}  // namespace sag
