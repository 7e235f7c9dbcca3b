#include "ccnn/grad_check.hpp"

#include <cmath>
#include <sstream>

#include "ccnn/errors.hpp"

namespace ccnn {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "max relative error " << max_rel_err;
    if (!worst_param.empty()) os << " (" << worst_param << ")";
    os << " tol " << tolerance << " -> " << (pass ? "PASS" : "FAIL");
    return os.str();
}

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h, double tol) {
    GradCheckReport report;
    report.tolerance = tol;

    // Analytic pass.
    for (const auto& [name, p] : params) {
        (void)name;
        const_cast<Tensor&>(p).zero_grad();
    }
    GradMap analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = f();
        if (!std::isfinite(loss.item())) {
            throw NumericError("grad_check: loss is not finite (" + std::to_string(loss.item()) + ")");
        }
        tape.backward_into(loss, analytic);
    }

    auto eval = [&f]() {
        const double v = f().item();
        if (!std::isfinite(v)) throw NumericError("grad_check: perturbed loss is not finite");
        return v;
    };

    for (const auto& [name, p] : params) {
        GradCheckParamResult pr;
        pr.name = name;
        const std::vector<double>* ag = analytic.find(p);
        auto& vals = const_cast<Tensor&>(p).values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + h;
            const double up = eval();
            vals[i] = saved - h;
            const double down = eval();
            vals[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = ag ? (*ag)[i] : 0.0;
            // The floor keeps finite-difference noise on near-zero entries
            // from reading as relative error; an absolute mismatch above
            // tol * 1e-4 still registers.
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > pr.max_rel_err) pr.max_rel_err = rel;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = name;
            }
        }
        report.per_param.push_back(std::move(pr));
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace ccnn
