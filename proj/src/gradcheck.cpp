#include "seqcomp/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "seqcomp/error.hpp"

namespace seqcomp::num {

GradCheckReport grad_check(const std::function<double(const Tensor&)>& f,
                           const std::function<Tensor(const Tensor&)>& analytic_grad,
                           const Tensor& x, double h, double tol) {
    Tensor analytic = analytic_grad(x);
    if (!analytic.same_shape(x))
        throw ShapeError("grad_check: analytic gradient shape " + analytic.shape_str() +
                         " does not match input " + x.shape_str());

    GradCheckReport report;
    Tensor probe = x;
    for (size_t i = 0; i < x.values.size(); ++i) {
        const double orig = probe.values[i];
        probe.values[i] = orig + h;
        const double f_plus = f(probe);
        probe.values[i] = orig - h;
        const double f_minus = f(probe);
        probe.values[i] = orig;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
            throw NumericalError("grad_check: non-finite objective at coordinate " + std::to_string(i));
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double a = analytic.values[i];
        const double abs_err = std::abs(a - numeric);
        const double rel_err = abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
        if (rel_err > report.max_rel_err) {
            report.max_rel_err = rel_err;
            report.worst_index = static_cast<int>(i);
        }
        report.max_abs_err = std::max(report.max_abs_err, abs_err);
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

std::string to_string(const GradCheckReport& r) {
    std::ostringstream os;
    os << (r.pass ? "pass" : "FAIL") << " max_rel_err=" << r.max_rel_err
       << " max_abs_err=" << r.max_abs_err << " worst_index=" << r.worst_index;
    return os.str();
}

}  // namespace seqcomp::num
