#include "sodkit/gradcheck.hpp"

#include <cmath>

#include "sodkit/params.hpp"

namespace sodkit {

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Value>& inputs, double step,
                           long long max_coords, std::uint64_t coord_seed) {
    for (const auto& in : inputs) {
        in->requires_grad = true;
        in->zero_grad();
    }
    auto y = f(inputs);
    if (y->size() != 1) throw DimensionError("grad_check: function must return a scalar");
    backward(y);

    GradCheckReport report;
    Rng pick(coord_seed ^ 0x9e3779b97f4a7c15ULL);
    for (const auto& in : inputs) {
        const long long n = in->size();
        std::vector<long long> coords;
        if (max_coords < 0 || n <= max_coords) {
            coords.resize(static_cast<size_t>(n));
            for (long long i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (long long i = 0; i < max_coords; ++i)
                coords.push_back(static_cast<long long>(pick.uniform() * n));
        }
        in->ensure_grad();
        for (long long c : coords) {
            const double saved = in->data[c];
            in->data[c] = saved + step;
            const double up = f(inputs)->data[0];
            in->data[c] = saved - step;
            const double dn = f(inputs)->data[0];
            in->data[c] = saved;
            const double numeric = (up - dn) / (2.0 * step);
            const double analytic = in->grad[c];
            const double rel =
                std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
            report.max_rel_err = std::max(report.max_rel_err, rel);
            report.coords_checked += 1;
        }
    }
    return report;
}

}  // namespace sodkit
