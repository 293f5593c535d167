#pragma once

// Bounded Nelder-Mead maximization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "jmsim/errors.hpp"

namespace jmsim {

struct NelderMeadOptions {
    std::size_t max_evals = 500;
    double tol_f = 1e-6;  // stop when the simplex spread in f falls below this
    double tol_x = 1e-6;  // or when the simplex collapses below this in every coordinate
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = -std::numeric_limits<double>::infinity();
    std::size_t evals = 0;
};

/// Maximizes f over the box [lo, hi] starting from x0.  Coordinates with
/// lo == hi are held fixed.  Trial points are projected onto the box.  The
/// returned value is never worse than f(x0); evaluations that throw or
/// return NaN count as -inf.
inline NelderMeadResult nelder_mead_max(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x0, std::span<const double> lo,
                                        std::span<const double> hi, std::span<const double> step,
                                        const NelderMeadOptions& opt = {}) {
    const std::size_t dim = x0.size();
    if (lo.size() != dim || hi.size() != dim || step.size() != dim)
        throw ContractViolation("nelder_mead_max: bounds and steps must match the start vector");
    for (std::size_t i = 0; i < dim; ++i) {
        if (!(lo[i] <= hi[i])) throw ContractViolation("nelder_mead_max: empty box");
        x0[i] = std::clamp(x0[i], lo[i], hi[i]);
    }
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < dim; ++i)
        if (hi[i] > lo[i]) free.push_back(i);

    NelderMeadResult res;
    auto eval = [&](const std::vector<double>& x) {
        ++res.evals;
        double v;
        try {
            v = f(x);
        } catch (const Error&) {
            v = -std::numeric_limits<double>::infinity();
        }
        return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    };
    auto project = [&](std::vector<double>& x) {
        for (auto i : free) x[i] = std::clamp(x[i], lo[i], hi[i]);
    };

    res.x = x0;
    res.f = eval(x0);
    const std::size_t m = free.size();
    if (m == 0 || opt.max_evals <= 1) return res;

    // Simplex vertices in full coordinates; values are maximized.
    std::vector<std::vector<double>> pts(m + 1, x0);
    std::vector<double> val(m + 1);
    val[0] = res.f;
    for (std::size_t v = 0; v < m; ++v) {
        const std::size_t i = free[v];
        double s = step[i] != 0.0 ? step[i] : 0.05 * (hi[i] - lo[i]);
        if (x0[i] + s > hi[i]) s = -s;
        pts[v + 1][i] = x0[i] + s;
        project(pts[v + 1]);
        if (pts[v + 1][i] == x0[i]) pts[v + 1][i] = x0[i] + 0.5 * s;
        val[v + 1] = eval(pts[v + 1]);
    }

    std::vector<std::size_t> order(m + 1);
    std::vector<double> centroid(dim), trial(dim), trial2(dim);
    auto blend = [&](const std::vector<double>& a, const std::vector<double>& b, double c, std::vector<double>& out) {
        out = a;
        for (auto i : free) out[i] = a[i] + c * (b[i] - a[i]);
        project(out);
    };

    while (res.evals < opt.max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return val[a] > val[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[m - 1];

        const double spread_f = val[best] - val[worst];
        double spread_x = 0.0;
        for (auto i : free)
            for (std::size_t v = 0; v <= m; ++v) spread_x = std::max(spread_x, std::abs(pts[v][i] - pts[best][i]));
        if (std::isfinite(val[worst]) && spread_f <= opt.tol_f && spread_x <= opt.tol_x) break;
        if (std::isfinite(val[worst]) && spread_f <= opt.tol_f * 1e-3) break;

        centroid = pts[best];
        for (auto i : free) {
            double s = 0.0;
            for (std::size_t v = 0; v <= m; ++v)
                if (v != worst) s += pts[v][i];
            centroid[i] = s / static_cast<double>(m);
        }
        blend(centroid, pts[worst], -1.0, trial);  // reflection
        const double fr = eval(trial);
        if (fr > val[best]) {
            blend(centroid, pts[worst], -2.0, trial2);  // expansion
            const double fe = eval(trial2);
            if (fe > fr) {
                pts[worst] = trial2;
                val[worst] = fe;
            } else {
                pts[worst] = trial;
                val[worst] = fr;
            }
            continue;
        }
        if (fr > val[second]) {
            pts[worst] = trial;
            val[worst] = fr;
            continue;
        }
        // Contraction toward the better of the reflected and worst points.
        const bool outside = fr > val[worst];
        blend(centroid, outside ? trial : pts[worst], 0.5, trial2);
        const double fc = eval(trial2);
        if (fc > std::max(fr, val[worst]) || (outside && fc >= fr)) {
            pts[worst] = trial2;
            val[worst] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for (std::size_t v = 0; v <= m && res.evals < opt.max_evals; ++v) {
            if (v == best) continue;
            blend(pts[best], pts[v], 0.5, trial);
            pts[v] = trial;
            val[v] = eval(pts[v]);
        }
    }
    std::size_t best = 0;
    for (std::size_t v = 1; v <= m; ++v)
        if (val[v] > val[best]) best = v;
    if (val[best] > res.f) {
        res.x = pts[best];
        res.f = val[best];
    }
    return res;
}

}  // namespace jmsim
