#include "scaleformer/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "scaleformer/error.hpp"

namespace scaleformer {

double sample_mean(std::span<const double> v) {
    if (v.empty()) throw DomainError("mean of an empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_stdev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = sample_mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double sample_median(std::span<const double> v) {
    if (v.empty()) throw DomainError("median of an empty sample");
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

TTestResult t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw DomainError("t_test needs at least two values per sample");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = sample_mean(a);
    const double mb = sample_mean(b);
    double ss = 0.0;
    for (double x : a) ss += (x - ma) * (x - ma);
    for (double x : b) ss += (x - mb) * (x - mb);

    TTestResult r;
    r.df = na + nb - 2.0;
    const double pooled = ss / r.df;
    const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    if (se == 0.0) {
        if (ma == mb) return r;
        r.degenerate = true;
        r.t = ma < mb ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        r.p_two_sided = 0.0;
        r.p_less = ma < mb ? 0.0 : 1.0;
        r.p_greater = 1.0 - r.p_less;
        return r;
    }
    r.t = (ma - mb) / se;
    const boost::math::students_t dist(r.df);
    r.p_less = boost::math::cdf(dist, r.t);
    r.p_greater = boost::math::cdf(boost::math::complement(dist, r.t));
    r.p_two_sided = std::min(1.0, 2.0 * std::min(r.p_less, r.p_greater));
    return r;
}

}  // namespace scaleformer
