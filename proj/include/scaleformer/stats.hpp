#pragma once

#include <span>

namespace scaleformer {

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
    double p_less = 0.5;     // H1: mean(a) < mean(b)
    double p_greater = 0.5;  // H1: mean(a) > mean(b)
    bool degenerate = false; // zero pooled variance with unequal means
};

// Two-sample Student's t-test with pooled variance.
TTestResult t_test(std::span<const double> a, std::span<const double> b);

double sample_mean(std::span<const double> v);
// Bessel-corrected; 0 for fewer than two values.
double sample_stdev(std::span<const double> v);
double sample_median(std::span<const double> v);

}  // namespace scaleformer
