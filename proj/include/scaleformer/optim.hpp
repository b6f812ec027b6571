#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "scaleformer/autodiff.hpp"

namespace scaleformer {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over any number of parameter groups, each with its own
// learning rate. Groups must outlive the optimizer.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    void add_group(ParameterSet& params, double lr);
    void step();
    std::size_t steps() const { return t_; }

private:
    struct Slot {
        Parameter* param;
        double lr;
        std::vector<double> m;
        std::vector<double> v;
    };

    AdamOptions options_;
    std::vector<Slot> slots_;
    std::size_t t_ = 0;
};

// Global L2 norm of the gradients of all given sets.
double grad_norm(const std::vector<ParameterSet*>& sets);
// Rescales all gradients so their global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(const std::vector<ParameterSet*>& sets, double max_norm);

// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

    // Returns true when `value` is a new best.
    bool update(double value);
    bool should_stop() const { return bad_epochs_ >= patience_; }
    double best() const { return best_; }
    std::size_t best_epoch() const { return best_epoch_; }

private:
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t epoch_ = 0;
    std::size_t bad_epochs_ = 0;
};

}  // namespace scaleformer
