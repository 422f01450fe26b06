#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace mimicry {

// Next-token distribution in natural-log space, arbitrary shift. Length |V|.
struct NextTokenDistribution {
    Eigen::ArrayXd logits;

    int size() const { return static_cast<int>(logits.size()); }
};

// Numerically stable softmax.
inline Eigen::ArrayXd softmax(const Eigen::ArrayXd& logits) {
    Eigen::ArrayXd p = (logits - logits.maxCoeff()).exp();
    return p / p.sum();
}

// T > 0: softmax(logits / T). T = 0: greedy one-hot, ties to the smallest id.
inline Eigen::ArrayXd apply_temperature(const NextTokenDistribution& d, double temperature) {
    if (!d.logits.isFinite().all()) throw std::invalid_argument("non-finite logits");
    if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
    if (temperature == 0.0) {
        Eigen::Index arg = 0;
        d.logits.maxCoeff(&arg);  // Eigen returns the first (smallest-index) maximum
        Eigen::ArrayXd p = Eigen::ArrayXd::Zero(d.logits.size());
        p[arg] = 1.0;
        return p;
    }
    return softmax(d.logits / temperature);
}

}  // namespace mimicry
