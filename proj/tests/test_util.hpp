#pragma once

#include "ebal/balance.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace testutil {

using ebal::Index;
using ebal::Matrix;
using ebal::Vector;

struct Instance {
    Matrix source;
    Vector target;
    Vector interior_weights;  // a strictly positive feasible point
};

/// Gaussian source moments and a target that is a strictly positive
/// combination of them, so the exact problem is feasible.
inline Instance random_feasible(std::mt19937_64& rng, Index n0, Index p) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.2, 1.0);
    Instance in;
    in.source.resize(n0, p);
    for (Index i = 0; i < n0; ++i)
        for (Index j = 0; j < p; ++j) in.source(i, j) = nd(rng);
    in.interior_weights.resize(n0);
    for (Index i = 0; i < n0; ++i) in.interior_weights(i) = ud(rng);
    in.interior_weights /= in.interior_weights.sum();
    in.target = in.source.transpose() * in.interior_weights;
    return in;
}

inline ebal::BalanceProblem problem(const Matrix& source, const Vector& target, double ridge = 0.0) {
    ebal::BalanceProblem p;
    p.source_moments = source;
    p.target.values = target;
    p.target.population = ebal::TargetPopulation::Explicit;
    p.ridge = ridge;
    return p;
}

/// Projected gradient ascent on the primal entropy -sum w log w over
/// {w : C'w = target, 1'w = 1}, started from a strictly positive feasible
/// point. Steps are halved until they stay positive and increase entropy.
inline Vector primal_entropy_oracle(const Matrix& source, const Vector& start, long max_iter = 1000000) {
    const Index n = source.rows();
    Matrix A(source.cols() + 1, n);
    A.topRows(source.cols()) = source.transpose();
    A.bottomRows(1).setOnes();
    const Matrix P = Matrix::Identity(n, n) - A.transpose() * (A * A.transpose()).inverse() * A;
    auto entropy = [](const Vector& w) { return -(w.array() * w.array().log()).sum(); };
    Vector w = start;
    double f = entropy(w);
    for (long it = 0; it < max_iter; ++it) {
        const Vector g = P * (-(w.array().log() + 1.0)).matrix();
        if (g.cwiseAbs().maxCoeff() < 1e-13) break;
        double step = w.minCoeff();
        for (int k = 0; k < 80; ++k, step *= 0.5) {
            const Vector trial = w + step * g;
            if (trial.minCoeff() > 0.0) {
                const double ft = entropy(trial);
                if (ft >= f) {
                    w = trial;
                    f = ft;
                    break;
                }
            }
        }
    }
    return w;
}

}  // namespace testutil
