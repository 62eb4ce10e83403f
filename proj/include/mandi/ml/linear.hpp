#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mandi/ml/tree.hpp"

namespace mandi::ml {

/// Per-feature z-scoring fitted on the training rows. Constant features get
/// unit scale so they map to zero.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const Matrix& x, std::span<const std::uint32_t> rows) {
        Standardizer s;
        s.mean.assign(x.cols, 0.0);
        s.scale.assign(x.cols, 1.0);
        if (rows.empty()) return s;
        const double n = static_cast<double>(rows.size());
        for (auto r : rows)
            for (std::size_t j = 0; j < x.cols; ++j) s.mean[j] += x(r, j);
        for (auto& m : s.mean) m /= n;
        std::vector<double> var(x.cols, 0.0);
        for (auto r : rows)
            for (std::size_t j = 0; j < x.cols; ++j) {
                const double d = x(r, j) - s.mean[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double sd = std::sqrt(var[j] / n);
            s.scale[j] = sd > 1e-12 ? sd : 1.0;
        }
        return s;
    }

    void apply(std::span<const double> in, std::span<double> out) const {
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
    }

    Matrix transform(const Matrix& x, std::span<const std::uint32_t> rows) const {
        Matrix out(rows.size(), x.cols);
        for (std::size_t i = 0; i < rows.size(); ++i) apply(x.row(rows[i]), out.row(i));
        return out;
    }

    friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

inline Distribution softmax(const Distribution& z) {
    const double m = std::max({z[0], z[1], z[2]});
    Distribution p{std::exp(z[0] - m), std::exp(z[1] - m), std::exp(z[2] - m)};
    const double s = p[0] + p[1] + p[2];
    for (auto& v : p) v /= s;
    return p;
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

/// Parameters are packed class-major: [W_up (F), W_down (F), W_stay (F), b (3)].
struct LogRegProblem {
    const Matrix& x;  // standardized rows
    std::span<const std::uint8_t> labels;
    std::span<const double> weights;
    double l2 = 1e-4;

    std::size_t dim() const { return kNumClasses * x.cols + kNumClasses; }

    Distribution logits(std::span<const double> theta, std::size_t i) const {
        const std::size_t F = x.cols;
        Distribution z{};
        const auto row = x.row(i);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            double s = theta[kNumClasses * F + c];
            const double* w = theta.data() + c * F;
            for (std::size_t j = 0; j < F; ++j) s += w[j] * row[j];
            z[c] = s;
        }
        return z;
    }

    /// Weighted mean cross-entropy plus (l2/2)*||W||^2 (biases unpenalised).
    double objective(std::span<const double> theta) const {
        double total_w = 0.0, loss = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) {
            const auto z = logits(theta, i);
            const double m = std::max({z[0], z[1], z[2]});
            const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m) + std::exp(z[2] - m));
            loss += weights[i] * (lse - z[labels[i]]);
            total_w += weights[i];
        }
        double reg = 0.0;
        for (std::size_t k = 0; k < kNumClasses * x.cols; ++k) reg += theta[k] * theta[k];
        return loss / total_w + 0.5 * l2 * reg;
    }

    void gradient(std::span<const double> theta, std::span<double> grad) const {
        const std::size_t F = x.cols;
        std::fill(grad.begin(), grad.end(), 0.0);
        double total_w = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) total_w += weights[i];
        for (std::size_t i = 0; i < x.rows; ++i) {
            const auto p = softmax(logits(theta, i));
            const auto row = x.row(i);
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                const double r = weights[i] * (p[c] - (labels[i] == c ? 1.0 : 0.0)) / total_w;
                double* g = grad.data() + c * F;
                for (std::size_t j = 0; j < F; ++j) g[j] += r * row[j];
                grad[kNumClasses * F + c] += r;
            }
        }
        for (std::size_t k = 0; k < kNumClasses * F; ++k) grad[k] += l2 * theta[k];
    }
};

struct LogRegModel {
    Standardizer standardizer;
    std::vector<double> theta;  // packed as in LogRegProblem
    std::vector<double> objective_history;

    Distribution decision(std::span<const double> features) const {
        const std::size_t F = standardizer.mean.size();
        Distribution z{};
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            double s = theta[kNumClasses * F + c];
            for (std::size_t j = 0; j < F; ++j)
                s += theta[c * F + j] * (features[j] - standardizer.mean[j]) / standardizer.scale[j];
            z[c] = s;
        }
        return z;
    }
    Distribution scores(std::span<const double> features) const { return softmax(decision(features)); }
};

/// Full-batch gradient descent with Armijo backtracking; deterministic.
inline LogRegModel fit_logreg(const Matrix& x, std::span<const std::uint8_t> labels, std::span<const double> weights,
                              std::span<const std::uint32_t> rows, double l2, std::size_t epochs) {
    LogRegModel model;
    model.standardizer = Standardizer::fit(x, rows);
    const Matrix xs = model.standardizer.transform(x, rows);
    std::vector<std::uint8_t> y(rows.size());
    std::vector<double> w(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y[i] = labels[rows[i]];
        w[i] = weights[rows[i]];
    }
    const LogRegProblem problem{xs, y, w, l2};
    model.theta.assign(problem.dim(), 0.0);
    std::vector<double> grad(problem.dim()), trial(problem.dim());
    double f = problem.objective(model.theta);
    model.objective_history.push_back(f);
    double step = 1.0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        problem.gradient(model.theta, grad);
        double gg = 0.0;
        for (double g : grad) gg += g * g;
        if (gg < 1e-20) break;
        bool accepted = false;
        while (step > 1e-12) {
            for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = model.theta[k] - step * grad[k];
            const double ft = problem.objective(trial);
            if (ft <= f - 0.5 * step * gg) {
                model.theta.swap(trial);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        model.objective_history.push_back(f);
        step = std::min(step * 2.0, 1e3);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Linear SVM, one-vs-rest
// ---------------------------------------------------------------------------

struct LinearSvmModel {
    Standardizer standardizer;
    std::vector<double> w;  // class-major, kNumClasses x F
    Distribution bias{};

    Distribution margins(std::span<const double> features) const {
        const std::size_t F = standardizer.mean.size();
        Distribution z = bias;
        for (std::size_t j = 0; j < F; ++j) {
            const double v = (features[j] - standardizer.mean[j]) / standardizer.scale[j];
            for (std::size_t c = 0; c < kNumClasses; ++c) z[c] += w[c * F + j] * v;
        }
        return z;
    }
    Distribution scores(std::span<const double> features) const { return softmax(margins(features)); }
};

/// Weighted hinge loss with L2, one binary problem per class, trained by
/// epoch-ordered subgradient steps with step 1/(l2 * (t + t0)).
inline LinearSvmModel fit_linear_svm(const Matrix& x, std::span<const std::uint8_t> labels,
                                     std::span<const double> weights, std::span<const std::uint32_t> rows, double l2,
                                     std::size_t epochs) {
    LinearSvmModel model;
    model.standardizer = Standardizer::fit(x, rows);
    const Matrix xs = model.standardizer.transform(x, rows);
    const std::size_t F = x.cols;
    const std::size_t n = rows.size();
    model.w.assign(kNumClasses * F, 0.0);
    double total_w = 0.0;
    for (auto r : rows) total_w += weights[r];
    const double t0 = 1.0 / (l2 * 0.1);  // initial step of 0.1
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double* wc = model.w.data() + c * F;
        double& b = model.bias[c];
        double t = 0.0;
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            for (std::size_t i = 0; i < n; ++i) {
                const double eta = 1.0 / (l2 * (t + t0));
                t += 1.0;
                const auto row = xs.row(i);
                const double y = labels[rows[i]] == c ? 1.0 : -1.0;
                double m = b;
                for (std::size_t j = 0; j < F; ++j) m += wc[j] * row[j];
                const double shrink = 1.0 - eta * l2;
                for (std::size_t j = 0; j < F; ++j) wc[j] *= shrink;
                if (y * m < 1.0) {
                    const double step = eta * weights[rows[i]] * static_cast<double>(n) / total_w * y;
                    for (std::size_t j = 0; j < F; ++j) wc[j] += step * row[j];
                    b += step;
                }
            }
        }
    }
    return model;
}

}  // namespace mandi::ml
