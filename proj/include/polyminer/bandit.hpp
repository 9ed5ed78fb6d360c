#pragma once

// Neural Thompson sampling posterior with a diagonal design matrix:
//   mean(x) = f(x; theta)
//   std(x)  = sqrt(lambda * sum_i g_i(x)^2 / U_ii)
// where U = lambda * I + sum of squared parameter gradients of the played actions.

#include <cmath>
#include <span>
#include <vector>

#include "polyminer/error.hpp"
#include "polyminer/neuralnet.hpp"
#include "polyminer/random.hpp"

namespace polyminer {

class DesignMatrixDiag {
public:
    DesignMatrixDiag() = default;

    DesignMatrixDiag(std::size_t m, double lambda) : lambda_(lambda), diag_(m, lambda), inverse_(m, 1.0 / lambda) {
        if (!(lambda > 0.0)) throw config_error("design matrix regulariser lambda must be positive");
    }

    DesignMatrixDiag(double lambda, std::vector<double> diag) : lambda_(lambda), diag_(std::move(diag)) {
        if (!(lambda > 0.0)) throw config_error("design matrix regulariser lambda must be positive");
        inverse_.resize(diag_.size());
        for (std::size_t i = 0; i < diag_.size(); ++i) {
            if (!(diag_[i] >= lambda_)) throw data_error("design matrix diagonal entry below lambda");
            inverse_[i] = 1.0 / diag_[i];
        }
    }

    std::size_t size() const noexcept { return diag_.size(); }
    double lambda() const noexcept { return lambda_; }
    std::span<const double> diag() const noexcept { return diag_; }
    std::span<const double> inverse_diag() const noexcept { return inverse_; }

    // U += g g^T, diagonal part only.
    void update(std::span<const double> grad) {
        if (grad.size() != diag_.size()) throw dimension_error("update_design gradient", diag_.size(), grad.size());
        for (std::size_t i = 0; i < diag_.size(); ++i) {
            if (grad[i] == 0.0) continue;
            diag_[i] += grad[i] * grad[i];
            inverse_[i] = 1.0 / diag_[i];
        }
    }

    // sqrt(lambda * g^T U^-1 g); no 1/m factor.
    double predictive_std(std::span<const double> grad) const {
        if (grad.size() != diag_.size()) throw dimension_error("predictive_std gradient", diag_.size(), grad.size());
        double q = 0.0;
        for (std::size_t i = 0; i < diag_.size(); ++i) q += grad[i] * grad[i] * inverse_[i];
        return std::sqrt(lambda_ * q);
    }

    friend bool operator==(const DesignMatrixDiag& a, const DesignMatrixDiag& b) {
        return a.lambda_ == b.lambda_ && a.diag_ == b.diag_;
    }

private:
    double lambda_ = 1.0;
    std::vector<double> diag_;
    std::vector<double> inverse_;
};

inline DesignMatrixDiag update_design(DesignMatrixDiag u, std::span<const double> grad) {
    u.update(grad);
    return u;
}

inline double predictive_std(const DesignMatrixDiag& u, std::span<const double> grad) { return u.predictive_std(grad); }

struct PosteriorParams {
    double mean = 0.0;
    double std = 0.0;
    double nu = 1.0;
};

// One draw from N(mean, nu * std).
template <typename Rng>
double sample_value(const PosteriorParams& p, Rng& rng) {
    return normal_draw(rng, p.mean, p.nu * p.std);
}

inline double lower_bound(const PosteriorParams& p, double k) { return p.mean - k * p.std; }

// Evaluates mean and std for one input, reusing caller-owned buffers.
class PosteriorEvaluator {
public:
    PosteriorEvaluator(const NetworkState& net, const DesignMatrixDiag& design, double nu = 1.0)
        : net_(&net), design_(&design), nu_(nu), ws_(net.make_workspace()), grad_(net.param_count(), 0.0) {
        if (design.size() != net.param_count()) throw dimension_error("design matrix vs network", net.param_count(), design.size());
    }

    template <typename Input>
    PosteriorParams operator()(const Input& x) {
        const auto r = net_->gradient_quadratic(x, design_->inverse_diag(), ws_);
        return {r.value, std::sqrt(design_->lambda() * r.quadratic), nu_};
    }

    template <typename Input>
    std::span<const double> gradient(const Input& x) {
        net_->param_gradient(x, std::span<double>{grad_}, ws_);
        return grad_;
    }

private:
    const NetworkState* net_;
    const DesignMatrixDiag* design_;
    double nu_;
    NetworkState::Workspace ws_;
    std::vector<double> grad_;
};

} // namespace polyminer
