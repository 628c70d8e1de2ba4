#pragma once

// Scalar-templated numeric kernels: activations, regression metrics, Huber
// loss, the Adam update, and a central-difference gradient checker.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <stdexcept>
#include <string>

#include "ghicast/error.hpp"

namespace ghicast {

template <std::floating_point Scalar>
struct SeluConstants {
    static constexpr Scalar lambda = Scalar(1.0507009873554805);
    static constexpr Scalar alpha = Scalar(1.6732632423543772);
};

template <std::floating_point Scalar>
Scalar selu(Scalar x) {
    using C = SeluConstants<Scalar>;
    return x > Scalar(0) ? C::lambda * x : C::lambda * C::alpha * std::expm1(x);
}

template <std::floating_point Scalar>
Scalar selu_derivative(Scalar x) {
    using C = SeluConstants<Scalar>;
    return x > Scalar(0) ? C::lambda : C::lambda * C::alpha * std::exp(x);
}

template <std::floating_point Scalar>
Scalar relu(Scalar x) {
    return x > Scalar(0) ? x : Scalar(0);
}

template <std::floating_point Scalar>
Scalar relu_derivative(Scalar x) {
    return x > Scalar(0) ? Scalar(1) : Scalar(0);
}

template <typename Derived>
auto selu(const Eigen::MatrixBase<Derived>& x) {
    using S = typename Derived::Scalar;
    return x.unaryExpr([](S v) { return selu(v); });
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
    using S = typename Derived::Scalar;
    return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
}

namespace detail {

template <typename A, typename B>
void check_metric_inputs(const Eigen::MatrixBase<A>& y, const Eigen::MatrixBase<B>& yhat) {
    if (y.size() != yhat.size()) {
        throw std::invalid_argument("metric inputs differ in length (" + std::to_string(y.size()) + " vs " +
                                    std::to_string(yhat.size()) + ")");
    }
    if (y.size() == 0) {
        throw std::invalid_argument("metric inputs are empty");
    }
}

}  // namespace detail

/// (1/n) sum |y - yhat|
template <typename A, typename B>
typename A::Scalar mae(const Eigen::MatrixBase<A>& y, const Eigen::MatrixBase<B>& yhat) {
    detail::check_metric_inputs(y, yhat);
    return (y.derived().array() - yhat.derived().array()).abs().sum() / static_cast<typename A::Scalar>(y.size());
}

/// sqrt((1/n) sum (y - yhat)^2)
template <typename A, typename B>
typename A::Scalar rmse(const Eigen::MatrixBase<A>& y, const Eigen::MatrixBase<B>& yhat) {
    detail::check_metric_inputs(y, yhat);
    return std::sqrt((y.derived().array() - yhat.derived().array()).square().sum() /
                     static_cast<typename A::Scalar>(y.size()));
}

template <std::floating_point Scalar>
Scalar huber(Scalar r, Scalar delta) {
    if (!(delta > Scalar(0))) {
        throw std::invalid_argument("huber delta must be positive");
    }
    const Scalar a = std::abs(r);
    return a <= delta ? Scalar(0.5) * r * r : delta * (a - Scalar(0.5) * delta);
}

/// d huber / d r
template <std::floating_point Scalar>
Scalar huber_derivative(Scalar r, Scalar delta) {
    if (!(delta > Scalar(0))) {
        throw std::invalid_argument("huber delta must be positive");
    }
    if (std::abs(r) <= delta) {
        return r;
    }
    return r > Scalar(0) ? delta : -delta;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <std::floating_point Scalar>
struct AdamState {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    AdamConfig config;
    long step = 0;
    Vector m;
    Vector v;

    AdamState() = default;
    AdamState(Eigen::Index size, AdamConfig cfg) : config(cfg), m(Vector::Zero(size)), v(Vector::Zero(size)) {}
};

/// One bias-corrected Adam update applied in place.
/// Throws DivergenceError on a non-finite gradient, leaving params and state untouched.
template <std::floating_point Scalar>
void adam_step(Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> params,
               const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& grads, AdamState<Scalar>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: parameter, gradient, and state sizes differ");
    }
    for (Eigen::Index i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw DivergenceError("non-finite gradient at parameter " + std::to_string(i) + " (step " +
                                  std::to_string(state.step + 1) + ")");
        }
    }
    const auto b1 = static_cast<Scalar>(state.config.beta1);
    const auto b2 = static_cast<Scalar>(state.config.beta2);
    const auto lr = static_cast<Scalar>(state.config.learning_rate);
    const auto eps = static_cast<Scalar>(state.config.epsilon);
    ++state.step;
    const Scalar correction1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
    const Scalar correction2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const Scalar g = grads[i];
        state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g * g;
        const Scalar m_hat = state.m[i] / correction1;
        const Scalar v_hat = state.v[i] / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

/// Rescales `grads` in place so its L2 norm is at most `max_norm`; returns the pre-clip norm.
template <typename Derived>
typename Derived::Scalar clip_global_norm(Eigen::MatrixBase<Derived>& grads, typename Derived::Scalar max_norm) {
    const auto norm = grads.norm();
    if (max_norm > 0 && norm > max_norm) {
        grads *= max_norm / norm;
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
    double max_relative_error = 0.0;
    Eigen::Index worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares `analytic` against central differences of `f` coordinate by
/// coordinate; relative error uses max(|a|, |b|, 1e-8) as denominator.
template <typename F>
GradCheckResult grad_check(F&& f, const Eigen::VectorXd& params, const Eigen::VectorXd& analytic, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("grad_check step must be positive");
    }
    if (params.size() != analytic.size()) {
        throw std::invalid_argument("grad_check: analytic gradient size mismatch");
    }
    GradCheckResult result;
    Eigen::VectorXd probe = params;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + h;
        const double up = f(static_cast<const Eigen::VectorXd&>(probe));
        probe[i] = params[i] - h;
        const double down = f(static_cast<const Eigen::VectorXd&>(probe));
        probe[i] = params[i];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::domain_error("grad_check: non-finite function value at coordinate " + std::to_string(i));
        }
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        if (result.worst_index < 0 || rel > result.max_relative_error) {
            result.max_relative_error = rel;
            result.worst_index = i;
            result.worst_analytic = a;
            result.worst_numeric = numeric;
        }
    }
    return result;
}

}  // namespace ghicast
