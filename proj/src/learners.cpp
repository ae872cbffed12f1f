#include "cdss/learners.hpp"

#include "cdss/error.hpp"

#include <algorithm>
#include <cmath>

namespace cdss {

namespace {

constexpr double kMinCurvature = 1e-10;

// log(1 + exp(z)) without overflow.
double log1p_exp(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void check_inputs(const Eigen::MatrixXd& x, std::span<const int> y) {
    if (x.rows() == 0) throw NumericError("empty design matrix");
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw NumericError("design matrix and labels disagree in length");
    if (!x.allFinite()) throw NumericError("non-finite value in design matrix");
    for (int v : y)
        if (v != 0 && v != 1) throw NumericError("labels must be 0 or 1");
}

Eigen::VectorXd labels_as_vector(std::span<const int> y) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) v(static_cast<Eigen::Index>(i)) = y[i];
    return v;
}

double objective_from_eta(const Eigen::VectorXd& eta, const Eigen::VectorXd& yv, const Eigen::VectorXd& w,
                          const Penalty& penalty) {
    double nll = 0.0;
    for (Eigen::Index n = 0; n < eta.size(); ++n) nll += log1p_exp(eta(n)) - yv(n) * eta(n);
    nll /= static_cast<double>(eta.size());
    if (penalty.kind == PenaltyKind::l2) return nll + 0.5 * penalty.strength * w.squaredNorm();
    return nll + penalty.strength * w.lpNorm<1>();
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

// Worst violation of the optimality conditions.
double optimality_gap(const Eigen::VectorXd& grad, double grad_b, const Eigen::VectorXd& w, const Penalty& p) {
    double gap = std::abs(grad_b);
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        double v = 0.0;
        if (p.kind == PenaltyKind::l2)
            v = std::abs(grad(j));
        else if (w(j) != 0.0)
            v = std::abs(grad(j) + p.strength * (w(j) > 0 ? 1.0 : -1.0));
        else
            v = std::max(std::abs(grad(j)) - p.strength, 0.0);
        gap = std::max(gap, v);
    }
    return gap;
}

// Newton step for the L2 subproblem: exact minimizer of the local quadratic.
void solve_l2_subproblem(const Eigen::MatrixXd& x, const Eigen::VectorXd& curv, const Eigen::VectorXd& grad,
                         double grad_b, double l2, Eigen::VectorXd& w, double& b) {
    const auto d = x.cols();
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    Eigen::MatrixXd h(d + 1, d + 1);
    const Eigen::MatrixXd wx = curv.asDiagonal() * x;
    h.topLeftCorner(d, d) = inv_n * (x.transpose() * wx);
    h.topLeftCorner(d, d).diagonal().array() += l2;
    const Eigen::VectorXd cross = inv_n * wx.colwise().sum().transpose();
    h.topRightCorner(d, 1) = cross;
    h.bottomLeftCorner(1, d) = cross.transpose();
    h(d, d) = inv_n * curv.sum();
    Eigen::VectorXd g(d + 1);
    g << grad, grad_b;
    // Tiny ridge keeps the factorization defined on separable, unpenalized folds.
    h.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = h.ldlt().solve(-g);
    w += step.head(d);
    b += step(d);
}

// Coordinate descent on the weighted least-squares model of the L1 subproblem,
// cycling the active set between full sweeps.
void solve_l1_subproblem(const Eigen::MatrixXd& x, const Eigen::VectorXd& curv, const Eigen::VectorXd& yv,
                          const Eigen::VectorXd& p, double l1, double inner_tol, Eigen::VectorXd& w,
                         double& b) {
    const auto n_rows = x.rows();
    const auto d = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n_rows);
    // Residual of the working response: z - eta, with z = eta + (y - p)/curv.
    Eigen::VectorXd resid = (yv - p).cwiseQuotient(curv);
    Eigen::VectorXd col_curv(d);
    for (Eigen::Index j = 0; j < d; ++j) col_curv(j) = inv_n * curv.dot(x.col(j).cwiseAbs2());
    const double curv_sum = inv_n * curv.sum();

    auto update = [&](Eigen::Index j) {
        if (col_curv(j) <= 0.0) return 0.0;
        const double old = w(j);
        const double rho = inv_n * x.col(j).dot(curv.cwiseProduct(resid)) + col_curv(j) * old;
        const double fresh = soft_threshold(rho, l1) / col_curv(j);
        if (fresh != old) resid -= (fresh - old) * x.col(j);
        w(j) = fresh;
        return std::abs(fresh - old) * std::sqrt(col_curv(j));
    };
    auto update_intercept = [&] {
        const double delta = inv_n * curv.dot(resid) / curv_sum;
        resid.array() -= delta;
        b += delta;
        return std::abs(delta) * std::sqrt(curv_sum);
    };

    constexpr int kMaxSweeps = 200;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double change = update_intercept();
        for (Eigen::Index j = 0; j < d; ++j) change = std::max(change, update(j));
        if (change < inner_tol) return;
        for (int inner = 0; inner < 20 * kMaxSweeps; ++inner) {
            double active_change = update_intercept();
            for (Eigen::Index j = 0; j < d; ++j)
                if (w(j) != 0.0) active_change = std::max(active_change, update(j));
            if (active_change < inner_tol) break;
        }
    }
}

LinearModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y, const Penalty& penalty,
                         const SolverOptions& options, const LinearModel* warm_start) {
    check_inputs(x, y);
    if (!(penalty.strength >= 0.0) || !std::isfinite(penalty.strength))
        throw NumericError("penalty strength must be finite and non-negative");
    const Eigen::VectorXd yv = labels_as_vector(y);
    const auto d = x.cols();

    LinearModel m;
    m.penalty = penalty;
    if (warm_start && warm_start->weights.size() == d) {
        m.weights = warm_start->weights;
        m.intercept = warm_start->intercept;
    } else {
        m.weights = Eigen::VectorXd::Zero(d);
        const double rate = std::clamp(yv.mean(), 1e-6, 1.0 - 1e-6);
        m.intercept = std::log(rate / (1.0 - rate));
    }

    const double inv_n = 1.0 / static_cast<double>(x.rows());
    Eigen::VectorXd eta = (x * m.weights).array() + m.intercept;
    double f = objective_from_eta(eta, yv, m.weights, penalty);
    m.objective_trace.push_back(f);

    for (m.n_iterations = 0; m.n_iterations < options.max_iter; ++m.n_iterations) {
        Eigen::VectorXd p = eta.unaryExpr(&sigmoid);
        const Eigen::VectorXd err = p - yv;
        Eigen::VectorXd grad = inv_n * (x.transpose() * err);
        if (penalty.kind == PenaltyKind::l2) grad += penalty.strength * m.weights;
        const double grad_b = inv_n * err.sum();
        const double gap = optimality_gap(grad, grad_b, m.weights, penalty);
        if (gap < options.tol) {
            m.converged = true;
            break;
        }

        const Eigen::VectorXd curv = p.cwiseProduct((1.0 - p.array()).matrix()).cwiseMax(kMinCurvature);
        Eigen::VectorXd w_new = m.weights;
        double b_new = m.intercept;
        if (penalty.kind == PenaltyKind::l2)
            solve_l2_subproblem(x, curv, grad, grad_b, penalty.strength, w_new, b_new);
        else
            // Inexact inner solve: accuracy tightens with the outer optimality gap.
            solve_l1_subproblem(x, curv, yv, p, penalty.strength, std::clamp(1e-3 * gap, 1e-13, 1e-6), w_new,
                                b_new);

        // Backtrack along the step until the objective does not increase.
        const Eigen::VectorXd dw = w_new - m.weights;
        const double db = b_new - m.intercept;
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            const Eigen::VectorXd w_try = m.weights + t * dw;
            const double b_try = m.intercept + t * db;
            const Eigen::VectorXd eta_try = (x * w_try).array() + b_try;
            const double f_try = objective_from_eta(eta_try, yv, w_try, penalty);
            if (f_try <= f) {
                accepted = f_try < f || t == 1.0;
                m.weights = w_try;
                m.intercept = b_try;
                eta = eta_try;
                f = f_try;
                break;
            }
        }
        m.objective_trace.push_back(f);
        if (!accepted) {
            // No further decrease is representable; judge convergence on the final point.
            p = eta.unaryExpr(&sigmoid);
            const Eigen::VectorXd e = p - yv;
            Eigen::VectorXd g = inv_n * (x.transpose() * e);
            if (penalty.kind == PenaltyKind::l2) g += penalty.strength * m.weights;
            m.converged = optimality_gap(g, inv_n * e.sum(), m.weights, penalty) < options.tol;
            ++m.n_iterations;
            break;
        }
    }
    if (!m.weights.allFinite() || !std::isfinite(m.intercept)) throw NumericError("logistic fit diverged");
    return m;
}

}  // namespace

std::vector<std::size_t> LinearModel::active_set() const {
    std::vector<std::size_t> out;
    for (Eigen::Index j = 0; j < weights.size(); ++j)
        if (weights(j) != 0.0) out.push_back(static_cast<std::size_t>(j));
    return out;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_objective(const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::VectorXd& w, double b,
                          const Penalty& penalty) {
    check_inputs(x, y);
    const Eigen::VectorXd eta = (x * w).array() + b;
    return objective_from_eta(eta, labels_as_vector(y), w, penalty);
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::VectorXd& w,
                                  double b, double l2_strength) {
    check_inputs(x, y);
    const Eigen::VectorXd eta = (x * w).array() + b;
    const Eigen::VectorXd err = eta.unaryExpr(&sigmoid) - labels_as_vector(y);
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    Eigen::VectorXd g(w.size() + 1);
    g.head(w.size()) = inv_n * (x.transpose() * err) + l2_strength * w;
    g(w.size()) = inv_n * err.sum();
    return g;
}

LinearModel fit_logistic_l2(const Eigen::MatrixXd& x, std::span<const int> y, double l2_strength,
                            const SolverOptions& options) {
    return fit_logistic(x, y, {PenaltyKind::l2, l2_strength}, options, nullptr);
}

LinearModel fit_logistic_l1(const Eigen::MatrixXd& x, std::span<const int> y, double l1_strength,
                            const SolverOptions& options, const LinearModel* warm_start) {
    return fit_logistic(x, y, {PenaltyKind::l1, l1_strength}, options, warm_start);
}

double l1_critical_strength(const Eigen::MatrixXd& x, std::span<const int> y) {
    check_inputs(x, y);
    const Eigen::VectorXd yv = labels_as_vector(y);
    const Eigen::VectorXd centered = yv.array() - yv.mean();
    return (x.transpose() * centered).cwiseAbs().maxCoeff() / static_cast<double>(x.rows());
}

double predict_proba(const LinearModel& model, const Eigen::VectorXd& x) {
    // Kept strictly inside (0,1): sigmoid saturates to 1.0 in double beyond logit ~37.
    constexpr double lo = 0x1.0p-53;
    constexpr double hi = 1.0 - 0x1.0p-53;
    return std::clamp(sigmoid(model.weights.dot(x) + model.intercept), lo, hi);
}

}  // namespace cdss
