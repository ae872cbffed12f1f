#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace cdss {

enum class PenaltyKind { l2, l1 };

struct Penalty {
    PenaltyKind kind = PenaltyKind::l2;
    double strength = 0.0;
};

struct SolverOptions {
    double tol = 1e-8;  // on the (sub)gradient infinity norm
    int max_iter = 1000;
};

// Linear-logistic model P(y=1|x) = sigmoid(w·x + b).
struct LinearModel {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    Penalty penalty;
    bool converged = false;
    int n_iterations = 0;
    // Objective after each outer iteration, starting with the initial point.
    std::vector<double> objective_trace;

    std::vector<std::size_t> active_set() const;
};

double sigmoid(double z);

// mean NLL + (l2/2)·|w|² + l1·|w|₁; intercept unpenalized.
double logistic_objective(const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::VectorXd& w,
                          double b, const Penalty& penalty);

// Gradient of the smooth part (mean NLL + L2 term). Last entry is d/db.
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::VectorXd& w,
                                  double b, double l2_strength);

LinearModel fit_logistic_l2(const Eigen::MatrixXd& x, std::span<const int> y, double l2_strength,
                            const SolverOptions& options = {});

// `warm_start`, when given, seeds the optimizer (used along a penalty path).
LinearModel fit_logistic_l1(const Eigen::MatrixXd& x, std::span<const int> y, double l1_strength,
                            const SolverOptions& options = {}, const LinearModel* warm_start = nullptr);

// Smallest L1 strength at which every weight is exactly zero.
double l1_critical_strength(const Eigen::MatrixXd& x, std::span<const int> y);

double predict_proba(const LinearModel& model, const Eigen::VectorXd& x);

}  // namespace cdss
