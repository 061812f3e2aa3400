#pragma once

#include <memory>
#include <utility>

#include <Eigen/SparseLU>

#include "sicnm/types.hpp"

namespace sicnm {

/// Per-run evaluation tallies. Owned by a single solver run.
struct EvalCounters {
    long g_evals = 0;
    long j_evals = 0;
    long hz_evals = 0;
    long lu_facts = 0;
    long rejected_steps = 0;
    long accepted_steps = 0;
    long checks = 0;  // residual evaluations used only for the stopping test

    bool operator==(const EvalCounters&) const = default;
};

/// Reusable sparse LU factorization (COLAMD ordering, partial pivoting).
/// Immutable once built; copies share the same factors.
class LuFactors {
public:
    using Solver = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;

    LuFactors() = default;

    [[nodiscard]] Index size() const { return n_; }
    [[nodiscard]] bool valid() const { return static_cast<bool>(lu_); }

    /// Throws NonFinite when the result is not finite (near-singular input).
    [[nodiscard]] Vector solve(const Vector& b) const;

private:
    friend LuFactors lu_factorize(const SparseMatrix& a, EvalCounters* counters);
    std::shared_ptr<const Solver> lu_;
    Index n_ = 0;
};

/// Throws Singular when a zero pivot survives pivoting, ShapeMismatch when
/// `a` is not square.
[[nodiscard]] LuFactors lu_factorize(const SparseMatrix& a, EvalCounters* counters = nullptr);

/// Linear system of one Rosenbrock step for the DAE  y' = z, 0 = J z + g:
///   (M - h*gamma*Jt) [k; l] = [a; c],  Jt = [[0, I], [j21, j22]],
/// solved through the Schur block  S = h*gamma*j21 + j22.  Only S is
/// factorized; the 2n x 2n matrix is never formed.
struct StageSystem {
    double h = 0.0;
    double gamma = 0.0;
    SparseMatrix j21;
    SparseMatrix j22;
    LuFactors schur_lu;

    [[nodiscard]] Index size() const { return j22.rows(); }
};

/// Throws Singular (from the Schur factorization), InvalidArgument for
/// non-positive h or gamma, ShapeMismatch for inconsistent blocks.
[[nodiscard]] StageSystem build_stage_system(double h, double gamma, SparseMatrix j21, SparseMatrix j22,
                                             EvalCounters* counters = nullptr);

/// Schur matrix h*gamma*j21 + j22, exposed for tests and diagnostics.
[[nodiscard]] SparseMatrix schur_matrix(double h, double gamma, const SparseMatrix& j21, const SparseMatrix& j22);

/// Returns (k, l) with  k - h*gamma*l = rhs_top  and
/// -h*gamma*(j21*k + j22*l) = rhs_bot.
[[nodiscard]] std::pair<Vector, Vector> stage_solve(const StageSystem& sys, const Vector& rhs_top,
                                                    const Vector& rhs_bot);

}  // namespace sicnm
