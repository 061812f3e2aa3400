#include "sicnm/linalg.hpp"

#include <cmath>

#include "sicnm/error.hpp"

namespace sicnm {

Vector LuFactors::solve(const Vector& b) const {
    if (!lu_) throw Error(ErrorCode::InvalidArgument, "solve on an empty factorization");
    if (b.size() != n_) throw Error(ErrorCode::ShapeMismatch, "right-hand side has wrong length");
    if (n_ == 0) return Vector();
    Vector x = lu_->solve(b);
    if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "triangular solve produced non-finite values");
    return x;
}

LuFactors lu_factorize(const SparseMatrix& a, EvalCounters* counters) {
    if (a.rows() != a.cols()) throw Error(ErrorCode::ShapeMismatch, "LU needs a square matrix");
    if (counters) ++counters->lu_facts;
    auto solver = std::make_shared<LuFactors::Solver>();
    LuFactors out;
    out.n_ = a.rows();
    if (a.rows() > 0) {
        for (int k = 0; k < a.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
                if (!std::isfinite(it.value())) throw Error(ErrorCode::NonFinite, "matrix has non-finite entries");
            }
        }
        SparseMatrix compressed = a;
        compressed.makeCompressed();
        solver->analyzePattern(compressed);
        solver->factorize(compressed);
        if (solver->info() != Eigen::Success) {
            throw Error(ErrorCode::Singular, solver->lastErrorMessage());
        }
    }
    out.lu_ = std::move(solver);
    return out;
}

SparseMatrix schur_matrix(double h, double gamma, const SparseMatrix& j21, const SparseMatrix& j22) {
    SparseMatrix s = (h * gamma) * j21 + j22;
    s.makeCompressed();
    return s;
}

StageSystem build_stage_system(double h, double gamma, SparseMatrix j21, SparseMatrix j22,
                               EvalCounters* counters) {
    if (!(h > 0.0) || !(gamma > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "stage system needs h > 0 and gamma > 0");
    }
    if (j21.rows() != j21.cols() || j22.rows() != j22.cols() || j21.rows() != j22.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "stage blocks must be square and of equal size");
    }
    StageSystem sys;
    sys.h = h;
    sys.gamma = gamma;
    sys.schur_lu = lu_factorize(schur_matrix(h, gamma, j21, j22), counters);
    sys.j21 = std::move(j21);
    sys.j22 = std::move(j22);
    return sys;
}

std::pair<Vector, Vector> stage_solve(const StageSystem& sys, const Vector& rhs_top, const Vector& rhs_bot) {
    const Index n = sys.size();
    if (rhs_top.size() != n || rhs_bot.size() != n) {
        throw Error(ErrorCode::ShapeMismatch, "stage right-hand side has wrong length");
    }
    if (!rhs_top.allFinite() || !rhs_bot.allFinite()) {
        throw Error(ErrorCode::NonFinite, "stage right-hand side is not finite");
    }
    const double hg = sys.h * sys.gamma;
    // Eliminating k = rhs_top + hg*l from the lower block row leaves
    //   (hg*j21 + j22) l = -rhs_bot/hg - j21*rhs_top.
    Vector schur_rhs = -rhs_bot / hg - sys.j21 * rhs_top;
    Vector l = sys.schur_lu.solve(schur_rhs);
    Vector k = rhs_top + hg * l;
    return {std::move(k), std::move(l)};
}

}  // namespace sicnm
