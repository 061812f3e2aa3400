#pragma once

#include <vector>

#include "sicnm/error.hpp"
#include "sicnm/linalg.hpp"
#include "sicnm/tableau.hpp"

namespace sicnm {

struct SicnmStepResult {
    Vector y1;
    Vector z1;
    Vector err_y;
    Vector err_z;
};

/// Stage blocks of the linearized DAE at one base point:
///   j21 = H(y0) (x) z0 + J(y0),   j22 = J(y0).
struct DaeJacobian {
    SparseMatrix j21;
    SparseMatrix j22;
};

/// One Rosenbrock step on  y' = z, 0 = J(y) z + g(y)  for any `model` with
///   Vector g(const Vector& y) const;
///   SparseMatrix jacobian(const Vector& y) const;
/// `blocks` must be assembled at `y0`.
template <typename Model>
[[nodiscard]] SicnmStepResult rosenbrock_dae_step(const Model& model, const Vector& y0, const Vector& z0,
                                                  const DaeJacobian& blocks, double h, const Tableau& tab,
                                                  EvalCounters* counters = nullptr) {
    const Index n = y0.size();
    if (z0.size() != n || blocks.j22.rows() != n) throw Error(ErrorCode::ShapeMismatch, "DAE state has wrong length");
    const StageSystem sys = build_stage_system(h, tab.gamma, blocks.j21, blocks.j22, counters);
    const int s = tab.s;
    std::vector<Vector> k(static_cast<std::size_t>(s));
    std::vector<Vector> l(static_cast<std::size_t>(s));

    for (int i = 0; i < s; ++i) {
        Vector v = y0;
        Vector w = z0;
        Vector gk = Vector::Zero(n);
        Vector gl = Vector::Zero(n);
        for (int j = 0; j < i; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            if (const double a = tab.alpha(i, j); a != 0.0) {
                v += a * k[sj];
                w += a * l[sj];
            }
            if (const double g = tab.gamma_ij(i, j); g != 0.0) {
                gk += g * k[sj];
                gl += g * l[sj];
            }
        }
        if (counters) ++counters->g_evals;
        const Vector g_v = model.g(v);
        if (counters) ++counters->j_evals;
        const SparseMatrix j_v = model.jacobian(v);

        // [h w; h (J(v) w + g(v))] + h Jt0 sum_j gamma_ij [k_j; l_j]
        const Vector top = h * (w + gl);
        const Vector bot = h * (j_v * w + g_v + blocks.j21 * gk + blocks.j22 * gl);
        auto [ki, li] = stage_solve(sys, top, bot);
        k[static_cast<std::size_t>(i)] = std::move(ki);
        l[static_cast<std::size_t>(i)] = std::move(li);
    }

    SicnmStepResult out{y0, z0, Vector(), Vector()};
    Vector y_hat = y0;
    Vector z_hat = z0;
    for (int i = 0; i < s; ++i) {
        const auto si = static_cast<std::size_t>(i);
        out.y1 += tab.b[i] * k[si];
        out.z1 += tab.b[i] * l[si];
        y_hat += tab.b_hat[i] * k[si];
        z_hat += tab.b_hat[i] * l[si];
    }
    out.err_y = (y_hat - out.y1).cwiseAbs();
    out.err_z = (z_hat - out.z1).cwiseAbs();
    if (!out.y1.allFinite() || !out.z1.allFinite()) throw Error(ErrorCode::NonFinite, "step produced NaN or Inf");
    return out;
}

}  // namespace sicnm
