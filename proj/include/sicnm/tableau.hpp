#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "sicnm/error.hpp"
#include "sicnm/types.hpp"

namespace sicnm {

/// Rosenbrock method in (alpha, gamma_ij) form for  M y' = f(y):
///   (M - h*gamma*J) k_i = h f(y0 + sum_j alpha_ij k_j) + h J sum_j gamma_ij k_j
///   y1 = y0 + sum_i b_i k_i,   y1_hat = y0 + sum_i b_hat_i k_i.
/// `alpha` and `gamma_ij` are strictly lower triangular; the diagonal of the
/// gamma matrix is the scalar `gamma`.
template <typename Scalar>
struct RosenbrockTableau {
    std::string name;
    int s = 0;
    Scalar gamma{0};
    MatrixX<Scalar> alpha;
    MatrixX<Scalar> gamma_ij;
    VectorX<Scalar> b;
    VectorX<Scalar> b_hat;
    int order = 0;
    int embedded_order = 0;

    /// beta_ij = alpha_ij + gamma_ij with gamma on the diagonal.
    [[nodiscard]] MatrixX<Scalar> beta() const {
        MatrixX<Scalar> out = alpha + gamma_ij;
        for (int i = 0; i < s; ++i) out(i, i) = gamma;
        return out;
    }

    template <typename Other>
    [[nodiscard]] RosenbrockTableau<Other> cast() const {
        RosenbrockTableau<Other> out;
        out.name = name;
        out.s = s;
        out.gamma = static_cast<Other>(gamma);
        out.alpha = alpha.template cast<Other>();
        out.gamma_ij = gamma_ij.template cast<Other>();
        out.b = b.template cast<Other>();
        out.b_hat = b_hat.template cast<Other>();
        out.order = order;
        out.embedded_order = embedded_order;
        return out;
    }
};

using Tableau = RosenbrockTableau<double>;

/// Damping parameter of Rodas3d; the upper end of the interval on which the
/// stability function's damping region contains the whole left half-plane.
inline constexpr double kRodas3dGamma = 0.57281606;
/// Free parameters fixing the underdetermined order-condition system.
inline constexpr double kRodas3dAlpha21 = 0.46;
inline constexpr double kRodas3dAlpha31 = 0.24;

/// Solves the 4-stage order-3 stiffly accurate conditions (embedded order 2,
/// embedded weights = last alpha row) in closed form for given gamma and the
/// two free parameters alpha21, alpha31.
template <typename Scalar>
[[nodiscard]] RosenbrockTableau<Scalar> derive_rodas3d(Scalar g, Scalar a21, Scalar a31) {
    const Scalar one(1), two(2), three(3), six(6);
    const Scalar half = one / two;
    // With b4 = gamma and alpha_4 = alpha_3 = 1 the conditions reduce to
    // scalar equations in beta'_2, beta_31, beta_32, b1, b2, b3.
    const Scalar kappa = half - two * g + g * g;  // (1/2 - gamma) - gamma*(1 - gamma)
    const Scalar b3 = (one / six - g + g * g) / kappa - g;
    const Scalar b2 = (one / three - g - b3) / (a21 * a21);
    const Scalar bp2 = (kappa - b3 * (one - g)) / b2;
    const Scalar beta32 = kappa / bp2;
    const Scalar beta31 = one - g - beta32;
    const Scalar b1 = one - g - b2 - b3;

    RosenbrockTableau<Scalar> t;
    t.name = "rodas3d";
    t.s = 4;
    t.gamma = g;
    t.order = 3;
    t.embedded_order = 2;
    t.alpha = MatrixX<Scalar>::Zero(4, 4);
    t.gamma_ij = MatrixX<Scalar>::Zero(4, 4);
    t.alpha(1, 0) = a21;
    t.gamma_ij(1, 0) = bp2 - a21;
    t.alpha(2, 0) = a31;
    t.alpha(2, 1) = one - a31;
    t.gamma_ij(2, 0) = beta31 - a31;
    t.gamma_ij(2, 1) = beta32 - (one - a31);
    t.alpha(3, 0) = beta31;
    t.alpha(3, 1) = beta32;
    t.alpha(3, 2) = g;
    t.gamma_ij(3, 0) = b1 - beta31;
    t.gamma_ij(3, 1) = b2 - beta32;
    t.gamma_ij(3, 2) = b3 - g;
    t.b = VectorX<Scalar>(4);
    t.b << b1, b2, b3, g;
    t.b_hat = VectorX<Scalar>(4);
    t.b_hat << beta31, beta32, g, Scalar(0);
    return t;
}

/// Published transformed coefficients of RODAS (Hairer & Wanner), converted
/// to (alpha, gamma_ij, b) form in the requested precision. The embedded
/// solution is the input of the sixth stage.
template <typename Scalar>
[[nodiscard]] RosenbrockTableau<Scalar> derive_rodas4() {
    using M = MatrixX<Scalar>;
    const Scalar g = Scalar(0.25L);
    M a = M::Zero(6, 6);
    M c = M::Zero(6, 6);
    a(1, 0) = Scalar(1.544000000000000L);
    a(2, 0) = Scalar(0.9466785280815826L);
    a(2, 1) = Scalar(0.2557011698983284L);
    a(3, 0) = Scalar(3.314825187068521L);
    a(3, 1) = Scalar(2.896124015972201L);
    a(3, 2) = Scalar(0.9986419139977817L);
    a(4, 0) = Scalar(1.221224509226641L);
    a(4, 1) = Scalar(6.019134481288629L);
    a(4, 2) = Scalar(12.53708332932087L);
    a(4, 3) = Scalar(-0.6878860361058950L);
    for (int j = 0; j < 4; ++j) a(5, j) = a(4, j);
    a(5, 4) = Scalar(1);
    c(1, 0) = Scalar(-5.668800000000000L);
    c(2, 0) = Scalar(-2.430093356833875L);
    c(2, 1) = Scalar(-0.2063599157091915L);
    c(3, 0) = Scalar(-0.1073529058151375L);
    c(3, 1) = Scalar(-9.594562251023355L);
    c(3, 2) = Scalar(-20.47028614809616L);
    c(4, 0) = Scalar(7.496443313967647L);
    c(4, 1) = Scalar(-10.24680431464352L);
    c(4, 2) = Scalar(-33.99990352819905L);
    c(4, 3) = Scalar(11.70890893206160L);
    c(5, 0) = Scalar(8.083246795921522L);
    c(5, 1) = Scalar(-7.981132988064893L);
    c(5, 2) = Scalar(-31.52159432874371L);
    c(5, 3) = Scalar(16.31930543123136L);
    c(5, 4) = Scalar(-6.058818238834054L);

    // Transformed form: a = alpha * G^{-1}, c = diag(1/gamma) - G^{-1},
    // m = b^T G^{-1} with G the full lower-triangular gamma matrix.
    M g_inv = M::Identity(6, 6) / g - c;
    M big_g = g_inv.template triangularView<Eigen::Lower>().solve(M::Identity(6, 6));
    big_g = big_g.template triangularView<Eigen::Lower>();
    VectorX<Scalar> m(6);
    m << a(4, 0), a(4, 1), a(4, 2), a(4, 3), Scalar(1), Scalar(1);

    RosenbrockTableau<Scalar> t;
    t.name = "rodas4";
    t.s = 6;
    t.gamma = g;
    t.order = 4;
    t.embedded_order = 3;
    t.alpha = (a * big_g).template triangularView<Eigen::StrictlyLower>();
    t.gamma_ij = big_g.template triangularView<Eigen::StrictlyLower>();
    t.b = (m.transpose() * big_g).transpose();
    t.b_hat = VectorX<Scalar>::Zero(6);
    for (int j = 0; j < 5; ++j) t.b_hat[j] = t.alpha(5, j);
    return t;
}

/// Frozen double-precision Rodas3d coefficients (output of derive_rodas3d
/// with the constants above).
[[nodiscard]] Tableau rodas3d();
[[nodiscard]] Tableau rodas4();

/// Looks up "rodas3d" or "rodas4"; throws InvalidArgument otherwise.
[[nodiscard]] Tableau tableau_by_name(const std::string& name);

template <typename Scalar>
struct ConditionResidual {
    std::string label;
    Scalar residual{0};
};

namespace detail {

template <typename Scalar>
void tree_conditions(const RosenbrockTableau<Scalar>& t, const VectorX<Scalar>& w, int order, const std::string& tag,
                     std::vector<ConditionResidual<Scalar>>& out) {
    using std::abs;
    const Scalar g = t.gamma;
    const MatrixX<Scalar> beta_strict = t.alpha + t.gamma_ij;
    const VectorX<Scalar> a = t.alpha.rowwise().sum();       // alpha_i
    const VectorX<Scalar> bp = beta_strict.rowwise().sum();  // beta'_i
    const VectorX<Scalar> a2 = a.cwiseProduct(a);
    const Scalar one(1);
    auto push = [&](const char* label, Scalar lhs, Scalar rhs) {
        out.push_back({tag + ": " + label, abs(lhs - rhs)});
    };
    if (order >= 1) push("sum w = 1", w.sum(), one);
    if (order >= 2) push("sum w beta' = 1/2 - g", w.dot(bp), one / 2 - g);
    if (order >= 3) {
        push("sum w alpha^2 = 1/3", w.dot(a2), one / 3);
        push("sum w beta beta' = 1/6 - g + g^2", w.dot(beta_strict * bp), one / 6 - g + g * g);
    }
    if (order >= 4) {
        push("sum w alpha^3 = 1/4", w.dot(a2.cwiseProduct(a)), one / 4);
        push("sum w alpha (alpha beta') = 1/8 - g/3", w.dot(a.cwiseProduct(t.alpha * bp)), one / 8 - g / 3);
        push("sum w beta alpha^2 = 1/12 - g/3", w.dot(beta_strict * a2), one / 12 - g / 3);
        push("sum w beta beta beta' = 1/24 - g/2 + 3g^2/2 - g^3", w.dot(beta_strict * (beta_strict * bp)),
             one / 24 - g / 2 + Scalar(3) * g * g / 2 - g * g * g);
    }
}

}  // namespace detail

/// Absolute residuals of the Rosenbrock order conditions (rooted trees up to
/// `order` for b, up to `embedded_order` for b_hat), the stage-node
/// conditions of the last two stages and the stiff-accuracy equalities.
/// Throws ShapeMismatch on malformed tableaux, including gamma <= 0.
template <typename Scalar>
[[nodiscard]] std::vector<ConditionResidual<Scalar>> check_order_conditions(const RosenbrockTableau<Scalar>& t) {
    using std::abs;
    const int s = t.s;
    if (s < 2 || !(t.gamma > Scalar(0)) || t.alpha.rows() != s || t.alpha.cols() != s || t.gamma_ij.rows() != s ||
        t.gamma_ij.cols() != s || t.b.size() != s || t.b_hat.size() != s || t.order < 1 || t.order > 4 ||
        t.embedded_order < 1 || t.embedded_order > 4) {
        throw Error(ErrorCode::ShapeMismatch, "tableau '" + t.name + "' has an invalid shape");
    }
    for (int i = 0; i < s; ++i) {
        for (int j = i; j < s; ++j) {
            if (t.alpha(i, j) != Scalar(0) || t.gamma_ij(i, j) != Scalar(0)) {
                throw Error(ErrorCode::ShapeMismatch, "tableau '" + t.name + "' is not strictly lower triangular");
            }
        }
    }

    std::vector<ConditionResidual<Scalar>> out;
    detail::tree_conditions(t, t.b, t.order, "b", out);
    detail::tree_conditions(t, t.b_hat, t.embedded_order, "b_hat", out);

    const MatrixX<Scalar> beta = t.beta();
    out.push_back({"alpha row " + std::to_string(s - 1) + " sums to 1", abs(t.alpha.row(s - 2).sum() - Scalar(1))});
    out.push_back({"alpha row " + std::to_string(s) + " sums to 1", abs(t.alpha.row(s - 1).sum() - Scalar(1))});
    for (int i = 0; i < s; ++i) {
        out.push_back({"b_" + std::to_string(i + 1) + " = beta_" + std::to_string(s) + std::to_string(i + 1),
                       abs(t.b[i] - beta(s - 1, i))});
    }
    for (int i = 0; i < s - 1; ++i) {
        out.push_back({"alpha_" + std::to_string(s) + std::to_string(i + 1) + " = beta_" + std::to_string(s - 1) +
                           std::to_string(i + 1),
                       abs(t.alpha(s - 1, i) - beta(s - 2, i))});
    }
    Scalar emb(0);
    for (int i = 0; i < s; ++i) emb = std::max(emb, abs(t.b_hat[i] - (i < s - 1 ? t.alpha(s - 1, i) : Scalar(0))));
    out.push_back({"b_hat = alpha row " + std::to_string(s), emb});
    return out;
}

template <typename Scalar>
[[nodiscard]] Scalar max_residual(const std::vector<ConditionResidual<Scalar>>& rs) {
    Scalar m(0);
    for (const auto& r : rs) m = std::max(m, r.residual);
    return m;
}

/// R(z) of one step applied to y' = lambda*y, z = h*lambda:
///   R(z) = 1 + b^T (I - z*B)^{-1} z*1,  B = beta with gamma on the diagonal.
/// Returns complex infinity at the pole z = 1/gamma.
template <typename Scalar>
[[nodiscard]] std::complex<Scalar> stability_function(const RosenbrockTableau<Scalar>& t, std::complex<Scalar> z) {
    using C = std::complex<Scalar>;
    const C diag = C(1) - z * t.gamma;
    if (diag == C(0)) return C(std::numeric_limits<Scalar>::infinity(), Scalar(0));
    const MatrixX<Scalar> beta = t.beta();
    std::vector<C> k(static_cast<std::size_t>(t.s));
    C r(1);
    for (int i = 0; i < t.s; ++i) {
        C acc(1);
        for (int j = 0; j < i; ++j) acc += beta(i, j) * k[static_cast<std::size_t>(j)];
        k[static_cast<std::size_t>(i)] = z * acc / diag;
        r += t.b[i] * k[static_cast<std::size_t>(i)];
    }
    return r;
}

/// Coefficient table, 17 significant digits.
[[nodiscard]] std::string format_tableau(const Tableau& t);

}  // namespace sicnm
