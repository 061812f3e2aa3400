#include "sicnm/tableau.hpp"

#include <cstdio>
#include <sstream>

namespace sicnm {

Tableau rodas3d() {
    Tableau t;
    t.name = "rodas3d";
    t.s = 4;
    t.gamma = kRodas3dGamma;
    t.order = 3;
    t.embedded_order = 2;
    t.alpha = Matrix::Zero(4, 4);
    t.gamma_ij = Matrix::Zero(4, 4);
    t.alpha(1, 0) = 4.6000000000000000e-01;
    t.alpha(2, 0) = 2.4000000000000000e-01;
    t.alpha(2, 1) = 7.6000000000000000e-01;
    t.alpha(3, 0) = -3.1191952421209673e-01;
    t.alpha(3, 1) = 7.3910346421209673e-01;
    t.alpha(3, 2) = 5.7281606000000000e-01;
    t.gamma_ij(1, 0) = -8.8959327994025079e-01;
    t.gamma_ij(2, 0) = -5.5191952421209673e-01;
    t.gamma_ij(2, 1) = -2.0896535787903271e-02;
    t.gamma_ij(3, 0) = 6.5228448971661890e-01;
    t.gamma_ij(3, 1) = -3.2522510150009204e-01;
    t.gamma_ij(3, 2) = -8.9987544821652686e-01;
    t.b = Vector(4);
    t.b << 3.4036496550452217e-01, 4.1387836271200469e-01, -3.2705938821652686e-01, 5.7281606000000000e-01;
    t.b_hat = Vector(4);
    t.b_hat << t.alpha(3, 0), t.alpha(3, 1), t.alpha(3, 2), 0.0;
    return t;
}

Tableau rodas4() { return derive_rodas4<double>(); }

Tableau tableau_by_name(const std::string& name) {
    if (name == "rodas3d") return rodas3d();
    if (name == "rodas4") return rodas4();
    throw Error(ErrorCode::InvalidArgument, "unknown tableau '" + name + "'");
}

std::string format_tableau(const Tableau& t) {
    std::ostringstream os;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "% .16e", v);
        return std::string(buf);
    };
    os << "tableau " << t.name << "  s=" << t.s << "  order=" << t.order << "  embedded_order=" << t.embedded_order
       << "\n";
    os << "gamma " << num(t.gamma) << "\n";
    auto matrix = [&](const char* label, const Matrix& m) {
        os << label << "\n";
        for (int i = 0; i < t.s; ++i) {
            os << " ";
            for (int j = 0; j < t.s; ++j) os << " " << num(m(i, j));
            os << "\n";
        }
    };
    matrix("alpha", t.alpha);
    matrix("gamma_ij", t.gamma_ij);
    os << "b    ";
    for (int i = 0; i < t.s; ++i) os << " " << num(t.b[i]);
    os << "\nb_hat";
    for (int i = 0; i < t.s; ++i) os << " " << num(t.b_hat[i]);
    os << "\n";
    return os.str();
}

}  // namespace sicnm
