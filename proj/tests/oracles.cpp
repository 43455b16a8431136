#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oracles {

svmorph::Volume jacobian_determinant(const svmorph::DeformationField& f) {
    const svmorph::Dims d = f.dims;
    const double sp[3] = {f.spacing.sx, f.spacing.sy, f.spacing.sz};
    svmorph::Volume out(d, f.spacing);

    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const int n[3] = {d.nx, d.ny, d.nz};
                const int pos[3] = {x, y, z};
                double m[3][3]; // m[component][axis]
                for (int axis = 0; axis < 3; ++axis) {
                    int lo[3] = {x, y, z}, hi[3] = {x, y, z};
                    if (pos[axis] == 0)
                        hi[axis] = 1;
                    else if (pos[axis] == n[axis] - 1)
                        lo[axis] = pos[axis] - 1;
                    else {
                        lo[axis] = pos[axis] - 1;
                        hi[axis] = pos[axis] + 1;
                    }
                    const double step = (hi[axis] - lo[axis]) * sp[axis];
                    const double* uh = f.at(hi[0], hi[1], hi[2]);
                    const double* ul = f.at(lo[0], lo[1], lo[2]);
                    for (int comp = 0; comp < 3; ++comp)
                        m[comp][axis] = (uh[comp] - ul[comp]) / step + (comp == axis ? 1.0 : 0.0);
                }
                // Laplace expansion along the bottom row.
                const double c0 = m[0][1] * m[1][2] - m[0][2] * m[1][1];
                const double c1 = m[0][0] * m[1][2] - m[0][2] * m[1][0];
                const double c2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                out.at(x, y, z) = m[2][0] * c0 - m[2][1] * c1 + m[2][2] * c2;
            }
    return out;
}

double quantile_linear(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

RobustStats robust_stats(const std::vector<double>& values) {
    RobustStats out;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    out.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    const double q1 = quantile_linear(values, 0.25);
    const double q3 = quantile_linear(values, 0.75);
    const double lo = q1 - 1.5 * (q3 - q1);
    const double hi = q3 + 1.5 * (q3 - q1);
    for (double v : values)
        if (v >= lo && v <= hi) out.retained.push_back(v);

    if (out.retained.size() < 2) {
        out.robust_std = 0.0;
        return out;
    }
    double mean = 0.0;
    for (double v : out.retained) mean += v;
    mean /= static_cast<double>(out.retained.size());
    double ss = 0.0;
    for (double v : out.retained) ss += (v - mean) * (v - mean);
    out.robust_std = std::sqrt(ss / static_cast<double>(out.retained.size() - 1));
    return out;
}

Eigen::VectorXd solve_gaussian(Eigen::MatrixXd a, Eigen::VectorXd b) {
    const Eigen::Index n = a.rows();
    for (Eigen::Index col = 0; col < n; ++col) {
        Eigen::Index pivot = col;
        for (Eigen::Index r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (a(pivot, col) == 0.0) throw std::runtime_error("solve_gaussian: singular matrix");
        a.row(col).swap(a.row(pivot));
        std::swap(b(col), b(pivot));
        for (Eigen::Index r = col + 1; r < n; ++r) {
            const double factor = a(r, col) / a(col, col);
            a.row(r) -= factor * a.row(col);
            b(r) -= factor * b(col);
        }
    }
    Eigen::VectorXd x(n);
    for (Eigen::Index r = n - 1; r >= 0; --r) {
        double acc = b(r);
        for (Eigen::Index c = r + 1; c < n; ++c) acc -= a(r, c) * x(c);
        x(r) = acc / a(r, r);
    }
    return x;
}

OlsFit ols_normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::Index n = x.rows(), p = x.cols();
    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = x;
    const Eigen::MatrixXd ata = design.transpose() * design;
    const Eigen::VectorXd atb = design.transpose() * y;
    const Eigen::VectorXd w = solve_gaussian(ata, atb);
    OlsFit fit;
    fit.intercept = w(0);
    fit.coefficients = w.tail(p);
    return fit;
}

void jacobi_eigen_symmetric(Eigen::MatrixXd a, Eigen::VectorXd& eigenvalues,
                            Eigen::MatrixXd& eigenvectors) {
    const Eigen::Index n = a.rows();
    eigenvectors = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-26) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(n, n);
                rot(p, p) = c;
                rot(q, q) = c;
                rot(p, q) = s;
                rot(q, p) = -s;
                a = rot.transpose() * a * rot;
                eigenvectors = eigenvectors * rot;
            }
    }
    eigenvalues = a.diagonal();
    // Sort descending.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index i, Eigen::Index j) { return eigenvalues(i) > eigenvalues(j); });
    Eigen::VectorXd ev(n);
    Eigen::MatrixXd vec(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        ev(i) = eigenvalues(order[static_cast<std::size_t>(i)]);
        vec.col(i) = eigenvectors.col(order[static_cast<std::size_t>(i)]);
    }
    eigenvalues = ev;
    eigenvectors = vec;
}

Eigen::MatrixXd pca_top_components(const Eigen::MatrixXd& x, int k) {
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    jacobi_eigen_symmetric(cov, eigenvalues, eigenvectors);
    return eigenvectors.leftCols(k).transpose();
}

namespace {

// Gram-Schmidt orthonormalization of the rows.
Eigen::MatrixXd orthonormal_rows(const Eigen::MatrixXd& a) {
    Eigen::MatrixXd q = a;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        for (Eigen::Index j = 0; j < i; ++j) q.row(i) -= q.row(i).dot(q.row(j)) * q.row(j);
        q.row(i) /= q.row(i).norm();
    }
    return q;
}

} // namespace

double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::MatrixXd qa = orthonormal_rows(a);
    const Eigen::MatrixXd qb = orthonormal_rows(b);
    const Eigen::MatrixXd m = qa * qb.transpose();
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    jacobi_eigen_symmetric(m * m.transpose(), eigenvalues, eigenvectors);
    // cos^2 of the principal angles are the eigenvalues; the smallest gives
    // the largest angle.
    const double c2 = std::clamp(eigenvalues(eigenvalues.size() - 1), 0.0, 1.0);
    return std::acos(std::sqrt(c2));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks_with_ties(x), ranks_with_ties(y));
}

long double erfc_highprec(long double x) {
    if (x < 0.0L) return 2.0L - erfc_highprec(-x);
    if (x < 2.0L) {
        // erf by Taylor series, then erfc = 1 - erf.
        long double term = x;
        long double sum = x;
        for (int n = 1; n < 200; ++n) {
            term *= -x * x / static_cast<long double>(n);
            const long double add = term / static_cast<long double>(2 * n + 1);
            sum += add;
            if (std::abs(add) < 1e-25L * std::abs(sum)) break;
        }
        const long double erf = sum * 2.0L / std::sqrt(static_cast<long double>(M_PI));
        return 1.0L - erf;
    }
    // Laplace continued fraction, evaluated backward:
    // erfc(x) = exp(-x^2)/sqrt(pi) / (x + 1/(2x + 2/(x + 3/(2x + 4/(x + ...)))))
    long double tail = 0.0L;
    for (int i = 120; i >= 1; --i) {
        const long double denom = (i % 2 == 1) ? (2.0L * x) : x;
        tail = static_cast<long double>(i) / (denom + tail);
    }
    return std::exp(-x * x) / std::sqrt(static_cast<long double>(M_PI)) / (x + tail);
}

long double normal_two_sided_p(long double z) {
    return erfc_highprec(std::abs(z) / std::sqrt(2.0L));
}

long double chi2_sf(long double x, int k) {
    // Regularized upper incomplete gamma Q(k/2, x/2).
    const long double a = static_cast<long double>(k) / 2.0L;
    const long double x2 = x / 2.0L;
    if (x2 < 0.0L) return 1.0L;
    if (x2 == 0.0L) return 1.0L;
    if (x2 < a + 1.0L) {
        // P(a, x) by series, Q = 1 - P.
        long double term = 1.0L / a;
        long double sum = term;
        for (int n = 1; n < 500; ++n) {
            term *= x2 / (a + static_cast<long double>(n));
            sum += term;
            if (term < 1e-24L * sum) break;
        }
        const long double log_p = a * std::log(x2) - x2 - std::lgamma(a);
        return 1.0L - sum * std::exp(log_p);
    }
    // Q(a, x) by continued fraction (backward evaluation).
    long double tail = 0.0L;
    for (int i = 200; i >= 1; --i) {
        const long double ai = static_cast<long double>(i);
        tail = (ai - a) / (1.0L + ai / (x2 + tail));
    }
    const long double log_q = a * std::log(x2) - x2 - std::lgamma(a);
    return std::exp(log_q) / (x2 + 1.0L - a + tail);
}

double uniform(std::uint64_t& state, double lo, double hi) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return lo + (static_cast<double>(z >> 11) * 0x1.0p-53) * (hi - lo);
}

double normal(std::uint64_t& state) {
    double u1 = 0.0;
    do {
        u1 = uniform(state, 0.0, 1.0);
    } while (u1 <= 0.0);
    const double u2 = uniform(state, 0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace oracles
