#include "mdfrac/linalg.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mdfrac {

double CsrMatrix::at(Index r, Index c) const {
    auto first = col_idx.begin() + row_ptr[r];
    auto last = col_idx.begin() + row_ptr[r + 1];
    auto it = std::lower_bound(first, last, c);
    return (it != last && *it == c) ? values[static_cast<std::size_t>(it - col_idx.begin())] : 0.0;
}

std::vector<double> CsrMatrix::multiply(std::span<const double> x) const {
    std::vector<double> y(rows);
    kernels::spmv(view(), x, y);
    return y;
}

CsrMatrix CsrMatrix::transpose() const {
    Triplets t(cols, rows);
    for (Index r = 0; r < rows; ++r)
        for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) t.add(col_idx[k], r, values[k]);
    return csr_from_triplets(t);
}

Eigen::MatrixXd CsrMatrix::to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col_idx[k]) = values[k];
    return d;
}

CsrMatrix csr_from_triplets(const Triplets& t) {
    for (const auto& e : t.entries) {
        if (e.row < 0 || e.row >= t.rows || e.col < 0 || e.col >= t.cols) {
            throw Error(fmt::format("triplet ({}, {}) outside a {}x{} matrix", e.row, e.col, t.rows, t.cols));
        }
    }
    std::vector<Triplet> sorted = t.entries;
    std::sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
        if (a.row != b.row) return a.row < b.row;
        if (a.col != b.col) return a.col < b.col;
        return a.value < b.value;
    });
    CsrMatrix m;
    m.rows = t.rows;
    m.cols = t.cols;
    m.row_ptr.assign(t.rows + 1, 0);
    for (std::size_t i = 0; i < sorted.size();) {
        const Index r = sorted[i].row, c = sorted[i].col;
        double v = 0.0;
        for (; i < sorted.size() && sorted[i].row == r && sorted[i].col == c; ++i) v += sorted[i].value;
        m.col_idx.push_back(c);
        m.values.push_back(v);
        ++m.row_ptr[r + 1];
    }
    for (Index r = 0; r < t.rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
}

double relative_residual(const CsrMatrix& a, std::span<const double> x, std::span<const double> b) {
    std::vector<double> r(a.rows);
    kernels::spmv(a.view(), x, r);
    kernels::axpy(-1.0, b, r);
    const double rn = std::sqrt(kernels::dot(r, r));
    const double bn = std::sqrt(kernels::dot(b, b));
    return rn / std::max(bn, 1.0);
}

struct SparseLu::Impl {
    CsrMatrix a;
    Eigen::SparseMatrix<double> mat;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

SparseLu::SparseLu(const CsrMatrix& a) : impl_(std::make_unique<Impl>()) {
    if (a.rows != a.cols) throw SolverError("sparse LU needs a square matrix");
    impl_->a = a;
    for (Index r = 0; r < a.rows; ++r) {
        if (a.row_ptr[r] == a.row_ptr[r + 1]) throw SolverError(fmt::format("singular matrix: row {} is empty", r));
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(a.values.size());
    for (Index r = 0; r < a.rows; ++r)
        for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) trip.emplace_back(r, a.col_idx[k], a.values[k]);
    impl_->mat.resize(a.rows, a.cols);
    impl_->mat.setFromTriplets(trip.begin(), trip.end());
    impl_->mat.makeCompressed();
    impl_->lu.analyzePattern(impl_->mat);
    impl_->lu.factorize(impl_->mat);
    if (impl_->lu.info() != Eigen::Success) {
        throw SolverError("singular matrix: sparse LU factorization failed (" + impl_->lu.lastErrorMessage() + ")");
    }
}

SparseLu::~SparseLu() = default;
SparseLu::SparseLu(SparseLu&&) noexcept = default;
SparseLu& SparseLu::operator=(SparseLu&&) noexcept = default;

std::vector<double> SparseLu::solve(std::span<const double> b, double rel_tol, int max_refine,
                                    SolveReport* report) const {
    const auto& a = impl_->a;
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), static_cast<Eigen::Index>(b.size()));
    Eigen::VectorXd x = impl_->lu.solve(bv);
    if (!x.allFinite()) throw SolverError("singular matrix: non-finite solution");
    std::vector<double> xs(x.data(), x.data() + x.size());
    double res = relative_residual(a, xs, b);
    int steps = 0;
    std::vector<double> r(a.rows);
    while (res > rel_tol && steps < max_refine) {
        kernels::spmv(a.view(), xs, r);
        for (Index i = 0; i < a.rows; ++i) r[i] = b[i] - r[i];
        Eigen::Map<const Eigen::VectorXd> rv(r.data(), a.rows);
        Eigen::VectorXd dx = impl_->lu.solve(rv);
        for (Index i = 0; i < a.rows; ++i) xs[i] += dx[i];
        const double next = relative_residual(a, xs, b);
        ++steps;
        if (!(next < res)) {
            res = next;
            break;
        }
        res = next;
    }
    if (report) {
        report->relative_residual = res;
        report->iterations = steps;
    }
    return xs;
}

std::vector<double> minres(const CsrMatrix& a, std::span<const double> b, double rel_tol, int max_iter,
                           SolveReport* report) {
    const Index n = a.rows;
    // Jacobi preconditioner on |diag|; zero diagonal entries (saddle-point block) use 1.
    std::vector<double> minv(n, 1.0);
    for (Index i = 0; i < n; ++i) {
        const double d = std::abs(a.at(i, i));
        if (d > 0.0) minv[i] = 1.0 / d;
    }
    auto precond = [&](std::span<const double> in, std::span<double> out) {
        for (Index i = 0; i < n; ++i) out[i] = minv[i] * in[i];
    };
    std::vector<double> x(n, 0.0), r1(b.begin(), b.end()), y(n), r2(n), v(n), w(n, 0.0), w1(n), w2(n, 0.0);
    precond(r1, y);
    double beta1 = kernels::dot(r1, y);
    if (beta1 < 0.0) throw SolverError("MINRES: preconditioner is not positive definite");
    beta1 = std::sqrt(beta1);
    if (beta1 == 0.0) {
        if (report) *report = {0.0, 0};
        return x;
    }
    r2 = r1;
    double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1, cs = -1.0, sn = 0.0;
    int itn = 0;
    double res = 1.0;
    while (itn < max_iter) {
        ++itn;
        const double s = 1.0 / beta;
        for (Index i = 0; i < n; ++i) v[i] = s * y[i];
        kernels::spmv(a.view(), v, y);
        if (itn >= 2) kernels::axpy(-beta / oldb, r1, y);
        const double alfa = kernels::dot(v, y);
        kernels::axpy(-alfa / beta, r2, y);
        r1.swap(r2);
        r2 = y;
        precond(r2, y);
        oldb = beta;
        beta = kernels::dot(r2, y);
        if (beta < 0.0) throw SolverError("MINRES: preconditioner is not positive definite");
        beta = std::sqrt(beta);
        const double oldeps = epsln;
        const double delta = cs * dbar + sn * alfa;
        const double gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        const double gamma = std::max(std::hypot(gbar, beta), 1e-300);
        cs = gbar / gamma;
        sn = beta / gamma;
        const double phi = cs * phibar;
        phibar = sn * phibar;
        w1.swap(w2);
        w2.swap(w);
        for (Index i = 0; i < n; ++i) w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
        kernels::axpy(phi, w, x);
        if (phibar / beta1 < rel_tol || itn % 50 == 0) {
            res = relative_residual(a, x, b);
            if (res <= rel_tol) break;
        }
        if (beta == 0.0) break;
    }
    res = relative_residual(a, x, b);
    if (report) *report = {res, itn};
    if (res > rel_tol) {
        throw SolverError(fmt::format("MINRES did not converge: relative residual {:.3e} after {} iterations", res, itn));
    }
    return x;
}

std::vector<double> solve(const CsrMatrix& a, std::span<const double> b, const SolverConfig& cfg,
                          SolveReport* report) {
    if (a.rows != a.cols) throw SolverError("solve needs a square matrix");
    if (static_cast<Index>(b.size()) != a.rows) throw SolverError("right-hand side size mismatch");
    if (!(cfg.rel_tol > 0.0)) throw ConfigError("solver rel_tol must be positive");
    for (double v : b)
        if (!std::isfinite(v)) throw SolverError("non-finite right-hand side");
    if (cfg.method == SolverMethod::symmetric_indefinite_iterative) {
        return minres(a, b, cfg.rel_tol, cfg.max_iter, report);
    }
    SparseLu lu(a);
    SolveReport local;
    auto x = lu.solve(b, cfg.rel_tol, 3, &local);
    if (report) *report = local;
    if (local.relative_residual > cfg.rel_tol) {
        throw SolverError(fmt::format("direct solve residual {:.3e} above tolerance {:.1e} (ill-conditioned or singular)",
                                      local.relative_residual, cfg.rel_tol));
    }
    return x;
}

Eigen::MatrixXd dense_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != a.cols()) throw SolverError("dense_solve needs a square matrix");
    if (a.rows() != b.rows()) throw SolverError("dense_solve: right-hand side size mismatch");
    if (a.size() == 0) return Eigen::MatrixXd(0, b.cols());
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const auto& u = lu.matrixLU();
    const double scale = a.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        if (!(std::abs(u(i, i)) > std::numeric_limits<double>::epsilon() * scale * static_cast<double>(a.rows()))) {
            throw SolverError("dense matrix is singular to working precision");
        }
    }
    const double rcond = lu.rcond();
    if (rcond < 1e-12) spdlog::warn("dense_solve: condition estimate {:.3e} above 1e12", 1.0 / rcond);
    return lu.solve(b);
}

void write_matrix_market(std::ostream& os, const CsrMatrix& a) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << a.rows << ' ' << a.cols << ' ' << a.nnz() << '\n';
    for (Index r = 0; r < a.rows; ++r)
        for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
            os << fmt::format("{} {} {:.17g}\n", r + 1, a.col_idx[k] + 1, a.values[k]);
}

}  // namespace mdfrac
