#include <doctest.h>

#include <cmath>

#include "precondiag/errors.hpp"
#include "precondiag/matrix.hpp"
#include "test_util.hpp"

using namespace precondiag;
using test_util::seeded_matrix;
using test_util::seeded_orthogonal;

TEST_CASE("full_svd on the identity") {
    const Matrix eye = Matrix::Identity(3, 3);
    const SvdFactors f = full_svd(eye);
    for (Index i = 0; i < 3; ++i) CHECK(f.sigma(i) == doctest::Approx(1.0).epsilon(1e-12));
    const Matrix recon = f.p * sigma_matrix(f, 3, 3) * f.q_t;
    CHECK((recon - eye).norm() <= 1e-12);
}

TEST_CASE("full_svd on an already-diagonal rectangular matrix") {
    Matrix g = Matrix::Zero(2, 4);
    g(0, 0) = 3.0;
    g(1, 1) = 2.0;
    const SvdFactors f = full_svd(g);
    CHECK(f.sigma(0) == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(f.sigma(1) == doctest::Approx(2.0).epsilon(1e-13));
    CHECK((f.p * sigma_matrix(f, 2, 4) * f.q_t - g).norm() <= 1e-12);
    CHECK(f.p.rows() == 2);
    CHECK(f.q_t.rows() == 4);  // full matrices, not truncated
}

TEST_CASE("full_svd factor invariants on a random 5x7 matrix") {
    const Matrix g = seeded_matrix(5, 7, 42);
    const SvdFactors f = full_svd(g);
    CHECK(orthogonality_defect(f.p) <= 1e-10 * 5);
    CHECK(orthogonality_defect(f.q_t) <= 1e-10 * 7);
    CHECK((f.p * sigma_matrix(f, 5, 7) * f.q_t - g).norm() <= 1e-8 * g.norm());
    for (Index i = 0; i + 1 < f.sigma.size(); ++i) CHECK(f.sigma(i) >= f.sigma(i + 1));
    CHECK(f.sigma.minCoeff() >= 0.0);
}

TEST_CASE("full_svd rejects non-finite input") {
    Matrix g = Matrix::Zero(2, 2);
    g(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(full_svd(g), NumericError);
}

TEST_CASE("svd round trip over a shape sweep") {
    std::uint64_t seed = 7;
    for (Index m : {1, 2, 5, 13, 32}) {
        for (Index n : {1, 3, 8, 32}) {
            const Matrix g = seeded_matrix(m, n, seed++);
            const SvdFactors f = full_svd(g);
            CHECK((f.p * sigma_matrix(f, m, n) * f.q_t - g).norm() <=
                  1e-8 * std::max(1.0, g.norm()));
        }
    }
}

TEST_CASE("kron basics") {
    CHECK((kron(Matrix::Identity(2, 2), Matrix::Identity(2, 2)) - Matrix::Identity(4, 4)).norm() ==
          0.0);

    Matrix row(1, 2), col(2, 1);
    row << 1, 2;
    col << 3, 4;
    Matrix expected(2, 2);
    expected << 3, 6, 4, 8;
    CHECK((kron(row, col) - expected).norm() == 0.0);
}

TEST_CASE("kron of orthogonal factors is orthogonal") {
    const Matrix p = seeded_orthogonal(3, 11);
    const Matrix q = seeded_orthogonal(4, 12);
    const Matrix k = kron(q, p);
    CHECK((k * k.transpose() - Matrix::Identity(12, 12)).norm() <= 1e-10);
}

TEST_CASE("kron enforces the element cap") {
    const Matrix a = Matrix::Ones(100, 100);
    CHECK_THROWS_AS(kron(a, a, 1 << 10), ShapeError);
}

TEST_CASE("vec column-stacks") {
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    const Matrix v = vec(a);
    CHECK(v(0, 0) == 1);
    CHECK(v(1, 0) == 3);
    CHECK(v(2, 0) == 2);
    CHECK(v(3, 0) == 4);
    CHECK((unvec(v, 2, 2) - a).norm() == 0.0);

    const Matrix row = seeded_matrix(1, 5, 3);
    CHECK((vec(row) - row.transpose()).norm() == 0.0);
}

TEST_CASE("vec(AXB) = (B^T kron A) vec(X)") {
    const Matrix x = seeded_matrix(3, 2, 21);
    const Matrix a = seeded_matrix(3, 3, 22);
    const Matrix b = seeded_matrix(2, 2, 23);
    const Matrix lhs = vec(a * x * b);
    const Matrix rhs = kron(b.transpose(), a) * vec(x);
    CHECK((lhs - rhs).norm() <= 1e-12);
}

TEST_CASE("off_diagonal_ratio") {
    Matrix d = Matrix::Zero(3, 3);
    d.diagonal() << 1, 2, 3;
    CHECK(off_diagonal_ratio(d) == 0.0);

    CHECK(off_diagonal_ratio(Matrix::Ones(2, 2)) ==
          doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));

    CHECK(off_diagonal_ratio(Matrix::Zero(4, 4)) == 0.0);

    CHECK_THROWS_AS(off_diagonal_ratio(Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("covariance diagonalization identity") {
    // (Q kron P)^T vec(G) vec(G)^T (Q kron P) = vec(Sigma) vec(Sigma)^T.
    std::uint64_t seed = 100;
    for (auto [m, n] : {std::pair<Index, Index>{4, 4}, {3, 7}, {8, 12}}) {
        const Matrix g = seeded_matrix(m, n, seed++);
        const SvdFactors f = full_svd(g);
        const Matrix k = kron(f.q_t.transpose(), f.p);
        const Matrix cov = vec(g) * vec(g).transpose();
        const Matrix vs = vec(sigma_matrix(f, m, n));
        const Matrix rotated = k.transpose() * cov * k;
        const Matrix target = vs * vs.transpose();
        CHECK((rotated - target).norm() <= 1e-8 * target.norm());
    }
}
