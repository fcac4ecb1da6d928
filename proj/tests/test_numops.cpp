#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cos2a/error.hpp"
#include "cos2a/numops.hpp"
#include "cos2a/scene.hpp"
#include "oracles.hpp"

using namespace cos2a;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

} // namespace

TEST(Blur, ConstantAndTwoByTwo) {
    const BlurOperator op{4, 6, 2};
    EXPECT_LE((apply_blur(Matrix::Constant(3, 24, 0.7), op).array() - 0.7).abs().maxCoeff(), 1e-15);
    Matrix x(1, 4);
    x << 1, 2, 3, 4;
    EXPECT_EQ(apply_blur(x, BlurOperator{2, 2, 2}), Matrix::Constant(1, 1, 2.5));
}

TEST(Blur, BlockMajorOrderMatchesOracle) {
    const BlurOperator op{6, 4, 2};
    EXPECT_EQ(block_major_order(op), oracle::block_major_pixels(6, 4, 2));
}

TEST(Blur, MatchesDenseKronecker) {
    std::mt19937_64 rng(1);
    for (Index r : {1, 2, 3}) {
        const Index h = 2 * r, w = 3 * r;
        const BlurOperator op{h, w, r};
        const Matrix x = oracle::uniform(3, h * w, rng);
        const Matrix dense = oracle::to_block_major(x, h, w, r) * oracle::dense_blur(h * w, r);
        EXPECT_LE((apply_blur(x, op) - dense).cwiseAbs().maxCoeff(), 1e-12) << "r=" << r;

        const Matrix lo = oracle::uniform(3, op.low_pixels(), rng);
        const Matrix adj_bm = lo * oracle::dense_blur(h * w, r).transpose();
        const Matrix adj = oracle::to_block_major(apply_blur_adjoint(lo, op), h, w, r);
        EXPECT_LE((adj - adj_bm).cwiseAbs().maxCoeff(), 1e-12) << "r=" << r;
    }
}

TEST(Blur, NonDivisibleGridFails) {
    EXPECT_THROW(apply_blur(Matrix::Zero(1, 15), BlurOperator{3, 5, 2}), InputError);
    EXPECT_THROW((BlurOperator{63, 64, 2}.validate()), InputError);
}

TEST(Blur, VecIdentity) {
    std::mt19937_64 rng(2);
    const Matrix c = oracle::gaussian(3, 4, rng);
    const Matrix e = oracle::gaussian(4, 5, rng);
    const Matrix f = oracle::gaussian(5, 2, rng);
    const Vector lhs = oracle::vec(c * e * f);
    const Vector rhs = oracle::kron(f.transpose(), c) * oracle::vec(e);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Volume, Examples) {
    EXPECT_EQ(volume_surrogate(Matrix::Constant(5, 3, 0.4)), 0.0);
    EXPECT_DOUBLE_EQ(volume_surrogate(Matrix::Identity(3, 2)), 1.0);
    EXPECT_EQ(volume_gradient(Matrix::Constant(5, 3, 0.4)).cwiseAbs().maxCoeff(), 0.0);
    std::mt19937_64 rng(3);
    EXPECT_EQ(volume_gradient(oracle::uniform(5, 1, rng)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Volume, PairwiseEqualsTraceForm) {
    std::mt19937_64 rng(4);
    const Matrix a = oracle::uniform(6, 4, rng);
    const Matrix p = 4.0 * Matrix::Identity(4, 4) - Matrix::Ones(4, 4);
    const double trace = 0.5 * (a * p * a.transpose()).trace();
    EXPECT_LE(rel(volume_surrogate(a), trace), 1e-10);
    EXPECT_LE(rel(volume_surrogate(a), oracle::volume_pairwise(a)), 1e-10);
}

TEST(Volume, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    const Matrix a = oracle::uniform(5, 3, rng);
    const Matrix fd = oracle::finite_difference_gradient([](const Matrix& x) { return oracle::volume_pairwise(x); }, a, 1e-5);
    EXPECT_LT((volume_gradient(a) - fd).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(QNorm, Examples) {
    const BlurOperator op{2, 2, 2};
    std::mt19937_64 rng(6);
    const Matrix y = oracle::uniform(1, 4, rng);
    EXPECT_EQ(q_norm_sq(y, y, op), 0.0);
    EXPECT_DOUBLE_EQ(q_norm_sq(y + Matrix::Ones(1, 4), y, op), 1.0);
    EXPECT_THROW(q_norm_sq(Matrix::Zero(1, 4), Matrix::Zero(2, 4), op), InputError);
}

TEST(QNorm, MatchesDenseQ) {
    std::mt19937_64 rng(7);
    const Index m = 3, h = 4, w = 4, r = 2;
    const Matrix x = oracle::uniform(m, h * w, rng);
    const Matrix y = oracle::uniform(m, h * w, rng);
    const Vector v = oracle::vec(oracle::to_block_major(x - y, h, w, r));
    const double dense = v.dot(oracle::dense_q(m, h * w, r) * v);
    EXPECT_LE(rel(q_norm_sq(x, y, BlurOperator{h, w, r}), dense), 1e-10);
}

TEST(QNorm, KroneckerDualityIdentity) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<Index> small(1, 4);
        std::uniform_int_distribution<Index> nn(1, 3);
        std::uniform_int_distribution<Index> blocks(1, 3);
        const Index m = small(rng), n = nn(rng), r = std::uniform_int_distribution<Index>(1, 2)(rng);
        const Index h = r * blocks(rng), w = r * blocks(rng);
        const BlurOperator op{h, w, r};
        const Matrix a = oracle::uniform(m, n, rng);
        const Matrix s = oracle::uniform(n, h * w, rng);
        const Matrix y_de = oracle::uniform(m, h * w, rng);
        const double spatial = (apply_blur(y_de, op) - apply_blur(a * s, op)).squaredNorm();
        const Vector v = oracle::vec(oracle::to_block_major(a * s - y_de, h, w, r));
        const double dense = v.dot(oracle::dense_q(m, h * w, r) * v);
        EXPECT_LE(rel(spatial, dense), 1e-10) << "trial " << trial;
    }
}

TEST(Prox, Examples) {
    Matrix x(1, 3);
    x << 5, -1, 0.2;
    Matrix t0(1, 3);
    t0 << 5, 0, 0.2;
    EXPECT_EQ(prox_l1_nonneg(x, 0.0), t0);
    EXPECT_EQ(prox_l1_nonneg(x, 2.0)(0, 0), 3.0);
    EXPECT_EQ(prox_l1_nonneg(Matrix::Constant(1, 1, -1.0), 0.5)(0, 0), 0.0);
    EXPECT_THROW(prox_l1_nonneg(x, -0.1), InputError);
}

TEST(Prox, PerturbationOptimality) {
    std::mt19937_64 rng(9);
    const Matrix x = oracle::gaussian(10, 10, rng);
    for (double t : {0.0, 0.1, 0.7, 2.0}) {
        const Matrix z = prox_l1_nonneg(x, t);
        for (Index k = 0; k < x.size(); ++k) {
            const double zk = z.data()[k], xk = x.data()[k];
            ASSERT_GE(zk, 0.0);
            const auto f = [&](double v) { return 0.5 * (v - xk) * (v - xk) + t * v; };
            for (double d : {1e-4, -1e-4}) {
                if (zk + d < 0.0) continue;
                EXPECT_LE(f(zk), f(zk + d) + 1e-15);
            }
        }
    }
}

TEST(Project, ExamplesAndIdempotence) {
    Matrix x(1, 2);
    x << -2, 3;
    const Matrix p = project_nonneg(x);
    EXPECT_EQ(p(0, 0), 0.0);
    EXPECT_EQ(p(0, 1), 3.0);
    std::mt19937_64 rng(10);
    const Matrix r = oracle::gaussian(7, 5, rng);
    EXPECT_EQ(project_nonneg(project_nonneg(r)), project_nonneg(r));
}

TEST(Spa, SingleColumnIsMaxNorm) {
    std::mt19937_64 rng(11);
    const Matrix x = oracle::uniform(5, 30, rng);
    Index best = 0;
    for (Index j = 1; j < 30; ++j) {
        if (x.col(j).norm() > x.col(best).norm()) best = j;
    }
    EXPECT_EQ(spa_select(x, 1).indices, (std::vector<Index>{best}));
}

TEST(Spa, OrthogonalColumnsAllFound) {
    Matrix x = Matrix::Zero(6, 4);
    x(0, 0) = 1.0;
    x(1, 1) = 3.0;
    x(2, 2) = 2.0;
    x(3, 3) = 0.5;
    const SpaResult res = spa_select(x, 4);
    EXPECT_FALSE(res.rank_deficient);
    EXPECT_EQ(res.indices, (std::vector<Index>{1, 2, 0, 3}));
}

TEST(Spa, TiesGoToLowestIndex) {
    EXPECT_EQ(spa_select(Matrix::Identity(3, 3), 1).indices, (std::vector<Index>{0}));
}

TEST(Spa, RankDeficiencyFlagged) {
    Matrix x(3, 4);
    x << 1, 2, 3, 4, 1, 2, 3, 4, 0, 0, 0, 0;
    const SpaResult res = spa_select(x, 3);
    EXPECT_TRUE(res.rank_deficient);
    EXPECT_EQ(res.indices, (std::vector<Index>{3}));
    EXPECT_THROW(spa_select(x, 5), InputError);
    EXPECT_THROW(spa_select(x, 0), InputError);
}

TEST(Spa, FindsScenePurePixels) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        SceneSpec spec;
        spec.height = 32;
        spec.width = 32;
        spec.n_endmembers = 5;
        spec.seed = seed;
        const Scene s = generate_scene(spec);
        auto got = spa_select(s.cube.matrix(), 5).indices;
        auto want = s.pure_pixels;
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        EXPECT_EQ(got, want) << "seed " << seed;
    }
}

TEST(Lipschitz, Examples) {
    const LinearOp id = [](const Vector& v) { return v; };
    EXPECT_NEAR(estimate_lipschitz(id, id, 5, 10, 0), 1.05, 1e-12);
    const LinearOp three = [](const Vector& v) { return Vector(3.0 * v); };
    EXPECT_NEAR(estimate_lipschitz(three, three, 1, 10, 0), 9.0 * 1.05, 1e-12);
    const LinearOp zero = [](const Vector& v) { return Vector(Vector::Zero(v.size())); };
    EXPECT_EQ(estimate_lipschitz(zero, zero, 4, 10, 0), 0.0);
    EXPECT_THROW(estimate_lipschitz(id, id, 4, 0, 0), InputError);
}

TEST(Lipschitz, RandomMatrixAgainstDenseEigen) {
    std::mt19937_64 rng(12);
    const Matrix g = oracle::gaussian(8, 8, rng);
    const double sigma1 = Eigen::JacobiSVD<Matrix>(g).singularValues()(0);
    const LinearOp apply = [&](const Vector& v) { return Vector(g * v); };
    const LinearOp adj = [&](const Vector& v) { return Vector(g.transpose() * v); };
    const double est = estimate_lipschitz(apply, adj, 8, 100, 3) / kLipschitzSafety;
    EXPECT_LE(rel(est, sigma1 * sigma1), 0.01);
    EXPECT_EQ(estimate_lipschitz(apply, adj, 8, 100, 3), estimate_lipschitz(apply, adj, 8, 100, 3));
}

TEST(Woodbury, ZeroResponseAndLargeRho) {
    std::mt19937_64 rng(13);
    const Matrix rhs = oracle::gaussian(12, 5, rng);
    EXPECT_LE((woodbury_solve(Matrix::Zero(4, 12), 2.0, rhs) - rhs / 2.0).cwiseAbs().maxCoeff(), 1e-15);
    const Matrix d = oracle::uniform(4, 12, rng);
    for (double rho : {1e2, 1e3, 1e4}) {
        const double dev = (woodbury_solve(d, rho, rhs) - rhs / rho).cwiseAbs().maxCoeff();
        EXPECT_LE(dev, 10.0 * (2.0 * (d.transpose() * d).norm()) * rhs.cwiseAbs().maxCoeff() / (rho * rho));
    }
    EXPECT_THROW(woodbury_solve(d, 0.0, rhs), InputError);
    EXPECT_THROW(woodbury_solve(d, -1.0, rhs), InputError);
}

TEST(Woodbury, MatchesDenseSolve) {
    std::mt19937_64 rng(14);
    const Matrix d = oracle::uniform(4, 12, rng);
    const Matrix rhs = oracle::gaussian(12, 7, rng);
    const Matrix sys = 2.0 * d.transpose() * d + Matrix::Identity(12, 12);
    const Matrix direct = sys.fullPivLu().solve(rhs);
    EXPECT_LE((woodbury_solve(d, 1.0, rhs) - direct).norm() / direct.norm(), 1e-9);
}
