#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pertucker/linalg.hpp"
#include "properties.hpp"

using namespace pertucker;

TEST(FactorMatrix, RejectsNonOrthonormal) {
  EXPECT_THROW(FactorMatrix(Matrix::Ones(3, 2)), ArgumentError);
  EXPECT_THROW(FactorMatrix(Matrix::Identity(2, 3)), ArgumentError);
  EXPECT_NO_THROW(FactorMatrix(Matrix::Identity(3, 2)));
  EXPECT_EQ(FactorMatrix::empty(4).rank(), 0u);
}

TEST(TopEigvecs, Diagonal) {
  const Matrix s = Eigen::Vector3d(3, 2, 1).asDiagonal();
  const EigenSelection e = top_eigvecs(s, 2);
  EXPECT_EQ(e.vectors.matrix(), Matrix::Identity(3, 2));
  EXPECT_EQ(e.values(0), 3.0);
  EXPECT_EQ(e.values(1), 2.0);
}

TEST(TopEigvecs, DegenerateSpectrumCheckedByResidual) {
  const Matrix s = Matrix::Identity(4, 4);
  const EigenSelection e = top_eigvecs(s, 1);
  EXPECT_LE((s * e.vectors.matrix() - e.vectors.matrix()).norm(), 1e-12);
  EXPECT_NEAR(e.vectors.matrix().norm(), 1.0, 1e-12);
}

TEST(TopEigvecs, MatchesJacobiOracleAndResidual) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const Matrix s = oracle::random_symmetric(rng, 6);
    const EigenSelection e = top_eigvecs(s, 3);
    const Matrix& u = e.vectors.matrix();
    EXPECT_LE((s * u - u * e.values.asDiagonal()).norm(), 1e-9);
    const oracle::EigenPairs full = oracle::jacobi_eigen(s);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(e.values(i), full.values(i), 1e-9);
    for (int i = 0; i + 1 < 3; ++i) EXPECT_GE(e.values(i), e.values(i + 1));
  }
}

TEST(TopEigvecs, SignConvention) {
  Rng rng(12);
  const Matrix s = oracle::random_symmetric(rng, 5);
  const Matrix u = top_eigvecs(s, 5).vectors.matrix();
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index idx;
    u.col(j).cwiseAbs().maxCoeff(&idx);
    EXPECT_GT(u(idx, j), 0.0);
  }
  EXPECT_EQ(top_eigvecs(s, 3).vectors.matrix(), top_eigvecs(s, 3).vectors.matrix());
}

TEST(TopEigvecs, Errors) {
  EXPECT_THROW(top_eigvecs(Matrix::Identity(3, 3), 4), ArgumentError);
  Matrix ns = Matrix::Identity(3, 3);
  ns(0, 1) = 1.0;
  EXPECT_THROW(top_eigvecs(ns, 1), ArgumentError);
  Matrix nf = Matrix::Identity(2, 2);
  nf(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(top_eigvecs(nf, 1), ArgumentError);
  EXPECT_THROW(top_eigvecs(Matrix::Zero(2, 3), 1), ArgumentError);
}

TEST(TopEigvecs, MaximizesTraceOverRandomCompetitors) {
  Rng rng(13);
  for (int inst = 0; inst < 10; ++inst) {
    const Matrix s = oracle::random_symmetric(rng, 6);
    const Matrix u = top_eigvecs(s, 2).vectors.matrix();
    const double best = oracle::trace_objective(s, u);
    for (int c = 0; c < 100; ++c) EXPECT_GE(best, oracle::trace_objective(s, oracle::random_orthonormal(rng, 6, 2)) - 1e-9);
  }
}

TEST(SubspaceError, Basics) {
  Rng rng(14);
  const FactorMatrix u(oracle::random_orthonormal(rng, 6, 2));
  EXPECT_LE(subspace_error(u, u), 1e-24);
  const FactorMatrix a(Matrix::Identity(5, 5).leftCols(2));
  const FactorMatrix b(Matrix::Identity(5, 5).rightCols(2));
  EXPECT_NEAR(subspace_error(a, b), 4.0, 1e-12);
  EXPECT_NEAR(oracle::projector_distance(a.matrix(), b.matrix()), 4.0, 1e-12);
  EXPECT_THROW(subspace_error(a, FactorMatrix(Matrix::Identity(4, 2))), ArgumentError);
}

TEST(SubspaceError, AgreesWithProjectorOracleSymmetricAndRotationInvariant) {
  Rng rng(15);
  for (int t = 0; t < 100; ++t) {
    const Matrix u = oracle::random_orthonormal(rng, 7, 3);
    const Matrix v = oracle::random_orthonormal(rng, 7, 3);
    const double e = subspace_error(u, v);
    EXPECT_NEAR(e, oracle::projector_distance(u, v), 1e-10);
    EXPECT_NEAR(e, 6.0 - 2.0 * (u.transpose() * v * v.transpose() * u).trace(), 1e-10);
    EXPECT_NEAR(e, subspace_error(v, u), 1e-12);
    const Matrix rot = oracle::random_orthonormal(rng, 3, 3);
    EXPECT_NEAR(e, subspace_error(Matrix(u * rot), v), 1e-10);
  }
}

TEST(ProjectOut, Cases) {
  Rng rng(16);
  const Matrix s = oracle::random_symmetric(rng, 6);
  EXPECT_EQ(project_out(s, FactorMatrix::empty(6)), s);
  const FactorMatrix u(oracle::random_orthonormal(rng, 6, 2));
  EXPECT_LE(project_out(u.projector(), u).norm(), 1e-12);
  const Matrix p = project_out(s, u);
  EXPECT_LE((p - p.transpose()).norm(), 1e-10);
  const oracle::EigenPairs e = oracle::jacobi_eigen(p);
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    if (std::abs(e.values(i)) > 1e-8) EXPECT_LE((u.matrix().transpose() * e.vectors.col(i)).norm(), 1e-9);
  }
  EXPECT_THROW(project_out(Matrix::Zero(5, 5), u), ArgumentError);
}

TEST(ProjectOut, ConstrainedMaximizerBeatsFeasibleCompetitors) {
  Rng rng(17);
  for (int inst = 0; inst < 10; ++inst) {
    const Matrix s = oracle::random_symmetric(rng, 6);
    const FactorMatrix u(oracle::random_orthonormal(rng, 6, 2));
    const Matrix v = top_eigvecs(project_out(s, u), 2).vectors.matrix();
    const double best = oracle::trace_objective(s, v);
    for (int c = 0; c < 100; ++c)
      EXPECT_GE(best, oracle::trace_objective(s, oracle::random_feasible(rng, u.matrix(), 2)) - 1e-9);
  }
}

TEST(Orthonormalize, Cases) {
  Rng rng(18);
  const Matrix q = oracle::random_orthonormal(rng, 6, 3);
  EXPECT_LE(subspace_error(orthonormalize(q).matrix(), q), 1e-12);
  EXPECT_LE(subspace_error(orthonormalize(7.0 * q).matrix(), q), 1e-12);
  const Matrix m = gaussian_matrix(rng, 10, 3);
  const FactorMatrix f = orthonormalize(m);
  EXPECT_LE((f.matrix().transpose() * f.matrix() - Matrix::Identity(3, 3)).norm(), 1e-10);
  EXPECT_LE(subspace_error(f.matrix(), Matrix(m.householderQr().householderQ() * Matrix::Identity(10, 3))), 1e-10);
  Matrix deficient = m;
  deficient.col(2) = deficient.col(0);
  EXPECT_THROW(orthonormalize(deficient), DegenerateInputError);
  EXPECT_THROW(orthonormalize(Matrix::Ones(2, 3)), DegenerateInputError);
}

TEST(ReverseKronChain, ReverseOrder) {
  Rng rng(19);
  const std::vector<FactorMatrix> fs{FactorMatrix(oracle::random_orthonormal(rng, 3, 2)),
                                     FactorMatrix(oracle::random_orthonormal(rng, 4, 1))};
  EXPECT_EQ(reverse_kron_chain(fs), kron(fs[1].matrix(), fs[0].matrix()));
}

TEST(LinalgProperties, SubspaceIdentities) {
  for (const auto& o : {props::subspace_error_identity(200, 1), props::kron_norm_identity(200, 2)}) {
    EXPECT_TRUE(o.pass()) << o.name << " worst " << o.worst;
    EXPECT_GE(o.trials, 100u);
  }
}
