#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/LU>
#include <Eigen/QR>

#include "hydrocal/newton.hpp"
#include "hydrocal/rng.hpp"

using namespace hydrocal;

namespace {

Matrix random_matrix(SplitMix64& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

Vector random_vector(SplitMix64& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
  return v;
}

// Over-determined system with a known root: f_i(x) = sum_j a_ij x_j^3 + b_ij x_j - c_i.
struct CubicSystem {
  Matrix a, b;
  Vector c;
  Evaluation operator()(const Vector& x) const {
    Evaluation e;
    e.f = a * x.array().cube().matrix() + b * x - c;
    e.jacobian = a * (3.0 * x.array().square()).matrix().asDiagonal();
    e.jacobian += b;
    return e;
  }
};

}  // namespace

TEST(Merit, Norms) {
  Vector f(3);
  f << 1.0, -2.0, 0.5;
  EXPECT_DOUBLE_EQ(merit(f), 3.5);
  EXPECT_DOUBLE_EQ(merit(f, NormKind::l2), std::sqrt(5.25));
  EXPECT_DOUBLE_EQ(merit(f, NormKind::linf), 2.0);
  EXPECT_DOUBLE_EQ(descent_rate(f), -3.5);
  EXPECT_DOUBLE_EQ(merit(Vector(), NormKind::linf), 0.0);
  EXPECT_STREQ(to_string(NormKind::linf), "linf");
}

TEST(LineSearch, QuadraticBacktrackUnitCase) {
  EXPECT_DOUBLE_EQ(quadratic_backtrack(-1.0, 1.0, 2.0), 0.25);
}

TEST(LineSearch, QuadraticBacktrackMinimisesInterpolant) {
  SplitMix64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const double v0 = rng.uniform(0.1, 2.0);
    const double s = -rng.uniform(0.1, 2.0) * v0;
    const double v1 = v0 + rng.uniform(0.01, 3.0);
    const double mu = quadratic_backtrack(s, v0, v1);
    // g(mu) = v0 + s mu + c mu^2 through g(1) = v1.
    const double c = v1 - v0 - s;
    EXPECT_NEAR(s + 2.0 * c * mu, 0.0, 1e-12);
    EXPECT_GT(mu, 0.0);
    EXPECT_LT(mu, 0.5 + 1e-12);
  }
}

TEST(LineSearch, CubicBacktrackIsCappedMinimiserOfInterpolant) {
  SplitMix64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const double v0 = 1.0;
    const double s = -rng.uniform(0.2, 1.5);
    const double mu2 = rng.uniform(0.3, 1.0);
    const double mu1 = mu2 * rng.uniform(0.1, 0.5);
    const double v2 = v0 + rng.uniform(0.0, 2.0);
    const double v1 = v0 + s * mu1 + rng.uniform(0.0, 1.0) * mu1;
    const double mu = cubic_backtrack(s, v0, mu1, v1, mu2, v2);
    EXPECT_LE(mu, 0.5 * mu1 + 1e-15);
    // Oracle: fit g(t) = v0 + s t + b t^2 + a t^3 through both trials.
    Eigen::Matrix2d m;
    m << mu1 * mu1, mu1 * mu1 * mu1, mu2 * mu2, mu2 * mu2 * mu2;
    const Eigen::Vector2d rhs(v1 - v0 - s * mu1, v2 - v0 - s * mu2);
    const Eigen::Vector2d ba = m.fullPivLu().solve(rhs);
    const double b = ba(0), a = ba(1);
    const double disc = b * b - 3.0 * a * s;
    if (disc >= 0.0 && std::abs(a) > 1e-12) {
      const double root = (-b + std::sqrt(disc)) / (3.0 * a);
      if (root > 0.0 && root < 0.5 * mu1) {
        EXPECT_NEAR(mu, root, 1e-9 * std::max(1.0, root));
      }
    }
  }
}

TEST(Direction, EqualsLeastSquaresSolution) {
  SplitMix64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix j = random_matrix(rng, 12, 7);
    const Vector f = random_vector(rng, 12);
    const Vector dx = newton_direction(j, f);
    const Vector ref = -j.colPivHouseholderQr().solve(f);
    EXPECT_LE((dx - ref).norm(), 1e-10 * ref.norm());
    // Normal equations: J^T (J dx + f) = 0.
    EXPECT_LE((j.transpose() * (j * dx + f)).norm(), 1e-10);
  }
}

TEST(Direction, ScalingDoesNotChangeTheSolution) {
  SplitMix64 rng(5);
  const Matrix j = random_matrix(rng, 10, 6);
  const Vector f = random_vector(rng, 10);
  Vector d(6);
  d << 1e-3, 1.0, 5.0, 0.2, 30.0, 1e2;
  const Vector a = newton_direction(j, f);
  const Vector b = newton_direction(j, f, d);
  EXPECT_LE((a - b).norm(), 1e-8 * a.norm());
}

TEST(Direction, DegeneracyNamesCoordinates) {
  Matrix j(4, 3);
  j << 1, 2, 0, 2, 4, 0, 0, 0, 1, 1, 2, 1;
  const std::vector<std::string> labels = {"alpha", "beta", "gamma"};
  try {
    (void)newton_direction(j, Vector::Ones(4), {}, labels);
    FAIL() << "expected DegeneracyError";
  } catch (const DegeneracyError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("beta"), std::string::npos) << msg;
    EXPECT_NE(msg.find("alpha"), std::string::npos) << msg;
  }
  EXPECT_THROW(newton_direction(Matrix::Ones(2, 3), Vector::Ones(2)), DimensionError);
  EXPECT_THROW(newton_direction(Matrix::Ones(3, 2), Vector::Ones(2)), DimensionError);
}

TEST(Newton, RootIsAFixedPoint) {
  SplitMix64 rng(6);
  CubicSystem sys{random_matrix(rng, 6, 3), random_matrix(rng, 6, 3), Vector()};
  Vector root(3);
  root << 0.5, -0.3, 0.8;
  sys.c = sys.a * root.array().cube().matrix() + sys.b * root;
  const NewtonResult r = newton_solve(sys, root, NewtonOptions{});
  EXPECT_LE(r.iterations, 1);
  EXPECT_LE((r.x - root).norm(), 1e-12);
  EXPECT_LE(r.merit, 1e-12);
}

TEST(Newton, ConvergesOnConsistentOverdeterminedSystem) {
  SplitMix64 rng(8);
  for (int t = 0; t < 10; ++t) {
    CubicSystem sys{random_matrix(rng, 8, 4), random_matrix(rng, 8, 4), Vector()};
    const Vector root = random_vector(rng, 4);
    sys.c = sys.a * root.array().cube().matrix() + sys.b * root;
    NewtonOptions o;
    o.eps_f = 1e-13;
    o.eps_x = 1e-12;
    const Vector x0 = root + 0.3 * random_vector(rng, 4);
    const NewtonResult r = newton_solve(sys, x0, o);
    EXPECT_LE(r.merit, 1e-10);
    EXPECT_LE((r.x - root).norm(), 1e-8);
    EXPECT_FALSE(r.hit_iteration_cap);
  }
}

TEST(Newton, LineSearchProperties) {
  // Far start on a strongly nonlinear problem forces backtracking.
  SplitMix64 rng(9);
  int backtracks = 0;
  for (int t = 0; t < 20; ++t) {
    CubicSystem sys{random_matrix(rng, 7, 3), random_matrix(rng, 7, 3), Vector()};
    const Vector root = random_vector(rng, 3);
    sys.c = sys.a * root.array().cube().matrix() + sys.b * root;
    NewtonResult r;
    try {
      r = newton_solve(sys, Vector(root + 4.0 * random_vector(rng, 3)), NewtonOptions{});
    } catch (const DegeneracyError&) {
      continue;
    }
    double last = std::numeric_limits<double>::infinity();
    for (const LineSearchStep& s : r.steps) {
      EXPECT_GT(s.mu, 0.0);
      EXPECT_LE(s.mu, 1.0);
      if (s.accepted) {
        EXPECT_LE(s.merit, s.base_merit + 1e-4 * s.mu * s.slope);
        EXPECT_LT(s.merit, last);
        last = s.merit;
        EXPECT_EQ(s.next_mu, 1.0);
      } else {
        ++backtracks;
        EXPECT_GE(s.next_mu, 0.1 * s.mu * (1 - 1e-15));
        EXPECT_LE(s.next_mu, 0.5 * s.mu * (1 + 1e-15));
      }
    }
  }
  EXPECT_GT(backtracks, 0);
}

TEST(Newton, ProjectionIsAppliedToTrials) {
  // f(x) = x^2 - 4 over two identical rows; projection folds onto |x|.
  auto fun = [](const Vector& x) {
    Evaluation e;
    e.f = Vector::Constant(2, x(0) * x(0) - 4.0);
    e.jacobian = Matrix::Constant(2, 1, 2.0 * x(0));
    return e;
  };
  NewtonOptions o;
  o.eps_f = 1e-14;
  o.eps_x = 1e-14;
  const NewtonResult r = newton_solve(fun, Vector::Constant(1, 0.5), o, Vector(),
                                      [](Vector& x) { x = x.cwiseAbs(); });
  EXPECT_NEAR(r.x(0), 2.0, 1e-10);
}

TEST(Newton, RejectsBadOptionsAndNonFiniteMerit) {
  auto fun = [](const Vector& x) {
    Evaluation e;
    e.f = Vector::Constant(2, std::log(x(0)));
    e.jacobian = Matrix::Constant(2, 1, 1.0 / x(0));
    return e;
  };
  NewtonOptions bad;
  bad.eps_f = 0.0;
  EXPECT_THROW(newton_solve(fun, Vector::Constant(1, 2.0), bad), DomainError);
  EXPECT_THROW(newton_solve(fun, Vector::Constant(1, -1.0), NewtonOptions{}), NumericError);
}

TEST(Newton, IterationCapIsHonoured) {
  SplitMix64 rng(10);
  CubicSystem sys{random_matrix(rng, 6, 3), random_matrix(rng, 6, 3), Vector()};
  sys.c = random_vector(rng, 6);  // inconsistent: no root
  NewtonOptions o;
  o.max_iterations = 3;
  o.eps_f = 1e-300;
  o.eps_x = 1e-300;
  try {
    const NewtonResult r = newton_solve(sys, random_vector(rng, 3), o);
    EXPECT_LE(r.iterations, 3);
  } catch (const DegeneracyError&) {
  }
}
