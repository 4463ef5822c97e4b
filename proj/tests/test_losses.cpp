#include "oracles.hpp"

#include <sdn/datagen.hpp>
#include <sdn/error.hpp>
#include <sdn/laplacian.hpp>
#include <sdn/losses.hpp>

#include <Eigen/Geometry>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sdn;
using ad::Tape;
using ad::Var;

namespace {

// Dense Laplacian from the definition, with angles from atan2.
Matrix dense_laplacian(const Mesh& m, LaplacianVariant variant)
{
    const int n = m.num_vertices();
    Matrix w = Matrix::Zero(n, n);
    std::vector<double> area(static_cast<std::size_t>(n), 0.0);
    for (const Face& f : m.faces()) {
        const Vec3 p[3] = {m.vertex(f[0]), m.vertex(f[1]), m.vertex(f[2])};
        const double a = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
        for (int k = 0; k < 3; ++k) {
            area[static_cast<std::size_t>(f[k])] += a / 3.0;
            const int i = f[(k + 1) % 3], j = f[(k + 2) % 3];
            if (variant == LaplacianVariant::uniform) {
                w(i, j) = w(j, i) = 1.0;
            } else {
                const Vec3 u = p[(k + 1) % 3] - p[k], v = p[(k + 2) % 3] - p[k];
                const double angle = std::atan2(u.cross(v).norm(), u.dot(v));
                w(i, j) += 0.5 / std::tan(angle);
                w(j, i) = w(i, j);
            }
        }
    }
    w = w.cwiseMax(0.0);
    Matrix l = -w;
    for (int i = 0; i < n; ++i) l(i, i) = w.row(i).sum();
    if (variant == LaplacianVariant::cotangent) {
        for (int i = 0; i < n; ++i) l.row(i) /= area[static_cast<std::size_t>(i)];
    }
    return l;
}

double edge_oracle(const Mesh& t, const Points& d)
{
    double total = 0.0;
    for (const auto& e : t.edges()) {
        const double l0 = (t.vertices().row(e[0]) - t.vertices().row(e[1])).norm();
        const double l1 = (d.row(e[0]) - d.row(e[1])).norm();
        total += std::abs(l1 / l0 - 1.0);
    }
    return total / static_cast<double>(t.num_edges());
}

double laplacian_oracle(const Matrix& l, const Points& v, const Points& d)
{
    const Matrix diff = l * Matrix(d) - l * Matrix(v);
    return diff.squaredNorm() / static_cast<double>(v.rows());
}

Mesh two_triangles()
{
    Points v(4, 3);
    v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1.2, 0.9, 0.3;
    return Mesh(v, {{0, 1, 2}, {1, 3, 2}});
}

Var constant(Tape& t, const Points& p)
{
    return t.constant(Tensor(Matrix(p)));
}

} // namespace

TEST_SUITE("losses")
{
    TEST_CASE("supervised loss")
    {
        const Points a = oracle::random_points(20, 1), b = oracle::random_points(20, 2);
        CHECK(supervised_loss(a, a) == 0.0);
        Points p(1, 3), q(1, 3);
        p << 0.5, 0.5, 0.5;
        q << 1.5, 0.5, 0.5;
        CHECK(supervised_loss(p, q) == 1.0);
        double direct = 0.0;
        for (int i = 0; i < 20; ++i) {
            for (int k = 0; k < 3; ++k) direct += (a(i, k) - b(i, k)) * (a(i, k) - b(i, k));
        }
        CHECK(std::abs(supervised_loss(a, b) - direct) < 1e-12);
        CHECK_THROWS_AS(supervised_loss(a, oracle::random_points(19, 3)), CardinalityMismatch);

        const Points target = oracle::random_points(6, 4);
        CHECK(oracle::gradient_check([&](Tape& t, Var x) { return supervised_loss(x, constant(t, target)); },
                                     oracle::random_points(6, 5)) < 1e-6);
    }

    TEST_CASE("chamfer examples")
    {
        Points a(1, 3), b(2, 3);
        a << 0, 0, 0;
        b << 1, 0, 0, 2, 0, 0;
        CHECK(chamfer(a, b, ChamferMode::a_to_b) == 1.0);
        CHECK(chamfer(a, b, ChamferMode::b_to_a) == 5.0);
        CHECK(chamfer(a, b, ChamferMode::symmetric) == 6.0);
        const Points r = oracle::random_points(25, 6);
        for (auto mode : {ChamferMode::a_to_b, ChamferMode::b_to_a, ChamferMode::symmetric}) {
            CHECK(chamfer(r, r, mode) == 0.0);
        }
        CHECK(parse_chamfer_mode("a_to_b") == ChamferMode::a_to_b);
        CHECK(to_string(ChamferMode::b_to_a) == "b_to_a");
        CHECK_THROWS_AS(parse_chamfer_mode("both"), PreconditionError);
    }

    TEST_CASE("chamfer matches the brute-force double loop")
    {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const Points a = oracle::random_points(30, 10 + s), b = oracle::random_points(40, 20 + s, -0.5, 1.5);
            for (auto mode : {ChamferMode::a_to_b, ChamferMode::b_to_a, ChamferMode::symmetric}) {
                const double v = chamfer(a, b, mode);
                CHECK(v >= 0.0);
                CHECK(std::abs(v - oracle::chamfer(a, b, mode)) < 1e-12);
            }
            CHECK(chamfer(a, b, ChamferMode::a_to_b) == chamfer(b, a, ChamferMode::b_to_a));
            CHECK(chamfer(a, b, ChamferMode::symmetric) == chamfer(b, a, ChamferMode::symmetric));
        }
    }

    TEST_CASE("chamfer gradients in every mode")
    {
        const Points other = oracle::random_points(15, 30);
        for (auto mode : {ChamferMode::a_to_b, ChamferMode::b_to_a, ChamferMode::symmetric}) {
            const Points x = oracle::random_points(12, 31);
            CHECK(oracle::gradient_check([&](Tape& t, Var v) { return chamfer(v, constant(t, other), mode); }, x) <
                  1e-6);
            CHECK(oracle::gradient_check([&](Tape& t, Var v) { return chamfer(constant(t, other), v, mode); }, x) <
                  1e-6);
        }
    }

    TEST_CASE("edge loss")
    {
        const auto t = make_template(TemplateKind::biped, 0);
        const Mesh& m = t.mesh;
        CHECK(edge_loss(m, m.vertices()) < 1e-15);
        CHECK(std::abs(edge_loss(m, 2.0 * m.vertices()) - 1.0) < 1e-12);
        for (double s : {0.5, 1.5, 3.0}) CHECK(std::abs(edge_loss(m, s * m.vertices()) - std::abs(s - 1.0)) < 1e-12);

        const Points deformed = m.vertices() + 0.02 * oracle::random_points(m.num_vertices(), 40);
        const double base = edge_loss(m, deformed);
        CHECK(std::abs(base - edge_oracle(m, deformed)) < 1e-12);
        const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
        Points moved = (deformed * r.transpose()).rowwise() + Eigen::RowVector3d(0.3, -1.0, 2.0);
        CHECK(std::abs(edge_loss(m, moved) - base) < 1e-9);

        Points dup = oracle::tetrahedron().vertices();
        dup.row(3) = dup.row(0);
        CHECK_THROWS_AS(edge_loss(oracle::tetrahedron().with_vertices(dup), dup), DegenerateEdge);

        const Mesh tet = oracle::tetrahedron();
        CHECK(oracle::gradient_check([&](Tape&, Var v) { return edge_loss(tet, v); },
                                     tet.vertices() + 0.1 * oracle::random_points(4, 41)) < 1e-6);
        CHECK_THROWS_AS(edge_loss(tet, oracle::random_points(5, 1)), CardinalityMismatch);
    }

    TEST_CASE("uniform laplacian of a tetrahedron")
    {
        const auto op = build_laplacian(oracle::tetrahedron(), LaplacianVariant::uniform);
        const Matrix dense = Matrix(op.matrix);
        Matrix expected = -Matrix::Ones(4, 4);
        expected.diagonal().setConstant(3.0);
        CHECK(dense == expected);
    }

    TEST_CASE("cotangent weights on an equilateral grid")
    {
        const Mesh m = oracle::equilateral_grid(5);
        const auto op = build_laplacian(m, LaplacianVariant::cotangent);
        // Count faces per edge: interior edges have two.
        std::map<Edge, int> faces_per_edge;
        for (const Face& f : m.faces()) {
            for (int k = 0; k < 3; ++k) {
                const int a = f[k], b = f[(k + 1) % 3];
                ++faces_per_edge[{std::min(a, b), std::max(a, b)}];
            }
        }
        int interior = 0;
        for (std::size_t e = 0; e < m.edges().size(); ++e) {
            const double expected = faces_per_edge[m.edges()[e]] == 2 ? 1.0 / std::sqrt(3.0) : 0.5 / std::sqrt(3.0);
            interior += faces_per_edge[m.edges()[e]] == 2;
            CHECK(std::abs(op.edge_weights[e] - expected) < 1e-9);
        }
        CHECK(interior > 10);
    }

    TEST_CASE("laplacian structure on generated meshes")
    {
        for (auto kind : {TemplateKind::biped, TemplateKind::quadruped, TemplateKind::tube}) {
            const Mesh m = make_template(kind, 0).mesh;
            for (auto variant : {LaplacianVariant::uniform, LaplacianVariant::cotangent}) {
                const auto op = build_laplacian(m, variant);
                const Matrix dense = Matrix(op.matrix);
                CHECK(dense.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
                // Off-diagonal sparsity is exactly the edge set.
                int off = 0;
                for (int i = 0; i < dense.rows(); ++i) {
                    for (int j = 0; j < dense.cols(); ++j) off += i != j && dense(i, j) != 0.0;
                }
                int positive_edges = 0;
                for (double w : op.edge_weights) positive_edges += w > 0.0;
                CHECK(off == 2 * positive_edges);
                if (variant == LaplacianVariant::uniform) {
                    CHECK(off == 2 * m.num_edges());
                    std::vector<int> degree(static_cast<std::size_t>(m.num_vertices()), 0);
                    for (const auto& e : m.edges()) ++degree[static_cast<std::size_t>(e[0])], ++degree[static_cast<std::size_t>(e[1])];
                    for (int i = 0; i < m.num_vertices(); ++i) CHECK(dense(i, i) == degree[static_cast<std::size_t>(i)]);
                    CHECK((dense - dense.transpose()).isZero(0.0));
                }
                CHECK((dense - dense_laplacian(m, variant)).cwiseAbs().maxCoeff() < 1e-9);
            }
        }
    }

    TEST_CASE("non-manifold edges are rejected")
    {
        Points v(5, 3);
        v << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1;
        const Mesh fan(v, {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}});
        CHECK_THROWS_AS(build_laplacian(fan, LaplacianVariant::uniform), NonManifoldEdge);
        CHECK_THROWS_AS(build_laplacian(fan, LaplacianVariant::cotangent), NonManifoldEdge);
    }

    TEST_CASE("laplacian loss")
    {
        const Mesh m = make_template(TemplateKind::tube, 0).mesh;
        for (auto variant : {LaplacianVariant::uniform, LaplacianVariant::cotangent}) {
            const auto op = build_laplacian(m, variant);
            const Points& v = m.vertices();
            CHECK(laplacian_loss(op, v, v) == 0.0);
            const Points shifted = v.rowwise() + Eigen::RowVector3d(0.5, -0.25, 2.0);
            CHECK(laplacian_loss(op, v, shifted) < 1e-20);
            const Points d = v + 0.05 * oracle::random_points(m.num_vertices(), 50);
            const double oracle_value = laplacian_oracle(dense_laplacian(m, variant), v, d);
            CHECK(std::abs(laplacian_loss(op, v, d) - oracle_value) < 1e-10 * std::max(1.0, oracle_value));
            CHECK_THROWS_AS(laplacian_loss(op, v, oracle::random_points(3, 1)), CardinalityMismatch);
        }

        const Mesh tet = oracle::tetrahedron();
        const auto op = build_laplacian(tet, LaplacianVariant::cotangent);
        CHECK(oracle::gradient_check([&](Tape&, Var x) { return laplacian_loss(op, tet.vertices(), x); },
                                     tet.vertices() + 0.1 * oracle::random_points(4, 51)) < 1e-6);
    }

    TEST_CASE("unsupervised loss")
    {
        const Mesh m = two_triangles();
        const auto op = build_laplacian(m, LaplacianVariant::cotangent);
        const Points& v = m.vertices();
        CHECK(unsupervised_loss(m, v, v, LossWeights{}, op) == 0.0);

        const Points d = v + 0.1 * oracle::random_points(4, 60);
        const Points target = oracle::random_points(7, 61);
        CHECK(unsupervised_loss(m, d, target, LossWeights{0.0, 0.0}, op) ==
              chamfer(d, target, ChamferMode::symmetric));

        const double expected = oracle::chamfer(d, target, ChamferMode::symmetric) +
                                5e-3 * laplacian_oracle(dense_laplacian(m, LaplacianVariant::cotangent), v, d) +
                                5e-3 * edge_oracle(m, d);
        CHECK(std::abs(unsupervised_loss(m, d, target, LossWeights{5e-3, 5e-3}, op) - expected) < 1e-12);

        CHECK(oracle::gradient_check(
                  [&](Tape& t, Var x) { return unsupervised_loss(m, x, constant(t, target), LossWeights{0.5, 0.5}, op); },
                  d) < 1e-6);
        CHECK_THROWS_AS(unsupervised_loss(m, d, target, LossWeights{-1.0, 0.0}, op), PreconditionError);
    }
}
