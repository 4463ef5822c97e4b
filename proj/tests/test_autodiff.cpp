#include "oracles.hpp"

#include <sdn/autodiff.hpp>
#include <sdn/error.hpp>

#include <doctest.h>

#include <cmath>

using namespace sdn;
using ad::Tape;
using ad::Var;

namespace {

using Build = std::function<Var(Tape&, Var)>;

// Random nonlinear scalar reduction, so every output entry matters.
Var weighted_sum(Tape& t, Var v, std::uint64_t seed)
{
    const Matrix w = oracle::random_matrix(v.value().rows(), v.value().cols(), seed, -1.0, 1.0);
    return ad::sum(ad::mul(v, t.constant(Tensor(w))));
}

} // namespace

TEST_SUITE("autodiff")
{
    TEST_CASE("tanh at zero")
    {
        Tape t;
        Var x = t.leaf(Tensor::scalar(0.0));
        Var y = ad::tanh(x);
        CHECK(y.value().item() == 0.0);
        t.backward(y);
        CHECK(t.grad(x).item() == 1.0);
    }

    TEST_CASE("matmul gradients are the analytic products")
    {
        const Matrix a = oracle::random_matrix(5, 7, 1);
        const Matrix b = oracle::random_matrix(7, 4, 2);
        const Matrix seed = oracle::random_matrix(5, 4, 3);
        Tape t;
        Var va = t.leaf(Tensor(a));
        Var vb = t.leaf(Tensor(b));
        Var c = ad::matmul(va, vb);
        CHECK((c.mat() - a * b).cwiseAbs().maxCoeff() < 1e-14);
        t.backward(c, seed);
        CHECK((t.grad(va).mat() - seed * b.transpose()).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((t.grad(vb).mat() - a.transpose() * seed).cwiseAbs().maxCoeff() < 1e-13);

        const Matrix numeric = oracle::numeric_gradient(
            [&](const Matrix& m) { return (seed.array() * (m * b).array()).sum(); }, a);
        CHECK((t.grad(va).mat() - numeric).cwiseAbs().maxCoeff() < 1e-6);
    }

    TEST_CASE("sum of squares")
    {
        Tape t;
        Var x = t.leaf(Tensor::vector({1, 2, 3}));
        t.backward(ad::sum(ad::square(x)));
        CHECK(t.grad(x).mat() == Matrix{{2.0, 4.0, 6.0}});
    }

    TEST_CASE("max over rows routes the gradient to the winner")
    {
        Tape t;
        Var x = t.leaf(Tensor(Matrix{{1.0}, {3.0}, {2.0}}));
        auto r = ad::max_over_rows(x);
        t.backward(ad::sum(r.values));
        CHECK(t.grad(x).mat() == Matrix{{0.0}, {1.0}, {0.0}});

        Tape u;
        Var y = u.leaf(Tensor(Matrix{{4.0, 0.0}, {4.0, -1.0}, {1.0, -1.0}}));
        auto m = ad::max_over_rows(y);
        auto n = ad::min_over_rows(y);
        CHECK(m.indices == std::vector<int>{0, 0});
        CHECK(n.indices == std::vector<int>{2, 1});
        u.backward(ad::sum(m.values));
        CHECK(u.grad(y).mat() == Matrix{{1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}});
    }

    TEST_CASE("every primitive matches finite differences")
    {
        std::vector<std::pair<std::string, Build>> cases;
        const Matrix other = oracle::random_matrix(4, 3, 50);
        const Matrix right = oracle::random_matrix(3, 5, 51);
        const Matrix tall = oracle::random_matrix(9, 2, 52);
        const Matrix row = oracle::random_matrix(1, 3, 53);
        auto c = [](Tape& t, const Matrix& m) { return t.constant(Tensor(m)); };

        cases.push_back({"add", [&](Tape& t, Var x) { return weighted_sum(t, ad::add(x, c(t, other)), 1); }});
        cases.push_back({"add self", [&](Tape& t, Var x) { return weighted_sum(t, ad::add(x, x), 1); }});
        cases.push_back({"sub", [&](Tape& t, Var x) { return weighted_sum(t, ad::sub(c(t, other), x), 2); }});
        cases.push_back({"mul", [&](Tape& t, Var x) { return weighted_sum(t, ad::mul(x, c(t, other)), 3); }});
        cases.push_back({"mul self", [&](Tape& t, Var x) { return weighted_sum(t, ad::mul(x, x), 3); }});
        cases.push_back({"scale", [&](Tape& t, Var x) { return weighted_sum(t, ad::scale(x, -1.7), 4); }});
        cases.push_back({"matmul left", [&](Tape& t, Var x) { return weighted_sum(t, ad::matmul(x, c(t, right)), 5); }});
        cases.push_back({"matmul right",
                         [&](Tape& t, Var x) { return weighted_sum(t, ad::matmul(c(t, oracle::random_matrix(5, 4, 54)), x), 6); }});
        cases.push_back({"matmul_rows left", [&](Tape& t, Var x) {
                             return weighted_sum(t, ad::matmul_rows(x, c(t, oracle::random_matrix(7, 2, 9)), 2, 3), 7);
                         }});
        cases.push_back({"matmul_rows right", [&](Tape& t, Var x) {
                             return weighted_sum(t, ad::matmul_rows(c(t, oracle::random_matrix(5, 2, 9)), x, 1, 2), 8);
                         }});
        cases.push_back({"add_row value", [&](Tape& t, Var x) { return weighted_sum(t, ad::add_row(x, c(t, row)), 9); }});
        cases.push_back({"add_row bias", [&](Tape& t, Var x) {
                             return weighted_sum(t, ad::add_row(c(t, other), ad::slice_rows(x, 0, 1)), 10);
                         }});
        cases.push_back({"tanh", [&](Tape& t, Var x) { return weighted_sum(t, ad::tanh(x), 11); }});
        cases.push_back({"relu", [&](Tape& t, Var x) { return weighted_sum(t, ad::relu(x), 12); }});
        cases.push_back({"square", [&](Tape& t, Var x) { return weighted_sum(t, ad::square(x), 13); }});
        cases.push_back({"sqrt", [&](Tape& t, Var x) { return weighted_sum(t, ad::sqrt(ad::add(ad::square(x), c(t, Matrix::Constant(4, 3, 0.5)))), 14); }});
        cases.push_back({"abs", [&](Tape& t, Var x) { return weighted_sum(t, ad::abs(x), 15); }});
        cases.push_back({"sum", [&](Tape& t, Var x) { return ad::sum(ad::square(x)); }});
        cases.push_back({"mean", [&](Tape& t, Var x) { return ad::mean(ad::square(x)); }});
        cases.push_back({"row_sum", [&](Tape& t, Var x) { return weighted_sum(t, ad::row_sum(ad::square(x)), 16); }});
        cases.push_back({"reshape", [&](Tape& t, Var x) { return weighted_sum(t, ad::reshape(x, {2, 6}), 17); }});
        cases.push_back({"slice_rows", [&](Tape& t, Var x) { return weighted_sum(t, ad::slice_rows(x, 1, 2), 18); }});
        cases.push_back({"gather_rows", [&](Tape& t, Var x) {
                             return weighted_sum(t, ad::gather_rows(x, {3, 0, 3, 1, 1}), 19);
                         }});
        cases.push_back({"max_over_rows", [&](Tape& t, Var x) {
                             return weighted_sum(t, ad::max_over_rows(x).values, 20);
                         }});
        cases.push_back({"min_over_rows", [&](Tape& t, Var x) {
                             return weighted_sum(t, ad::min_over_rows(x).values, 21);
                         }});
        cases.push_back({"composite", [&](Tape& t, Var x) {
                             Var h = ad::relu(ad::add_row(ad::matmul(x, c(t, right)), c(t, oracle::random_matrix(1, 5, 3))));
                             return ad::mean(ad::tanh(ad::matmul(h, c(t, tall.topRows(5)))));
                         }});

        for (std::uint64_t trial = 0; trial < 5; ++trial) {
            // Inputs in [-2, 2]; with continuous draws no entry sits on a kink.
            const Matrix x = oracle::random_matrix(4, 3, 1000 + trial);
            for (const auto& [name, build] : cases) {
                INFO(name << " trial " << trial);
                CHECK(oracle::gradient_check(build, x) < 1e-5);
            }
        }
        // Tall input for the matmul_rows right-hand case and reductions over many rows.
        const Matrix x = oracle::random_matrix(7, 2, 77);
        for (const auto& [name, build] : cases) {
            if (name == "matmul_rows right" || name.ends_with("over_rows") || name == "gather_rows") {
                INFO(name << " tall");
                CHECK(oracle::gradient_check(build, x) < 1e-5);
            }
        }
    }

    TEST_CASE("backward is linear in the seed")
    {
        const Matrix x = oracle::random_matrix(6, 4, 5);
        const Matrix w = oracle::random_matrix(4, 3, 6);
        const Matrix s1 = oracle::random_matrix(6, 3, 7), s2 = oracle::random_matrix(6, 3, 8);
        auto grad_for = [&](const Matrix& seed) {
            Tape t;
            Var v = t.leaf(Tensor(x));
            Var y = ad::tanh(ad::matmul(v, t.constant(Tensor(w))));
            t.backward(y, seed);
            return t.grad(v).mat();
        };
        const double a = 0.7, b = -2.3;
        const Matrix combined = grad_for(a * s1 + b * s2);
        const Matrix separate = a * grad_for(s1) + b * grad_for(s2);
        CHECK((combined - separate).cwiseAbs().maxCoeff() < 1e-9);
    }

    TEST_CASE("shape errors")
    {
        Tape t;
        Var a = t.leaf(Tensor(Matrix::Zero(2, 3)));
        Var b = t.leaf(Tensor(Matrix::Zero(3, 2)));
        CHECK_THROWS_AS(ad::add(a, b), ShapeMismatch);
        CHECK_THROWS_AS(ad::mul(a, b), ShapeMismatch);
        CHECK_THROWS_AS(ad::matmul(a, a), ShapeMismatch);
        CHECK_THROWS_AS(ad::reshape(a, {4}), ShapeMismatch);
        CHECK_THROWS_AS(t.backward(a), ShapeMismatch);
        Tape other;
        Var c = other.leaf(Tensor(Matrix::Zero(2, 3)));
        CHECK_THROWS_AS(ad::add(a, c), ShapeMismatch);
    }

    TEST_CASE("non-finite values are rejected")
    {
        Tape t;
        Var neg = t.leaf(Tensor::vector({1.0, -1.0}));
        CHECK_THROWS_AS(ad::sqrt(neg), NonFiniteValue);
        CHECK_THROWS_AS(ad::scale(t.leaf(Tensor::vector({1e308})), 10.0), NonFiniteValue);

        // sqrt(0) is finite but its derivative is not.
        Tape u;
        Var z = u.leaf(Tensor::vector({0.0, 4.0}));
        Var r = ad::sum(ad::sqrt(z));
        CHECK(r.value().item() == 2.0);
        CHECK_THROWS_AS(u.backward(r), NonFiniteValue);
    }

    TEST_CASE("frozen parameters and constants receive no gradient")
    {
        const Tensor w(Matrix{{1.0, 2.0}});
        Tape t;
        Var frozen = t.param(w, false);
        Var live = t.param(w, true);
        Var k = t.constant(Tensor(Matrix{{3.0, 4.0}}));
        t.backward(ad::sum(ad::mul(ad::add(frozen, live), k)));
        CHECK_FALSE(t.has_grad(frozen));
        CHECK_FALSE(t.has_grad(k));
        CHECK(t.grad(live).mat() == Matrix{{3.0, 4.0}});
        CHECK(t.grad(frozen).mat() == Matrix::Zero(1, 2));
    }

    TEST_CASE("repeated backward clears earlier gradients")
    {
        Tape t;
        Var x = t.leaf(Tensor::vector({1.0, 2.0}));
        Var y = ad::sum(ad::square(x));
        t.backward(y);
        t.backward(y);
        CHECK(t.grad(x).mat() == Matrix{{2.0, 4.0}});
        Matrix g = t.take_grad(x);
        CHECK(g == Matrix{{2.0, 4.0}});
    }
}
