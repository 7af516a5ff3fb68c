#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "upi/attack.hpp"
#include "upi/errors.hpp"
#include "upi/network.hpp"
#include "upi/rng.hpp"

using namespace upi;

namespace {

const Activation kSoftplus{ActivationKind::softplus, 20.0};

// D_i(v) = w_i . v: constant gradients make the stochastic power iteration
// exact, so it must reproduce the deterministic singular-vector oracle.
class LinearFamilyObjective : public PerturbationObjective {
public:
    explicit LinearFamilyObjective(std::vector<Tensor> rows)
        : rows_(std::move(rows)), shape_(rows_.front().shape()) {}
    std::size_t sample_count() const override { return rows_.size(); }
    const Shape& shape() const override { return shape_; }
    double value(std::size_t i, const Tensor& v) const override { return dot(rows_[i], v); }
    GradientResult value_and_gradient(std::size_t i, const Tensor& v) const override {
        return {dot(rows_[i], v), rows_[i]};
    }

private:
    std::vector<Tensor> rows_;
    Shape shape_;
};

GradientMatrix matrix_of(std::vector<Tensor> rows) {
    GradientMatrix g;
    g.row_shape = rows.front().shape();
    g.rows = std::move(rows);
    return g;
}

double cosine(const Tensor& a, const Tensor& b) {
    return dot(a, b) / (l2_norm(a) * l2_norm(b));
}

}  // namespace

TEST_CASE("singular vector oracle on hand-solvable matrices") {
    SUBCASE("single row") {
        const SingularVectorResult r = top_right_singular_vector_oracle(matrix_of({vec({3.0, 4.0})}));
        CHECK(r.vector.data()[0] == doctest::Approx(0.6).epsilon(1e-10));
        CHECK(r.vector.data()[1] == doctest::Approx(0.8).epsilon(1e-10));
        CHECK(r.sigma1 == doctest::Approx(5.0).epsilon(1e-10));
        CHECK(r.sigma2 == doctest::Approx(0.0).epsilon(1e-8));
        CHECK(!r.near_tie);
    }
    SUBCASE("sign convention puts the largest entry positive") {
        const SingularVectorResult r =
            top_right_singular_vector_oracle(matrix_of({vec({-3.0, 4.0})}));
        CHECK(r.vector.data()[0] == doctest::Approx(-0.6).epsilon(1e-10));
        CHECK(r.vector.data()[1] == doctest::Approx(0.8).epsilon(1e-10));
        CHECK(r.sigma1 == doctest::Approx(5.0).epsilon(1e-10));
    }
    SUBCASE("axis-aligned rows separate cleanly") {
        const SingularVectorResult r =
            top_right_singular_vector_oracle(matrix_of({vec({2.0, 0.0}), vec({0.0, 1.0})}));
        CHECK(r.vector.data()[0] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::abs(r.vector.data()[1]) < 1e-8);
        CHECK(r.sigma1 == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(r.sigma2 == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(!r.near_tie);
    }
    SUBCASE("symmetric pair has the diagonal direction") {
        // G^T G = [[5,4],[4,5]]: eigenvalues 9 and 1.
        const SingularVectorResult r =
            top_right_singular_vector_oracle(matrix_of({vec({2.0, 1.0}), vec({1.0, 2.0})}));
        const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
        CHECK(r.vector.data()[0] == doctest::Approx(inv_sqrt2).epsilon(1e-9));
        CHECK(r.vector.data()[1] == doctest::Approx(inv_sqrt2).epsilon(1e-9));
        CHECK(r.sigma1 == doctest::Approx(3.0).epsilon(1e-9));
        CHECK(r.sigma2 == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("identity rows are flagged as a tie") {
        const SingularVectorResult r =
            top_right_singular_vector_oracle(matrix_of({vec({1.0, 0.0}), vec({0.0, 1.0})}));
        CHECK(r.sigma1 == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(r.sigma2 == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(r.near_tie);
    }
    SUBCASE("degenerate matrices are rejected") {
        CHECK_THROWS_AS(top_right_singular_vector_oracle(GradientMatrix{}), ValueError);
        CHECK_THROWS_AS(top_right_singular_vector_oracle(
                            matrix_of({Tensor(Shape{2}), Tensor(Shape{2})})),
                        ValueError);
    }
}

TEST_CASE("gradient matrix shares one noise sequence across samples") {
    const Network net = make_fcn(Shape{3}, 6, 3, kSoftplus, 3);
    Interpreter interpreter;
    const Tensor x = vec({0.2, 0.5, 0.8});
    const Tensor y = vec({0.9, 0.1, 0.4});
    const InterpretationObjective obj(net, interpreter, {x, x, y});

    const GradientMatrix g = gradient_matrix_core(obj, 1e-3, 2, 17);
    REQUIRE(g.rows.size() == 3);
    CHECK(g.skipped == 0);
    // Duplicate samples see the same z draws, so their rows match bitwise.
    for (std::size_t j = 0; j < g.rows[0].size(); ++j)
        CHECK(g.rows[0].data()[j] == g.rows[1].data()[j]);
    CHECK(l2_norm(sub(g.rows[0], g.rows[2])) > 1e-9);
    CHECK(g.provenance[0].sample_index == 0);
    CHECK(g.provenance[2].sample_index == 2);
    CHECK(g.provenance[0].noise_seed == g.provenance[2].noise_seed);

    const GradientMatrix again = gradient_matrix_core(obj, 1e-3, 2, 17);
    for (std::size_t j = 0; j < g.rows[0].size(); ++j)
        CHECK(g.rows[0].data()[j] == again.rows[0].data()[j]);
    const GradientMatrix other = gradient_matrix_core(obj, 1e-3, 2, 18);
    CHECK(l2_norm(sub(g.rows[0], other.rows[0])) > 0.0);

    CHECK_THROWS_AS(gradient_matrix_core(obj, 1e-3, 0, 17), ValueError);
    CHECK_THROWS_AS(gradient_matrix_core(obj, 0.0, 2, 17), ValueError);
}

TEST_CASE("constant-gradient rows make the matrix exact") {
    const LinearFamilyObjective obj({vec({2.0, 1.0}), vec({1.0, 2.0})});
    const GradientMatrix g = gradient_matrix_core(obj, 1e-6, 3, 9);
    REQUIRE(g.rows.size() == 2);
    CHECK(g.rows[0].data()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g.rows[0].data()[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.rows[1].data()[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stochastic power iteration recovers the oracle direction") {
    std::vector<Tensor> rows = {vec({2.0, 1.0}), vec({1.0, 2.0})};
    const SingularVectorResult oracle = top_right_singular_vector_oracle(matrix_of(rows));
    const LinearFamilyObjective obj(std::move(rows));
    PerturbationBudget budget{0.4, NormKind::l2};

    UpiPcaConfig cfg;
    cfg.base.epochs = 40;
    cfg.base.batch_size = 2;
    cfg.base.stepsize = 0.5;
    cfg.base.noise_sigma = 1e-6;
    cfg.base.seed = 7;

    SUBCASE("fgm rows") {
        cfg.variant = UpiPcaVariant::fgm;
        const UniversalAttackResult r = upi_pca_core(obj, budget, cfg);
        CHECK(r.epoch_objective.size() == 40);
        CHECK(l2_norm(r.perturbation.delta()) == doctest::Approx(0.4).epsilon(1e-12));
        // Signed: the held-out sign pick must agree with the ascent direction.
        CHECK(cosine(r.perturbation.delta(), oracle.vector) >= 0.999);
        CHECK(r.skipped_evaluations == 0);
    }
    SUBCASE("pgd rows point the same way for a linear family") {
        cfg.variant = UpiPcaVariant::pgd;
        cfg.pgd.iterations = 5;
        cfg.pgd.stepsize = 2.0;
        const UniversalAttackResult r = upi_pca_core(obj, budget, cfg);
        CHECK(l2_norm(r.perturbation.delta()) == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(cosine(r.perturbation.delta(), oracle.vector) >= 0.999);
    }
    SUBCASE("box budgets are rejected") {
        PerturbationBudget box{0.4, NormKind::linf};
        CHECK_THROWS_AS(upi_pca_core(obj, box, cfg), ValueError);
    }
}

TEST_CASE("power iteration tracks the dominant row as weights shift") {
    // One strong row among weak ones: v1 must align with it.
    std::vector<Tensor> rows = {vec({0.1, 0.0, 10.0}), vec({0.2, 0.1, 0.0}),
                                vec({0.0, 0.3, 0.0})};
    const SingularVectorResult r = top_right_singular_vector_oracle(matrix_of(std::move(rows)));
    CHECK(std::abs(r.vector.data()[2]) > 0.99);
    CHECK(r.sigma1 > 9.9);
}

TEST_CASE("upi_pca wrapper runs on a dataset") {
    Dataset data = synthetic_blobs(8, 3, 2, 0.1, 5);
    const Network net = make_fcn(Shape{3}, 6, 2, kSoftplus, 5);
    Interpreter interpreter;
    PerturbationBudget budget{0.2, NormKind::l2};
    UpiPcaConfig cfg;
    cfg.base.epochs = 2;
    cfg.base.batch_size = 4;
    cfg.base.noise_sigma = budget.epsilon / 100.0;
    cfg.base.seed = 5;
    const UniversalAttackResult r = upi_pca(net, interpreter, data, budget, cfg);
    CHECK(l2_norm(r.perturbation.delta()) == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(r.epoch_objective.size() == 2);
}
