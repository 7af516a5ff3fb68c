#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "upi/errors.hpp"
#include "upi/eval.hpp"
#include "upi/network.hpp"

using namespace upi;

namespace {

const Activation kSoftplus{ActivationKind::softplus, 20.0};

// 2-input, 2-class linear model with prescribed weights W[c][j] and zero
// biases, found by probing the flat parameter layout.
Network linear_with_weights(double w00, double w01, double w10, double w11) {
    Network net = make_linear(Shape{2}, 2, kSoftplus, 0);
    const double w[2][2] = {{w00, w01}, {w10, w11}};
    const Tensor e0 = vec({1.0, 0.0});
    const Tensor e1 = vec({0.0, 1.0});
    const Tensor zero_x(Shape{2});
    Tensor target(net.flat_parameters().shape());
    for (std::size_t k = 0; k < target.size(); ++k) {
        Tensor probe(target.shape());
        probe.data()[k] = 1.0;
        net.set_flat_parameters(probe);
        for (std::size_t c = 0; c < 2; ++c) {
            if (net.scores(zero_x).data()[c] != 0.0) continue;  // bias slot
            if (net.scores(e0).data()[c] == 1.0) target.data()[k] = w[c][0];
            if (net.scores(e1).data()[c] == 1.0) target.data()[k] = w[c][1];
        }
    }
    net.set_flat_parameters(target);
    return net;
}

Dataset tiny_blob_testset() { return synthetic_blobs(10, 3, 2, 0.12, 41); }

}  // namespace

TEST_CASE("normalized dissimilarity has exact values on crafted maps") {
    Interpreter interpreter;
    SUBCASE("identical points score zero") {
        const Network net = make_fcn(Shape{3}, 6, 2, kSoftplus, 2);
        const Tensor x = vec({0.3, 0.6, 0.1});
        CHECK(normalized_dissimilarity(net, interpreter, x, x) == doctest::Approx(0.0));
    }
    SUBCASE("orthogonal unit maps score sqrt(2)") {
        // score_c(x) = x_c: maps are the basis vectors of the predicted class.
        const Network net = linear_with_weights(1.0, 0.0, 0.0, 1.0);
        const double d =
            normalized_dissimilarity(net, interpreter, vec({1.0, 0.0}), vec({0.0, 1.0}));
        CHECK(d == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("antipodal maps score 2") {
        // score_0 = x_0, score_1 = -x_0: the two maps are (1,0) and (-1,0).
        const Network net = linear_with_weights(1.0, 0.0, -1.0, 0.0);
        REQUIRE(net.predict(vec({1.0, 0.0})) == 0);
        REQUIRE(net.predict(vec({-1.0, 0.0})) == 1);
        const double d =
            normalized_dissimilarity(net, interpreter, vec({1.0, 0.0}), vec({-1.0, 0.0}));
        CHECK(d == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("universal report matches per-sample recomputation") {
    const Network net = make_fcn(Shape{3}, 8, 2, kSoftplus, 41);
    Interpreter interpreter;
    const Dataset testset = tiny_blob_testset();
    const Perturbation delta(vec({0.1, -0.05, 0.08}), PerturbationBudget{0.2, NormKind::l2});

    EvalOptions opts;
    const DissimilarityReport r =
        mean_dissimilarity_report(net, interpreter, testset, delta, opts);
    CHECK(r.count == r.scores.size());
    CHECK(r.count + r.skipped_degenerate >= testset.size());
    CHECK(r.repeats == 1);
    CHECK(r.repeat_means.empty());
    CHECK(r.clamped);
    CHECK(!r.frozen_labels);
    CHECK(r.attack == EvalAttack::universal(delta).describe());

    double total = 0.0;
    for (std::size_t j = 0; j < r.scores.size(); ++j) {
        const std::size_t i = r.sample_index[j];
        const double direct = normalized_dissimilarity(
            net, interpreter, testset.images[i],
            clamp01(add(testset.images[i], delta.delta())));
        CHECK(r.scores[j] == doctest::Approx(direct).epsilon(1e-12));
        total += r.scores[j];
    }
    CHECK(r.mean == doctest::Approx(total / static_cast<double>(r.count)).epsilon(1e-12));
}

TEST_CASE("clamping and label freezing change what is measured") {
    const Network net = linear_with_weights(1.0, 0.0, 0.0, 1.0);
    Interpreter interpreter;
    Dataset testset;
    testset.images = {vec({1.0, 0.0})};
    testset.labels = {0};
    testset.class_count = 2;
    const Perturbation delta(vec({0.0, 2.0}), PerturbationBudget{2.0, NormKind::l2});

    EvalOptions raw;
    raw.clamp_pixels = false;
    const DissimilarityReport moved =
        mean_dissimilarity_report(net, interpreter, testset, delta, raw);
    CHECK(moved.mean == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    raw.freeze_labels = true;
    const DissimilarityReport frozen =
        mean_dissimilarity_report(net, interpreter, testset, delta, raw);
    CHECK(frozen.mean == doctest::Approx(0.0));
    CHECK(frozen.frozen_labels);
}

TEST_CASE("random baselines record one mean per repeat") {
    const Network net = make_fcn(Shape{3}, 8, 2, kSoftplus, 41);
    Interpreter interpreter;
    const Dataset testset = tiny_blob_testset();
    PerturbationBudget budget{0.25, NormKind::l2};

    EvalOptions opts;
    opts.repeats = 4;
    opts.seed = 9;
    const EvalAttack attack = EvalAttack::random(budget, RandomMode::universal);
    const DissimilarityReport r =
        mean_dissimilarity_report(net, interpreter, testset, attack, opts);
    CHECK(r.repeats == 4);
    CHECK(r.repeat_means.size() == 4);
    for (const double m : r.repeat_means) CHECK(m > 0.0);

    const DissimilarityReport again =
        mean_dissimilarity_report(net, interpreter, testset, attack, opts);
    CHECK(r.mean == again.mean);  // same seed, same draws
    opts.seed = 10;
    const DissimilarityReport other =
        mean_dissimilarity_report(net, interpreter, testset, attack, opts);
    CHECK(r.mean != other.mean);

    opts.repeats = 0;
    CHECK_THROWS_AS(mean_dissimilarity_report(net, interpreter, testset, attack, opts),
                    ValueError);
}

TEST_CASE("per-image attacks produce a score for every healthy sample") {
    const Network net = make_fcn(Shape{3}, 8, 2, kSoftplus, 41);
    Interpreter interpreter;
    const Dataset testset = tiny_blob_testset();
    PerturbationBudget budget{0.25, NormKind::l2};

    EvalOptions opts;
    opts.seed = 3;
    const DissimilarityReport fgm = mean_dissimilarity_report(
        net, interpreter, testset, EvalAttack::per_image_fgm(budget, 1e-3), opts);
    CHECK(fgm.count + fgm.skipped_degenerate == testset.size());
    CHECK(fgm.mean > 0.0);

    PgdConfig pgd;
    pgd.iterations = 5;
    pgd.stepsize = 0.5;
    const DissimilarityReport refined = mean_dissimilarity_report(
        net, interpreter, testset, EvalAttack::per_image_pgd(budget, pgd, 1e-3), opts);
    CHECK(refined.count > 0);
    CHECK(refined.mean > 0.0);
}

TEST_CASE("report rejects misuse") {
    const Network net = make_fcn(Shape{3}, 8, 2, kSoftplus, 41);
    Interpreter interpreter;
    Dataset empty;
    const Perturbation delta(Tensor(Shape{3}), PerturbationBudget{0.1, NormKind::l2});
    CHECK_THROWS_AS(mean_dissimilarity_report(net, interpreter, empty, delta), ValueError);

    EvalAttack missing;  // universal kind with no perturbation attached
    CHECK_THROWS_AS(mean_dissimilarity_report(net, interpreter, tiny_blob_testset(), missing),
                    ValueError);

    const Perturbation wrong(Tensor(Shape{2}), PerturbationBudget{0.1, NormKind::l2});
    CHECK_THROWS_AS(mean_dissimilarity_report(net, interpreter, tiny_blob_testset(), wrong),
                    ShapeError);
}

TEST_CASE("fooling rate counts flipped predictions") {
    const Network net = linear_with_weights(1.0, 0.0, 0.0, 1.0);
    Dataset testset;
    testset.images = {vec({1.0, 0.0}), vec({0.0, 1.0})};
    testset.labels = {0, 1};
    testset.class_count = 2;

    const Perturbation null_delta(Tensor(Shape{2}), PerturbationBudget{1.0, NormKind::l2});
    const FoolingReport none = fooling_rate(net, testset, null_delta);
    CHECK(none.fooled == 0);
    CHECK(none.count == 2);
    CHECK(none.fraction == doctest::Approx(0.0));

    // Moves (1,0) across the diagonal; (0,1) clamps back to itself.
    const Perturbation flip(vec({-0.8, 0.8}), PerturbationBudget{2.0, NormKind::l2});
    const FoolingReport half = fooling_rate(net, testset, flip);
    CHECK(half.fooled == 1);
    CHECK(half.count == 2);
    CHECK(half.fraction == doctest::Approx(0.5));

    const Perturbation wrong(Tensor(Shape{3}), PerturbationBudget{1.0, NormKind::l2});
    CHECK_THROWS_AS(fooling_rate(net, testset, wrong), ShapeError);
}

TEST_CASE("cross correlations have exact values for crafted directions") {
    PerturbationBudget budget{1.0, NormKind::l2};
    const Perturbation a(vec({1.0, 0.0}), budget);
    const Perturbation b(vec({0.0, 1.0}), budget);
    const Perturbation c(vec({-1.0, 0.0}), budget);

    const CorrelationMatrix m = cross_correlation_matrix({a, b, c});
    REQUIRE(m.size() == 3);
    CHECK(m.labels[0] == "delta_0");
    CHECK(m.at(0, 0) == 1.0);  // diagonal is exactly one by construction
    CHECK(m.at(1, 1) == 1.0);
    CHECK(m.at(0, 1) == doctest::Approx(0.0));
    CHECK(m.at(0, 2) == doctest::Approx(-1.0));
    CHECK(m.at(2, 0) == m.at(0, 2));

    const CorrelationMatrix named = cross_correlation_matrix({a, b}, {"x", "y"});
    CHECK(named.labels[1] == "y");
    CHECK_THROWS_AS(cross_correlation_matrix({a, b}, {"only_one"}), ValueError);
    CHECK_THROWS_AS(cross_correlation_matrix({}), ValueError);

    const Perturbation zero(Tensor(Shape{2}), budget);
    CHECK_THROWS_AS(cross_correlation_matrix({a, zero}), ValueError);

    const Perturbation odd(Tensor(Shape{3}), budget);
    CHECK_THROWS_AS(cross_correlation_matrix({a, odd}), ShapeError);
}

TEST_CASE("csv layouts are frozen") {
    DissimilarityReport r;
    r.sample_index = {0, 2};
    r.scores = {0.5, 0.25};
    r.mean = 0.375;
    r.skipped_degenerate = 1;
    CHECK(to_csv(r) ==
          "kind,sample,score,skipped\n"
          "sample,0,0.5,\n"
          "sample,2,0.25,\n"
          "summary,,0.375,1\n");

    FoolingReport f;
    f.fooled = 1;
    f.count = 2;
    f.fraction = 0.5;
    CHECK(to_csv(f) == "fooled,count,fraction\n1,2,0.5\n");

    CorrelationMatrix m;
    m.labels = {"a", "b"};
    m.values = {1.0, 0.5, 0.5, 1.0};
    CHECK(to_csv(m) ==
          "label,a,b\n"
          "a,1,0.5\n"
          "b,0.5,1\n");
}
