#include "tdist/probmodel.hpp"

#include "oracles.hpp"
#include "tdist/serialize.hpp"

#include <doctest.h>

#include <cmath>

using namespace tdist;

namespace {

// Two tight, well-separated classes; K=1 likelihoods.
ClassConditionalModel tight_two_class_model(const Eigen::VectorXd& prior_probs,
                                            std::uint64_t seed = 1) {
    const LabeledDataset ds = oracles::two_class_dataset(300, 2, 20.0, Environment::source, seed);
    return fit_class_conditional(ds, make_prior(prior_probs), 1, FitConfig{});
}

Eigen::VectorXd point2(double a, double b) {
    Eigen::VectorXd x(2);
    x << a, b;
    return x;
}

}  // namespace

TEST_CASE("prior validation") {
    Eigen::VectorXd good(2);
    good << 0.4, 0.6;
    CHECK_NOTHROW(make_prior(good));

    Eigen::VectorXd bad_sum(2);
    bad_sum << 0.5, 0.6;
    CHECK_THROWS_WITH_AS(make_prior(bad_sum), "prior must sum to 1", std::invalid_argument);

    Eigen::VectorXd negative(2);
    negative << -0.1, 1.1;
    CHECK_THROWS_AS(make_prior(negative), std::invalid_argument);
}

TEST_CASE("empirical prior from the health-state counts") {
    Eigen::MatrixXd f = oracles::gaussian_rows(2269, 1, 0.0, 1.0, 9);
    std::vector<long long> labels(789, 0);
    labels.insert(labels.end(), 1480, 1);
    const LabeledDataset ds = make_dataset(f, labels, {"x"}, Environment::source);
    const Prior prior = empirical_prior(ds);
    CHECK(prior.kind == PriorKind::empirical);
    // 789 / 2269
    CHECK(prior.probabilities(0) == doctest::Approx(0.34773027765535478).epsilon(1e-12));
    CHECK(prior.probabilities(1) == doctest::Approx(1.0 - 0.34773027765535478).epsilon(1e-12));
}

TEST_CASE("fit recovers per-class means") {
    Eigen::VectorXd prior(2);
    prior << 0.5, 0.5;
    const LabeledDataset ds = oracles::two_class_dataset(500, 2, 8.0, Environment::source, 13);
    const ClassConditionalModel model = fit_class_conditional(ds, make_prior(prior), 1, {});

    // Oracle: per-class sample means (K=1 EM is the closed-form MLE).
    const auto split = split_by_class(ds);
    for (int y = 0; y < 2; ++y) {
        const Eigen::VectorXd mean = split.at(y).colwise().mean().transpose();
        CHECK((model.likelihood(y).components()[0].mean - mean).norm() < 1e-10);
    }
}

TEST_CASE("degenerate prior collapses the marginal onto one class") {
    Eigen::VectorXd prior(2);
    prior << 1.0, 0.0;
    const ClassConditionalModel model = tight_two_class_model(prior);
    for (const auto& x : {point2(0, 0), point2(20, 20), point2(-3, 7)}) {
        CHECK(model.marginal_log_density(x) ==
              doctest::Approx(model.likelihood(0).log_density(x)).epsilon(1e-14));
    }
    // The explicit marginal mixture contains only class 0's component.
    CHECK(model.marginal_gmm().component_count() ==
          model.likelihood(0).component_count());
}

TEST_CASE("marginal equals the prior-weighted class densities") {
    Eigen::VectorXd prior(2);
    prior << 0.3, 0.7;
    const ClassConditionalModel model = tight_two_class_model(prior);

    SUBCASE("single-class model returns the class density") {
        Eigen::MatrixXd f = oracles::gaussian_rows(50, 1, 0.0, 1.0, 3);
        const LabeledDataset ds =
            make_dataset(f, std::vector<long long>(50, 0), {"x"}, Environment::source);
        Eigen::VectorXd one(1);
        one << 1.0;
        const ClassConditionalModel single =
            fit_class_conditional(ds, make_prior(one), 1, {});
        Eigen::VectorXd x(1);
        x << 0.4;
        CHECK(single.marginal_log_density(x) ==
              doctest::Approx(single.likelihood(0).log_density(x)).epsilon(1e-14));
    }

    SUBCASE("direct recomputation agrees to 1e-12 relative") {
        for (const auto& x : {point2(1, 2), point2(10, 10), point2(19, 21)}) {
            double direct = 0.0;
            for (int y = 0; y < 2; ++y) {
                direct += prior(y) * std::exp(model.likelihood(y).log_density(x));
            }
            CHECK(std::exp(model.marginal_log_density(x)) ==
                  doctest::Approx(direct).epsilon(1e-12));
        }
    }

    SUBCASE("marginal dominates every prior-weighted class density") {
        for (const auto& x : {point2(0, 0), point2(5, 5), point2(20, 20)}) {
            const double marginal = std::exp(model.marginal_log_density(x));
            for (int y = 0; y < 2; ++y) {
                const double part = prior(y) * std::exp(model.likelihood(y).log_density(x));
                CHECK(marginal >= part - 1e-12);
            }
        }
    }
}

TEST_CASE("symmetric two-class marginal at the midpoint") {
    Eigen::VectorXd mu0(1), mu1(1);
    mu0 << -2.0;
    mu1 << 2.0;
    Eigen::MatrixXd cov(1, 1);
    cov << 1.0;
    Eigen::VectorXd prior(2);
    prior << 0.5, 0.5;
    const ClassConditionalModel model(
        {GmmModel({GaussianComponent{1.0, mu0, cov}}),
         GmmModel({GaussianComponent{1.0, mu1, cov}})},
        make_prior(prior), Environment::source);
    Eigen::VectorXd x(1);
    x << 0.0;
    // Both classes contribute equally: marginal = p(x|0) = p(x|1).
    CHECK(model.marginal_log_density(x) ==
          doctest::Approx(model.likelihood(0).log_density(x)).epsilon(1e-14));
}

TEST_CASE("posterior follows Bayes' rule") {
    SUBCASE("equal likelihoods reduce the posterior to the prior") {
        Eigen::VectorXd mu(1);
        mu << 0.0;
        Eigen::MatrixXd cov(1, 1);
        cov << 1.0;
        Eigen::VectorXd prior(2);
        prior << 0.9, 0.1;
        const ClassConditionalModel model(
            {GmmModel({GaussianComponent{1.0, mu, cov}}),
             GmmModel({GaussianComponent{1.0, mu, cov}})},
            make_prior(prior), Environment::source);
        Eigen::VectorXd x(1);
        x << 0.7;
        const Eigen::VectorXd post = model.posterior(x);
        CHECK(post(0) == doctest::Approx(0.9).epsilon(1e-12));
        CHECK(post(1) == doctest::Approx(0.1).epsilon(1e-12));
    }

    SUBCASE("a point at one tight class mean dominates") {
        Eigen::VectorXd prior(2);
        prior << 0.5, 0.5;
        const ClassConditionalModel model = tight_two_class_model(prior);
        const Eigen::VectorXd post = model.posterior(point2(0.0, 0.0));
        CHECK(post(0) > 0.999);
    }

    SUBCASE("brute-force renormalization oracle agrees to 1e-12") {
        Eigen::VectorXd prior(2);
        prior << 0.25, 0.75;
        const ClassConditionalModel model = tight_two_class_model(prior, 21);
        for (const auto& x : {point2(0, 1), point2(10, 9), point2(21, 19)}) {
            Eigen::VectorXd direct(2);
            for (int y = 0; y < 2; ++y) {
                direct(y) = prior(y) * std::exp(model.likelihood(y).log_density(x));
            }
            direct /= direct.sum();
            const Eigen::VectorXd post = model.posterior(x);
            CHECK(post(0) == doctest::Approx(direct(0)).epsilon(1e-12));
            CHECK(post(1) == doctest::Approx(direct(1)).epsilon(1e-12));
            CHECK(post.sum() == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("posterior falls back to the prior when all densities underflow") {
    Eigen::VectorXd prior(2);
    prior << 0.8, 0.2;
    const ClassConditionalModel model = tight_two_class_model(prior);
    PosteriorDiagnostics diag;
    // Far enough that the quadratic form overflows: log densities are -inf.
    const Eigen::VectorXd post = model.posterior(point2(1e170, -1e170), diag);
    CHECK(diag.prior_fallbacks == 1);
    CHECK(post(0) == doctest::Approx(0.8));
    CHECK(post(1) == doctest::Approx(0.2));
}

TEST_CASE("posterior argmax ignores a common log-density shift") {
    Eigen::VectorXd scores(3);
    scores << -500.0, -498.2, -503.0;
    const Eigen::VectorXd base = normalized_from_log(scores);
    const Eigen::VectorXd shifted = normalized_from_log(scores.array() + 1234.5);
    for (int i = 0; i < 3; ++i) {
        CHECK(base(i) == doctest::Approx(shifted(i)).epsilon(1e-12));
    }
    CHECK(base.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single-class prior makes the posterior an indicator") {
    Eigen::VectorXd prior(2);
    prior << 0.0, 1.0;
    const ClassConditionalModel model = tight_two_class_model(prior);
    for (const auto& x : {point2(0, 0), point2(20, 20), point2(-5, 30)}) {
        const Eigen::VectorXd post = model.posterior(x);
        CHECK(post(0) == 0.0);
        CHECK(post(1) == 1.0);
    }
}

TEST_CASE("raising a class prior never lowers its posterior") {
    Eigen::VectorXd weak(2), strong(2);
    weak << 0.3, 0.7;
    strong << 0.6, 0.4;
    const LabeledDataset ds = oracles::two_class_dataset(300, 2, 5.0, Environment::source, 33);
    const ClassConditionalModel a = fit_class_conditional(ds, make_prior(weak), 1, {});
    const ClassConditionalModel b = fit_class_conditional(ds, make_prior(strong), 1, {});
    tdist::rng::Stream stream(77);
    for (int i = 0; i < 50; ++i) {
        const Eigen::VectorXd x = point2(stream.normal() * 4.0, stream.normal() * 4.0 + 2.0);
        CHECK(b.posterior(x)(0) >= a.posterior(x)(0) - 1e-12);
    }
}

TEST_CASE("classify takes the posterior argmax with ties to the smaller label") {
    SUBCASE("dominant class wins") {
        Eigen::VectorXd prior(2);
        prior << 0.5, 0.5;
        const ClassConditionalModel model = tight_two_class_model(prior);
        CHECK(model.classify(point2(0, 0)) == 0);
        CHECK(model.classify(point2(20, 20)) == 1);
    }

    SUBCASE("exact tie goes to label 0") {
        Eigen::VectorXd mu(1);
        mu << 0.0;
        Eigen::MatrixXd cov(1, 1);
        cov << 1.0;
        Eigen::VectorXd prior(2);
        prior << 0.5, 0.5;
        const ClassConditionalModel model(
            {GmmModel({GaussianComponent{1.0, mu, cov}}),
             GmmModel({GaussianComponent{1.0, mu, cov}})},
            make_prior(prior), Environment::source);
        Eigen::VectorXd x(1);
        x << 0.3;
        CHECK(model.classify(x) == 0);
    }
}

TEST_CASE("fit rejects a positive-prior class with too few rows") {
    Eigen::MatrixXd f(5, 1);
    f << 1, 2, 3, 4, 100;
    const LabeledDataset ds =
        make_dataset(f, {0, 0, 0, 0, 1}, {"x"}, Environment::source);
    Eigen::VectorXd prior(2);
    prior << 0.5, 0.5;
    CHECK_THROWS_WITH_AS(fit_class_conditional(ds, make_prior(prior), 3, {}),
                         doctest::Contains("class 1"), std::invalid_argument);

    // Zero-prior classes degrade to fewer components instead of failing.
    Eigen::VectorXd degenerate(2);
    degenerate << 1.0, 0.0;
    CHECK_NOTHROW(fit_class_conditional(ds, make_prior(degenerate), 3, {}));
}

TEST_CASE("model bundle JSON round trip preserves evaluations") {
    Eigen::VectorXd prior(2);
    prior << 0.4, 0.6;
    const LabeledDataset ds = oracles::two_class_dataset(200, 2, 6.0, Environment::target, 41);
    const ClassConditionalModel model = fit_class_conditional(ds, make_prior(prior), 2, {});
    const ClassConditionalModel back = model_bundle_from_json(model_bundle_to_json(model));

    CHECK(back.environment() == Environment::target);
    CHECK(back.num_classes() == 2);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd x = ds.features.row(i).transpose();
        CHECK(back.marginal_log_density(x) == model.marginal_log_density(x));
        CHECK((back.posterior(x) - model.posterior(x)).cwiseAbs().maxCoeff() == 0.0);
    }
}
