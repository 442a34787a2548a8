#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pacediff/analysis.hpp"
#include "pacediff/dataset.hpp"
#include "testutil.hpp"

using namespace pacediff;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

PointSet single_point(std::vector<double> coords) {
    PointSet ps(static_cast<int>(coords.size()), 1);
    std::copy(coords.begin(), coords.end(), ps.data.begin());
    return ps;
}

// schedule with hand-chosen alpha_bar values; beta and snr kept consistent
NoiseSchedule handmade_schedule(std::vector<double> alpha_bar) {
    NoiseSchedule s;
    s.T = static_cast<int>(alpha_bar.size());
    s.alpha_bar = std::move(alpha_bar);
    s.beta.resize(s.T);
    s.snr.resize(s.T);
    double prev = 1.0;
    for (int t = 0; t < s.T; ++t) {
        s.beta[t] = 1.0 - s.alpha_bar[t] / prev;
        s.snr[t] = s.alpha_bar[t] / (1.0 - s.alpha_bar[t]);
        prev = s.alpha_bar[t];
    }
    return s;
}

// exact 1-D W2 squared between two empirical quantile functions
double w2sq_oracle(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::vector<double> cuts{0.0};
    for (std::size_t i = 0; i < a.size(); ++i) cuts.push_back(static_cast<double>(i + 1) / na);
    for (std::size_t i = 0; i < b.size(); ++i) cuts.push_back(static_cast<double>(i + 1) / nb);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
        const double qa = a[static_cast<std::size_t>(std::ceil(mid * na)) - 1];
        const double qb = b[static_cast<std::size_t>(std::ceil(mid * nb)) - 1];
        acc += (cuts[k + 1] - cuts[k]) * (qa - qb) * (qa - qb);
    }
    return acc;
}

}  // namespace

TEST_CASE("marginal density of a one-point dataset is a plain gaussian", "[analysis]") {
    const PointSet data = single_point({1.0, 2.0});
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 100);
    const int t = 50;
    const std::vector<double> x{0.5, -0.5};
    Rng rng(1);
    const DensityEstimate est = estimate_marginal_density(x, t, data, s, 0, rng);

    const double var = 1.0 - s.alpha_bar[t];
    const double ra = std::sqrt(s.alpha_bar[t]);
    double sq = 0.0;
    for (int k = 0; k < 2; ++k) {
        const double diff = x[k] - ra * data[0][k];
        sq += diff * diff;
    }
    const double want = -std::log(kTwoPi * var) - sq / (2.0 * var);
    CHECK(est.log_density == Catch::Approx(want).epsilon(1e-12));
    CHECK_FALSE(est.underflowed);
    CHECK(est.density() == Catch::Approx(std::exp(want)).epsilon(1e-12));
}

TEST_CASE("marginal density of two points is the half-half mixture", "[analysis]") {
    PointSet data(2, 2);
    data[0][0] = -1.0;
    data[0][1] = 0.5;
    data[1][0] = 2.0;
    data[1][1] = -0.25;
    const NoiseSchedule s = handmade_schedule({0.9, 0.75, 0.5});
    const int t = 1;  // alpha_bar = 0.75
    const std::vector<double> x{-0.5, 0.25};
    Rng rng(1);
    const DensityEstimate est = estimate_marginal_density(x, t, data, s, 0, rng);

    long double mix = 0.0L;
    for (int j = 0; j < 2; ++j) {
        long double sq = 0.0L;
        for (int k = 0; k < 2; ++k) {
            const long double diff = x[k] - std::sqrt(0.75L) * data[j][k];
            sq += diff * diff;
        }
        mix += 0.5L * std::exp(-sq / (2.0L * 0.25L)) / (0.25L * static_cast<long double>(kTwoPi));
    }
    CHECK(est.log_density ==
          Catch::Approx(static_cast<double>(std::log(mix))).epsilon(1e-12));
}

TEST_CASE("marginal density approaches a standard normal at vanishing alpha_bar", "[analysis]") {
    const PointSet data = single_point({0.7, -1.3});
    const NoiseSchedule s = handmade_schedule({0.5, 1e-10});
    const std::vector<double> x{0.4, 1.1};
    Rng rng(1);
    const DensityEstimate est = estimate_marginal_density(x, 1, data, s, 0, rng);
    const double want = -std::log(kTwoPi) - (x[0] * x[0] + x[1] * x[1]) / 2.0;
    CHECK(est.log_density == Catch::Approx(want).margin(1e-4));
}

TEST_CASE("far-away queries underflow and say so", "[analysis]") {
    const PointSet data = single_point({0.0, 0.0});
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 1000);
    Rng rng(1);
    const std::vector<double> x{40.0, 40.0};
    const DensityEstimate est = estimate_marginal_density(x, 1, data, s, 0, rng);
    CHECK(est.underflowed);
    CHECK(est.log_density < kLogDoubleMin);
    CHECK(est.density() == 0.0);
}

TEST_CASE("subsampled density matches the exact sweep", "[analysis]") {
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 100);

    // one point: any subsample hits the same component, so L = 1 is exact
    const PointSet one = single_point({1.0, -1.0});
    const std::vector<double> x{0.2, 0.3};
    Rng rng(7);
    const DensityEstimate exact = estimate_marginal_density(x, 50, one, s, 0, rng);
    const DensityEstimate sub = estimate_marginal_density(x, 50, one, s, 1, rng);
    REQUIRE(sub.log_density == exact.log_density);

    // two points: a large subsample concentrates on the exact mixture
    PointSet two(2, 2);
    two[0][0] = -1.0;
    two[0][1] = 0.0;
    two[1][0] = 1.0;
    two[1][1] = 0.0;
    const DensityEstimate full = estimate_marginal_density(x, 50, two, s, 0, rng);
    const DensityEstimate mc = estimate_marginal_density(x, 50, two, s, 5000, rng);
    CHECK(mc.log_density == Catch::Approx(full.log_density).margin(0.1));
}

TEST_CASE("density estimator rejects bad input", "[analysis]") {
    const PointSet data = single_point({0.0, 0.0});
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 100);
    Rng rng(1);
    const std::vector<double> x{0.0, 0.0};
    CHECK_THROWS(estimate_marginal_density(x, -1, data, s, 0, rng));
    CHECK_THROWS(estimate_marginal_density(x, 100, data, s, 0, rng));
    CHECK_THROWS(estimate_marginal_density(std::vector<double>{0.0}, 50, data, s, 0, rng));
    CHECK_THROWS(estimate_marginal_density(x, 50, PointSet{}, s, 0, rng));
    CHECK_THROWS(estimate_marginal_density(x, 50, data, s, -1, rng));
}

TEST_CASE("kl estimate is exactly zero when adjacent marginals coincide", "[analysis]") {
    PointSet data(2, 3);
    Rng fill(3);
    for (auto& v : data.data) v = fill.normal();
    const NoiseSchedule s = handmade_schedule({0.9, 0.5, 0.5, 0.2});
    Rng rng(11);
    const KlEstimate est = estimate_kl(2, data, s, 200, 0, rng);
    CHECK(est.estimate == 0.0);
    CHECK(est.stderr_ == 0.0);
    CHECK(est.samples_used == 200);
    CHECK(est.degenerate == 0);
    CHECK_FALSE(est.unreliable);
}

TEST_CASE("kl estimate matches the gaussian closed form for a point mass at zero",
          "[analysis][stats]") {
    const PointSet data = single_point({0.0, 0.0});
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 1000);
    const int t = 500;
    const double v_prev = 1.0 - s.alpha_bar[t - 1];
    const double v_cur = 1.0 - s.alpha_bar[t];
    // KL between centered gaussians, d = 2
    const double closed =
        2.0 * (0.5 * std::log(v_cur / v_prev) + v_prev / (2.0 * v_cur) - 0.5);

    Rng rng(17);
    const KlEstimate est = estimate_kl(t, data, s, 4000, 0, rng);
    REQUIRE(est.samples_used == 4000);
    CHECK(est.stderr_ > 0.0);
    CHECK(std::abs(est.estimate - closed) < 3.0 * est.stderr_);
}

TEST_CASE("kl estimates are nonnegative within noise on a gmm", "[analysis][stats]") {
    DatasetSpec spec;
    spec.kind = DatasetKind::gmm;
    spec.size = 200;
    spec.seed = 4;
    const PointSet data = make_dataset(spec);
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 1000);
    Rng rng(23);
    const KlEstimate est = estimate_kl(600, data, s, 1500, 0, rng);
    CHECK_FALSE(est.unreliable);
    CHECK(est.estimate > -3.0 * est.stderr_);
}

TEST_CASE("kl standard error shrinks like one over root m", "[analysis][stats]") {
    const PointSet data = single_point({0.0, 0.0});
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 1000);
    Rng r1(31), r2(32);
    const KlEstimate small = estimate_kl(500, data, s, 1500, 0, r1);
    const KlEstimate big = estimate_kl(500, data, s, 6000, 0, r2);
    const double ratio = small.stderr_ / big.stderr_;
    CHECK(ratio > 2.0 * 0.8);
    CHECK(ratio < 2.0 * 1.2);
}

TEST_CASE("collapsing marginals drive every term degenerate", "[analysis]") {
    const PointSet data = single_point({0.0, 0.0});
    // wide marginal at t-1, near-delta at t: the density at t underflows
    const NoiseSchedule s = handmade_schedule({0.5, 1.0 - 1e-8});
    Rng rng(41);
    const KlEstimate est = estimate_kl(1, data, s, 50, 0, rng);
    CHECK(est.degenerate == 50);
    CHECK(est.samples_used == 0);
    CHECK(std::isnan(est.estimate));
    CHECK(est.unreliable);
}

TEST_CASE("kl estimator rejects bad input", "[analysis]") {
    const PointSet data = single_point({0.0, 0.0});
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 100);
    Rng rng(1);
    CHECK_THROWS(estimate_kl(0, data, s, 10, 0, rng));
    CHECK_THROWS(estimate_kl(100, data, s, 10, 0, rng));
    CHECK_THROWS(estimate_kl(50, data, s, 0, 0, rng));
    CHECK_THROWS(estimate_kl(50, PointSet{}, s, 10, 0, rng));
}

TEST_CASE("kl curve derives one stream per timestep", "[analysis]") {
    DatasetSpec spec;
    spec.kind = DatasetKind::gmm;
    spec.size = 50;
    spec.seed = 9;
    const PointSet data = make_dataset(spec);
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 100);
    const std::vector<int> both{10, 50};
    const KlCurve curve = estimate_kl_curve(data, s, both, 200, 0, 77);
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.points[0].t == 10);
    CHECK(curve.points[1].t == 50);
    CHECK(curve.m == 200);
    CHECK_FALSE(curve.any_unreliable());

    // rerun reproduces; a solo evaluation of t = 50 gets the same stream
    const KlCurve again = estimate_kl_curve(data, s, both, 200, 0, 77);
    REQUIRE(again.points[1].estimate == curve.points[1].estimate);
    const std::vector<int> solo{50};
    const KlCurve alone = estimate_kl_curve(data, s, solo, 200, 0, 77);
    REQUIRE(alone.points[0].estimate == curve.points[1].estimate);
}

TEST_CASE("kl curve spearman and csv output", "[analysis]") {
    KlCurve curve;
    for (int i = 0; i < 4; ++i) {
        KlEstimate p;
        p.t = 10 * (i + 1);
        p.estimate = 1.0 / (i + 1);  // strictly decreasing in t
        p.stderr_ = 0.01;
        p.degenerate = i;
        curve.points.push_back(p);
    }
    CHECK(curve.spearman_vs_t() == -1.0);

    const auto dir = testutil::scratch_dir("kl-csv");
    curve.write_csv(dir / "kl_curve.csv");
    const auto csv = testutil::read_csv(dir / "kl_curve.csv");
    REQUIRE(csv.header == std::vector<std::string>{"t", "estimate", "stderr", "degenerate_count"});
    REQUIRE(csv.rows.size() == 4);
    CHECK(csv.integer(2, 0) == 30);
    CHECK(csv.num(1, 1) == 0.5);
    CHECK(csv.integer(3, 3) == 3);
}

TEST_CASE("distribution distance is zero on identical sets", "[analysis][w2]") {
    DatasetSpec spec;
    spec.kind = DatasetKind::gmm;
    spec.size = 300;
    spec.seed = 2;
    const PointSet a = make_dataset(spec);
    REQUIRE(distribution_distance(a, a) == 0.0);
}

TEST_CASE("distribution distance is exactly symmetric", "[analysis][w2]") {
    DatasetSpec sa, sb;
    sa.kind = DatasetKind::gmm;
    sa.size = 200;
    sa.seed = 5;
    sb = sa;
    sb.seed = 6;
    const PointSet a = make_dataset(sa);
    const PointSet b = make_dataset(sb);
    const double ab = distribution_distance(a, b);
    const double ba = distribution_distance(b, a);
    REQUIRE(ab == ba);
    CHECK(ab > 0.0);
}

TEST_CASE("distance between shifted singletons is the shift size", "[analysis][w2]") {
    PointSet a(1, 1), b(1, 1);
    a[0][0] = 0.0;
    b[0][0] = 3.0;
    CHECK(distribution_distance(a, b) == Catch::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("equal-size projections reduce to paired sorted differences", "[analysis][w2]") {
    Rng rng(13);
    const std::size_t n = 50;
    PointSet a(1, n), b(1, n);
    for (auto& v : a.data) v = rng.normal();
    for (auto& v : b.data) v = 2.0 * rng.normal() + 0.5;
    std::vector<double> va(a.data), vb(b.data);
    std::sort(va.begin(), va.end());
    std::sort(vb.begin(), vb.end());
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += (va[i] - vb[i]) * (va[i] - vb[i]);
    const double want = std::sqrt(sq / static_cast<double>(n));
    CHECK(distribution_distance(a, b) == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("unequal sizes follow the merged-breakpoint quadrature", "[analysis][w2]") {
    PointSet a(1, 3), b(1, 2);
    a[0][0] = 0.1;
    a[1][0] = -1.4;
    a[2][0] = 2.2;
    b[0][0] = 0.6;
    b[1][0] = -0.3;
    const double want = std::sqrt(w2sq_oracle({0.1, -1.4, 2.2}, {0.6, -0.3}));
    CHECK(distribution_distance(a, b) == Catch::Approx(want).epsilon(1e-12));

    Rng rng(19);
    PointSet ra(1, 7), rb(1, 11);
    for (auto& v : ra.data) v = rng.normal();
    for (auto& v : rb.data) v = rng.normal() - 1.0;
    const double want2 = std::sqrt(w2sq_oracle(ra.data, rb.data));
    CHECK(distribution_distance(ra, rb) == Catch::Approx(want2).epsilon(1e-12));
}

TEST_CASE("sliced distance of a paired unit shift averages the projected length",
          "[analysis][w2][stats]") {
    Rng rng(29);
    const std::size_t n = 2000;
    PointSet a(2, n), b(2, n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i][0] = rng.normal();
        a[i][1] = rng.normal();
        b[i][0] = a[i][0] + 1.0;
        b[i][1] = a[i][1];
    }
    // every projection sees a rigid shift of size |dir_x|, whose mean over
    // uniform directions in the plane is 2 / pi
    const double got = distribution_distance(a, b, 512);
    CHECK(got == Catch::Approx(2.0 / 3.14159265358979323846).epsilon(0.1));
}

TEST_CASE("distribution distance rejects bad input", "[analysis][w2]") {
    PointSet a(2, 4), b(3, 4), empty;
    for (auto& v : a.data) v = 0.0;
    for (auto& v : b.data) v = 0.0;
    CHECK_THROWS(distribution_distance(empty, a));
    CHECK_THROWS(distribution_distance(a, empty));
    CHECK_THROWS(distribution_distance(a, b));
    PointSet a2(2, 3);
    for (auto& v : a2.data) v = 1.0;
    CHECK_THROWS(distribution_distance(a, a2, 0));
}

TEST_CASE("convergence study csv layout", "[analysis]") {
    ConvergenceStudy study;
    IntervalTrace iv;
    iv.index = 1;
    iv.t_lo = 0;
    iv.t_hi = 50;
    iv.raw_loss = {1.0, 0.5};
    iv.smoothed_loss = {1.0, 0.75};
    iv.norm_loss = {1.0, 0.0};
    iv.eval_iterations = {2};
    iv.task_metric = {0.25};
    study.intervals.push_back(iv);

    const auto dir = testutil::scratch_dir("conv-csv");
    study.write_csv(dir / "convergence.csv");
    const auto csv = testutil::read_csv(dir / "convergence.csv");
    REQUIRE(csv.header ==
            std::vector<std::string>{"interval", "iteration", "raw_loss", "norm_loss",
                                     "task_metric"});
    REQUIRE(csv.rows.size() == 1);
    CHECK(csv.integer(0, 0) == 1);
    CHECK(csv.integer(0, 1) == 2);
    CHECK(csv.num(0, 2) == 0.5);   // raw loss at the eval iteration
    CHECK(csv.num(0, 3) == 0.0);
    CHECK(csv.num(0, 4) == 0.25);
}

TEST_CASE("miniature convergence study wires everything together", "[analysis][slow]") {
    DatasetSpec spec;
    spec.kind = DatasetKind::gmm;
    spec.size = 128;
    spec.seed = 14;
    const PointSet data = make_dataset(spec);

    TrainConfig base;
    base.schedule.timesteps = 50;
    base.batch_size = 16;
    base.hidden = {8};
    base.embed_width = 4;
    base.smoothing_window = 5;
    base.seed = 3;

    ConvergenceOptions opts;
    opts.intervals = 2;
    opts.iterations = 30;
    opts.eval_every = 15;
    opts.eval_count = 16;
    opts.eval_steps = 5;
    opts.projections = 8;

    const ConvergenceStudy study = run_convergence_study(spec, data, base, opts);
    REQUIRE(study.intervals.size() == 2);
    for (const auto& iv : study.intervals) {
        REQUIRE(iv.raw_loss.size() == 30);
        REQUIRE(iv.smoothed_loss.size() == 30);
        REQUIRE(iv.norm_loss.size() == 30);
        REQUIRE(iv.eval_iterations == std::vector<long long>{15, 30});
        REQUIRE(iv.task_metric.size() == 2);
        for (double v : iv.norm_loss) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
        for (double v : iv.task_metric) REQUIRE(v > 0.0);
        REQUIRE(iv.convergence_iteration >= 0);
        REQUIRE(iv.convergence_iteration <= 30);
    }
    CHECK(study.intervals[0].t_lo == 0);
    CHECK(study.intervals[0].t_hi == 25);
    CHECK(study.intervals[1].t_hi == 50);

    ConvergenceOptions bad = opts;
    bad.intervals = 1;
    CHECK_THROWS(run_convergence_study(spec, data, base, bad));
    bad = opts;
    bad.eval_every = 31;
    CHECK_THROWS(run_convergence_study(spec, data, base, bad));
}
