#include "paraid/forward.hpp"
#include "paraid/trace.hpp"

#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace paraid;
using Catch::Approx;
using testing_support::Problem1D;
using testing_support::Problem2D;

namespace {

template <class F>
std::vector<double> sample(const SpatialGrid& g, F&& f) {
    std::vector<double> u(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) u[p] = f(g.x(p), g.y(p));
    return u;
}

}  // namespace

TEST_CASE("trace_value: boundary nodes in order") {
    const SpatialGrid g(1, {1.0, 0.0}, {5, 1});
    const std::vector<double> u{3.0, 1.0, 4.0, 1.0, 5.0};
    CHECK(trace_value(g, u) == std::vector<double>{3.0, 5.0});

    const SpatialGrid sq(2, {1.0, 1.0}, {4, 3});
    const auto v = sample(sq, [](double x, double y) { return x + 10.0 * y; });
    const auto tr = trace_value(sq, v);
    REQUIRE(tr.size() == sq.boundary().size());
    for (std::size_t b = 0; b < tr.size(); ++b) CHECK(tr[b] == v[sq.boundary()[b].node]);
}

TEST_CASE("trace_derivatives: exact for quadratics, second derivatives exact for cubics") {
    const SpatialGrid g(2, {1.0, 2.0}, {7, 9});
    const auto quad = sample(g, [](double x, double y) { return 1.0 + 2.0 * x - y + 3.0 * x * x + x * y - 0.5 * y * y; });
    for (std::size_t b = 0; b < g.boundary().size(); ++b) {
        const auto& bn = g.boundary()[b];
        const auto dv = trace_derivatives(g, quad)[b];
        CHECK(dv.grad[0] == Approx(2.0 + 6.0 * bn.x + bn.y).margin(1e-10));
        CHECK(dv.grad[1] == Approx(-1.0 + bn.x - bn.y).margin(1e-10));
        CHECK(dv.uxx == Approx(6.0).margin(1e-9));
        CHECK(dv.uyy == Approx(-1.0).margin(1e-9));
        CHECK(dv.uxy == Approx(1.0).margin(1e-9));
    }
    const auto cubic = sample(g, [](double x, double y) { return x * x * x - 2.0 * y * y * y; });
    const auto dc = trace_derivatives(g, cubic);
    for (std::size_t b = 0; b < g.boundary().size(); ++b) {
        const auto& bn = g.boundary()[b];
        CHECK(dc[b].uxx == Approx(6.0 * bn.x).margin(1e-8));
        CHECK(dc[b].uyy == Approx(-12.0 * bn.y).margin(1e-8));
    }
}

TEST_CASE("trace_derivatives: second order on a smooth field") {
    using std::numbers::pi;
    std::vector<double> err;
    for (std::size_t n : {21, 41, 81}) {
        const SpatialGrid g(1, {1.0, 0.0}, {n, 1});
        const auto u = sample(g, [](double x, double) { return std::sin(pi * x); });
        const auto dv = trace_derivatives(g, u);
        // u' = pi cos(pi x): pi at 0, -pi at 1.
        err.push_back(std::max(std::abs(dv[0].grad[0] - pi), std::abs(dv[1].grad[0] + pi)));
    }
    CHECK(std::log2(err[0] / err[1]) >= 1.9);
    CHECK(std::log2(err[1] / err[2]) >= 1.9);
}

TEST_CASE("trace_derivatives: needs four nodes per axis") {
    const SpatialGrid g(1, {1.0, 0.0}, {3, 1});
    CHECK_THROWS(trace_derivatives(g, std::vector<double>{0.0, 1.0, 2.0}));
}

TEST_CASE("operator_trace: documented examples") {
    const SpatialGrid g(1, {1.0, 0.0}, {11, 1});
    const auto x = sample(g, [](double x, double) { return x; });
    const auto x2 = sample(g, [](double x, double) { return x * x; });

    PointOperator dx;
    dx.b[0] = 1.0;
    for (double v : operator_trace(g, [&](std::size_t) { return dx; }, x)) CHECK(v == Approx(1.0).margin(1e-12));

    PointOperator lap;
    lap.a[0] = 1.0;
    for (double v : operator_trace(g, [&](std::size_t) { return lap; }, x2)) CHECK(v == Approx(-2.0).margin(1e-9));

    // Time-dependent diffusion 1+t sampled at t=1 doubles the result.
    Problem1D pb;
    pb.nodes = 11;
    pb.a11 = "1+t";
    const Discretization d(pb.build());
    StateField field(g.size(), 0, d.time().levels());
    const std::size_t last = d.time().steps();
    std::copy(x2.begin(), x2.end(), field.level(last).begin());
    for (double v : operator_trace(d, OperatorId::base(), field, last)) CHECK(v == Approx(-4.0).margin(1e-9));
}

TEST_CASE("operator_trace: unknown-weighted operators") {
    Problem1D pb;
    pb.nodes = 11;
    pb.unknown = {{"2", "x"}};
    pb.modes = {};
    const Discretization d(pb.build());
    StateField field(d.grid().size(), 0, 1);
    const auto sq = sample(d.grid(), [](double x, double) { return x * x; });
    std::copy(sq.begin(), sq.end(), field.level(0).begin());
    // 2 u' + x u = 4x + x^3: 0 at x=0, 5 at x=1.
    const auto tr = operator_trace(d, OperatorId::unknown(0), field, 0);
    CHECK(tr[0] == Approx(0.0).margin(1e-10));
    CHECK(tr[1] == Approx(5.0).margin(1e-10));
}

TEST_CASE("pairing: documented examples") {
    const SpatialGrid sq(2, {1.0, 1.0}, {21, 21});
    const auto one = std::vector<double>(sq.boundary().size(), 1.0);
    std::vector<double> xs;
    for (const auto& b : sq.boundary()) xs.push_back(b.x);
    CHECK(pair_with_weight(xs, one, sq) == Approx(2.0).margin(1e-3));
    CHECK(pair_with_weight(one, one, sq) == Approx(4.0).margin(1e-12));

    const SpatialGrid line(1, {1.0, 0.0}, {5, 1});
    CHECK(pair_with_weight(std::vector<double>{2.0, 3.0}, std::vector<double>{0.5, -1.0}, line) == -2.0);
}

TEST_CASE("pairing: bilinear") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> c(-1.0, 1.0);
    const SpatialGrid sq(2, {1.0, 2.0}, {8, 6});
    const std::size_t nb = sq.boundary().size();
    for (int k = 0; k < 10; ++k) {
        std::vector<double> u(nb), v(nb), w(nb), mix(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            u[b] = c(rng);
            v[b] = c(rng);
            w[b] = c(rng);
        }
        const double a = c(rng), bcoef = c(rng);
        for (std::size_t b = 0; b < nb; ++b) mix[b] = a * u[b] + bcoef * v[b];
        CHECK(pair_with_weight(mix, w, sq) ==
              Approx(a * pair_with_weight(u, w, sq) + bcoef * pair_with_weight(v, w, sq)).margin(1e-13));
    }
}

TEST_CASE("corners: trace derivatives agree with both incident faces") {
    // At a corner both faces use the same one-sided stencils, so a
    // quadratic is still differentiated exactly.
    const SpatialGrid g(2, {1.0, 1.0}, {6, 6});
    const auto u = sample(g, [](double x, double y) { return x * x + 3.0 * x * y; });
    const auto dv = trace_derivatives(g, u);
    for (std::size_t b = 0; b < g.boundary().size(); ++b) {
        const auto& bn = g.boundary()[b];
        if (!bn.corner()) continue;
        CHECK(dv[b].grad[0] == Approx(2.0 * bn.x + 3.0 * bn.y).margin(1e-10));
        CHECK(dv[b].grad[1] == Approx(3.0 * bn.x).margin(1e-10));
        CHECK(dv[b].uxy == Approx(3.0).margin(1e-9));
    }
}

TEST_CASE("conormal_trace: the forward solution reproduces its boundary data") {
    std::vector<double> err;
    for (std::size_t k : {1, 2, 4}) {
        Problem2D pb;
        pb.nx = pb.ny = 10 * k + 1;
        pb.steps = 10;
        pb.g = "t*(1+x*y)";
        pb.u0 = "0";
        const Discretization d(pb.build());
        const auto u = solve_auxiliary_phi(d);
        const std::size_t last = d.time().steps();
        const auto tr = conormal_trace(d, u.level(last), last);
        double e = 0.0;
        for (std::size_t b = 0; b < tr.size(); ++b) e = std::max(e, std::abs(tr[b] - d.level(last).g[b]));
        err.push_back(e);
    }
    CHECK(std::log2(err[0] / err[1]) >= 1.0);
    CHECK(std::log2(err[1] / err[2]) >= 1.0);
}
