#include <catch_amalgamated.hpp>

#include <cmath>

#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"
#include "support.hpp"

using Catch::Approx;
using namespace imargin;
using bs::QuoteContext;

namespace {

QuoteContext atm_call() { return {0.0, 1.0, 1, 100.0, 1.0, 0.2}; }

// Frozen output of testing::lognormal_option_oracle for atm_call().
constexpr double atm_call_oracle = 7.965567455405804;

}  // namespace

TEST_CASE("oracle value of the ATM call is frozen", "[bs][oracle]") {
    CHECK(testing::lognormal_option_oracle(0.0, 1.0, 1, 100.0, 1.0, 0.2) ==
          Approx(atm_call_oracle).epsilon(1e-9));
}

TEST_CASE("bs_price examples", "[bs]") {
    CHECK(bs::price(atm_call()) == Approx(7.9656).margin(1e-3));
    CHECK(bs::price(atm_call()) == Approx(atm_call_oracle).epsilon(1e-12));

    QuoteContext otm{0.1, 1.0, 1, 100.0, 1.0, 1e-12};
    CHECK(bs::price(otm) == Approx(0.0).margin(1e-12));
    otm.sigma = 0.0;
    CHECK(bs::price(otm) == 0.0);

    QuoteContext itm{-0.1, 1.0, 1, 100.0, 0.9, 0.0};
    CHECK(bs::price(itm) == Approx(0.9 * 100.0 * (1.0 - std::exp(-0.1))).epsilon(1e-14));

    QuoteContext put = atm_call();
    put.omega = -1;
    CHECK(bs::price(put) == Approx(bs::price(atm_call())).epsilon(1e-14));
}

TEST_CASE("bs_price rejects invalid inputs", "[bs]") {
    QuoteContext c = atm_call();
    c.tau = -1.0;
    CHECK_THROWS_AS(bs::price(c), DomainError);
    c = atm_call();
    c.forward = std::nan("");
    CHECK_THROWS_AS(bs::price(c), DomainError);
    c = atm_call();
    c.discount = -0.5;
    CHECK_THROWS_AS(bs::price(c), DomainError);
    c = atm_call();
    c.omega = 0;
    CHECK_THROWS_AS(bs::price(c), DomainError);
}

TEST_CASE("implied_vol examples", "[bs]") {
    QuoteContext ctx = atm_call();
    CHECK(bs::implied_vol(bs::price(ctx), ctx) == Approx(0.2).margin(1e-8));
    CHECK(bs::implied_vol(7.9656, ctx) == Approx(0.2).margin(1e-3));
    try {
        bs::implied_vol(100.0, ctx);
        FAIL("expected a bound violation");
    } catch (const BoundViolation& e) {
        CHECK(e.side() == BoundSide::above_upper);
        CHECK(std::string(e.what()).find("upper bound") != std::string::npos);
    }
    QuoteContext itm{-0.2, 1.0, 1, 100.0, 1.0, 0.0};
    try {
        bs::implied_vol(100.0 * (1.0 - std::exp(-0.2)) - 1e-6, itm);
        FAIL("expected a bound violation");
    } catch (const BoundViolation& e) {
        CHECK(e.side() == BoundSide::below_intrinsic);
    }
    QuoteContext put{0.3, 0.5, -1, 50.0, 0.97, 0.0};
    CHECK_THROWS_AS(bs::implied_vol(0.97 * 50.0 * std::exp(0.3), put), BoundViolation);
}

TEST_CASE("implied_vol round trip on random inputs", "[bs][property]") {
    testing::Gen g(101);
    for (int i = 0; i < 2000; ++i) {
        QuoteContext c{g.uniform(-1.0, 1.0), g.uniform(0.01, 5.0), g.coin() ? 1 : -1,
                       g.uniform(10.0, 500.0), g.uniform(0.5, 1.0), g.uniform(0.02, 1.5)};
        const double p = bs::price(c);
        const double tv = p - c.discount * c.forward *
                                  std::max(c.omega * (1.0 - std::exp(c.k)), 0.0);
        if (tv < 1e-9 * c.discount * c.forward) continue;  // vol not identifiable
        const double iv = bs::implied_vol(p, c);
        QuoteContext back = c;
        back.sigma = iv;
        CHECK(std::abs(bs::price(back) - p) <= 1e-10 * c.discount * c.forward);
    }
}

TEST_CASE("greeks examples", "[bs]") {
    const auto g = bs::greeks(atm_call());
    CHECK(g.delta == Approx(testing::Phi(0.1)).epsilon(1e-14));
    CHECK(g.delta == Approx(0.53983).margin(1e-4));
    CHECK(g.vega == Approx(100.0 * testing::phi(0.1)).epsilon(1e-14));
    CHECK(g.vega == Approx(39.695).margin(1e-2));
    QuoteContext put = atm_call();
    put.omega = -1;
    CHECK(bs::greeks(put).delta == Approx(-0.46017).margin(1e-4));
    QuoteContext zero = atm_call();
    zero.sigma = 0.0;
    CHECK_THROWS_AS(bs::greeks(zero), DomainError);
}

TEST_CASE("bs_price properties on random inputs", "[bs][property]") {
    testing::Gen g(7);
    for (int i = 0; i < 500; ++i) {
        QuoteContext c{g.uniform(-0.8, 0.8), g.uniform(0.02, 3.0), g.coin() ? 1 : -1,
                       g.uniform(50.0, 150.0), g.uniform(0.7, 1.0), g.uniform(0.05, 0.9)};

        // monotone in sigma
        QuoteContext hi = c;
        hi.sigma = c.sigma * 1.1;
        CHECK(bs::price(hi) >= bs::price(c));

        const auto gr = bs::greeks(c);
        CHECK(gr.vega > 0.0);
        CHECK(std::abs(gr.delta) <= 1.0);  // saturates in floating point deep in the money
        CHECK(gr.delta * c.omega > 0.0);

        // vega against a centered difference with step 1e-5
        QuoteContext up = c, dn = c;
        up.sigma += 1e-5;
        dn.sigma -= 1e-5;
        const double fd_vega = (bs::price(up) - bs::price(dn)) / 2e-5;
        CHECK(fd_vega == Approx(gr.vega).epsilon(1e-5).margin(1e-9 * c.forward));

        // delta: d(price)/dF at fixed strike, normalized by DF
        const double strike = c.forward * std::exp(c.k);
        const double h = 1e-5 * c.forward;
        auto at_forward = [&](double f) {
            QuoteContext q = c;
            q.forward = f;
            q.k = std::log(strike / f);
            return bs::price(q);
        };
        const double fd_delta = (at_forward(c.forward + h) - at_forward(c.forward - h)) / (2 * h);
        CHECK(fd_delta / c.discount == Approx(gr.delta).margin(1e-5));

        // put-call parity
        QuoteContext call = c, put = c;
        call.omega = 1;
        put.omega = -1;
        const double lhs = bs::price(call) - bs::price(put);
        const double rhs = c.discount * c.forward * (1.0 - std::exp(c.k));
        CHECK(lhs == Approx(rhs).epsilon(1e-12).margin(1e-12 * c.forward));
    }
}

TEST_CASE("bs_price matches the lognormal quadrature oracle", "[bs][oracle]") {
    testing::Gen g(2024);
    int checked = 0;
    while (checked < 200) {
        const double sigma = g.uniform(0.05, 0.8), tau = g.uniform(0.02, 3.0);
        const double s = sigma * std::sqrt(tau);
        const double k = g.uniform(-3.0, 3.0) * s;
        QuoteContext c{k, tau, g.coin() ? 1 : -1, g.uniform(50.0, 150.0), g.uniform(0.7, 1.0),
                       sigma};
        const double ref =
            testing::lognormal_option_oracle(c.k, c.tau, c.omega, c.forward, c.discount, c.sigma);
        CHECK(bs::price(c) == Approx(ref).epsilon(1e-6));
        ++checked;
    }
}

TEST_CASE("delta to strike at symbolic volatility", "[bs]") {
    const double tau = 21.0 / 252.0;
    for (double d : {0.015, 0.2, 0.5, 0.8, 0.985}) {
        const double k = bs::k_from_delta(d, tau, 0.1);
        CHECK(testing::Phi(bs::d1(k, 0.1 * std::sqrt(tau))) == Approx(d).epsilon(1e-12));
        CHECK(k == Approx(-testing::inv_Phi(d) * 0.1 * std::sqrt(tau) + 0.005 * tau).margin(1e-12));
    }
    CHECK_THROWS_AS(bs::k_from_delta(1.0, 1.0, 0.1), DomainError);
}
