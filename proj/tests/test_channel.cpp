#include <doctest.h>

#include "qntn/channel.hpp"
#include "qntn/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

using namespace qntn::channel;

namespace {

// Independent long-double evaluation of the plane-wave aperture-averaged
// Gamma-Gamma parameters.
struct GgOracle {
    long double alpha, beta;
};

GgOracle gg_oracle(long double rytov, long double aperture_m, long double range_km,
                   long double wavelength_nm) {
    const long double pi = 3.141592653589793238462643383279502884L;
    long double d2 = 0.0L;
    if (aperture_m > 0.0L) {
        const long double k = 2.0L * pi / (wavelength_nm * 1e-9L);
        d2 = k * aperture_m * aperture_m / (4.0L * range_km * 1000.0L);
    }
    const long double s = std::pow(rytov, 6.0L / 5.0L);
    const long double lx = 0.49L * rytov / std::pow(1.0L + 0.65L * d2 + 1.11L * s, 7.0L / 6.0L);
    const long double ly =
        0.51L * rytov / std::pow(1.0L + 0.69L * s, 5.0L / 6.0L) / (1.0L + 0.90L * d2 + 0.62L * d2 * s);
    return {1.0L / (std::exp(lx) - 1.0L), 1.0L / (std::exp(ly) - 1.0L)};
}

// Simpson's rule over log(I) so the integrand stays smooth near zero.
double integrate_log(const std::function<double(double)>& f, double lo, double hi, int n = 20000) {
    const double a = std::log(lo);
    const double b = std::log(hi);
    const double h = (b - a) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = std::exp(a + i * h);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * f(x) * x;
    }
    return s * h / 3.0;
}

double entropy_oracle(double q) { return -q * std::log2(q) - (1 - q) * std::log2(1 - q); }

} // namespace

TEST_CASE("weak-turbulence limit has no scintillation") {
    const auto p = rytov_to_gg(0.0, 0.4, 550.0);
    CHECK(p.scintillation_index() == 0.0);
    const auto q = rytov_to_gg(1e-8, 0.0, 550.0);
    CHECK(q.scintillation_index() < 1e-7);
    CHECK_THROWS_AS(rytov_to_gg(-0.1, 0.0, 550.0), std::invalid_argument);
}

TEST_CASE("Gamma-Gamma parameters match a long-double evaluation") {
    for (double d : {0.0, 0.1, 0.4}) {
        const auto p = rytov_to_gg(1.0, d, 550.0, 1550.0);
        const auto o = gg_oracle(1.0L, d, 550.0L, 1550.0L);
        CHECK(p.alpha == doctest::Approx(double(o.alpha)).epsilon(1e-12));
        CHECK(p.beta == doctest::Approx(double(o.beta)).epsilon(1e-12));
        CHECK(p.scintillation_index() ==
              doctest::Approx(double(1 / o.alpha + 1 / o.beta + 1 / (o.alpha * o.beta))).epsilon(1e-12));
    }
}

TEST_CASE("a larger aperture never increases the scintillation index") {
    for (double rytov : {0.1, 0.5, 1.0, 3.0}) {
        double prev = rytov_to_gg(rytov, 0.1, 1.0).scintillation_index();
        for (double d : {0.4, 0.8}) {
            const double si = rytov_to_gg(rytov, d, 1.0).scintillation_index();
            CHECK(si <= prev);
            prev = si;
        }
    }
}

TEST_CASE("sampler moments over 1e6 draws") {
    const auto p = rytov_to_gg(1.0, 0.0, 550.0);
    Rng rng(42);
    const int n = 1000000;
    double s1 = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = sample_irradiance(p, rng);
        REQUIRE(x >= 0.0);
        s1 += x;
        s2 += x * x;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 1.0) < 0.01);
    CHECK(var == doctest::Approx(p.scintillation_index()).epsilon(0.02));
}

TEST_CASE("large alpha and beta concentrate samples at the mean") {
    GammaGammaParams p;
    p.alpha = 1e6;
    p.beta = 1e6;
    p.mean_irradiance = 2.0;
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(std::abs(sample_irradiance(p, rng) - 2.0) < 0.02);
    }
}

TEST_CASE("pdf normalizes and has the right mean") {
    for (double rytov : {0.3, 1.0, 2.0}) {
        const auto p = rytov_to_gg(rytov, 0.0, 550.0);
        const double mass = integrate_log([&](double x) { return gg_pdf(x, p); }, 1e-10, 20.0);
        const double mean = integrate_log([&](double x) { return x * gg_pdf(x, p); }, 1e-10, 20.0);
        CHECK(std::abs(mass - 1.0) < 1e-4);
        CHECK(std::abs(mean - 1.0) < 1e-4);
    }
    CHECK_THROWS_AS(gg_pdf(0.0, rytov_to_gg(1.0, 0.0, 550.0)), std::invalid_argument);
}

TEST_CASE("histogram of samples fits the pdf (chi-square, p > 0.01)") {
    const auto p = rytov_to_gg(0.5, 0.0, 550.0);
    const int n = 100000;
    const double width = 0.1;
    const int bins = 40;
    std::vector<double> observed(bins + 1, 0.0);
    Rng rng(2024);
    for (int i = 0; i < n; ++i) {
        const double x = sample_irradiance(p, rng);
        const int b = std::min(bins, static_cast<int>(x / width));
        observed[size_t(b)] += 1.0;
    }
    std::vector<double> expected(bins + 1, 0.0);
    double covered = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double lo = std::max(1e-10, b * width);
        const double prob = integrate_log([&](double x) { return gg_pdf(x, p); }, lo, (b + 1) * width, 2000);
        expected[size_t(b)] = prob * n;
        covered += prob;
    }
    expected[bins] = (1.0 - covered) * n;

    // Merge sparse bins into their neighbour.
    std::vector<double> o;
    std::vector<double> e;
    double acc_o = 0.0;
    double acc_e = 0.0;
    for (int b = 0; b <= bins; ++b) {
        acc_o += observed[size_t(b)];
        acc_e += expected[size_t(b)];
        if (acc_e >= 5.0) {
            o.push_back(acc_o);
            e.push_back(acc_e);
            acc_o = acc_e = 0.0;
        }
    }
    if (acc_e > 0.0) {
        o.back() += acc_o;
        e.back() += acc_e;
    }
    double chi2 = 0.0;
    for (size_t i = 0; i < o.size(); ++i) {
        chi2 += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
    }
    // Wilson-Hilferty upper 1% point of chi-square.
    const double k = double(o.size() - 1);
    const double z = 2.3263478740;
    const double crit = k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3.0);
    CHECK(o.size() > 20);
    CHECK(chi2 < crit);
}

TEST_CASE("correlated irradiance keeps the previous draw with probability rho") {
    const auto p = rytov_to_gg(1.0, 0.0, 550.0);
    CorrelatedIrradiance c(0.9);
    Rng rng(3);
    double prev = c.next(p, rng);
    int repeats = 0;
    double sum = prev;
    const int n = 100000;
    for (int i = 1; i < n; ++i) {
        const double x = c.next(p, rng);
        repeats += x == prev ? 1 : 0;
        sum += x;
        prev = x;
    }
    CHECK(double(repeats) / (n - 1) == doctest::Approx(0.9).epsilon(0.01));
    CHECK(sum / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("Fried parameter and Rytov variance invert each other") {
    for (double r0 : {0.02, 0.1, 0.5}) {
        const double rytov = rytov_from_fried(r0, 1.0);
        CHECK(fried_from_rytov(rytov, 1.0) == doctest::Approx(r0).epsilon(1e-12));
    }
    CHECK(rytov_from_fried(0.05, 1.0) > rytov_from_fried(0.1, 1.0));
}

TEST_CASE("transmittance factors") {
    LinkGeometry g;
    g.divergence_urad = 0.0;
    g.tx_aperture_m = 0.4;
    g.rx_aperture_m = 0.4;
    g.extinction_db_per_km = 0.0;
    const auto unit = link_transmittance(g, 1.0, 0.0);
    CHECK(unit.eta_total == doctest::Approx(1.0));

    CHECK(beer_lambert(0.43, 10.0) == doctest::Approx(std::pow(10.0, -0.43)).epsilon(1e-14));
    CHECK(beer_lambert(0.43, 10.0) == doctest::Approx(0.372).epsilon(2e-3));

    // Product of the factors, clamped to one.
    LinkGeometry h;
    const auto b = link_transmittance(h, 0.8, 1.5);
    CHECK(b.eta_total == doctest::Approx(b.eta_geo * b.eta_atm * b.eta_turb * b.eta_point));
    CHECK(link_transmittance(g, 3.0, 0.0).eta_total == 1.0);
}

TEST_CASE("100 dB/km fog makes QKD impossible and trips the fallback") {
    LinkGeometry g;
    g.extinction_db_per_km = 100.0;
    g.atm_path_km = 1.0;
    const auto b = link_transmittance(g, 1.0, 0.0);
    CHECK(b.eta_atm == doctest::Approx(1e-10).epsilon(1e-9));
    QkdLinkModel m;
    CHECK(secret_key_rate(m, b.eta_total) == 0.0);
    qntn::proto::LinkObservables o;
    o.qber = qber(m, b.eta_total);
    CHECK(qntn::proto::fallback_trigger(o, qntn::proto::FallbackConfig{}));
}

TEST_CASE("no signal means QBER one half and no key") {
    QkdLinkModel m;
    CHECK(qber(m, 0.0) == 0.5);
    CHECK(secret_key_rate(m, 0.0) == 0.0);
}

TEST_CASE("secret fraction vanishes at the entropy root") {
    // Root of 1 - 2 h2(Q) by bisection on an independent entropy.
    double lo = 0.01;
    double hi = 0.4;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (1.0 - 2.0 * entropy_oracle(mid) > 0.0 ? lo : hi) = mid;
    }
    const double root = lo;
    CHECK(root == doctest::Approx(0.1100).epsilon(1e-3));

    QkdLinkModel m;
    m.dark_count_rate_hz = 0.0;
    m.ec_inefficiency = 1.0;
    m.intrinsic_error = root - 1e-4;
    CHECK(secret_key_rate(m, 1e-3) > 0.0);
    m.intrinsic_error = root + 1e-4;
    CHECK(secret_key_rate(m, 1e-3) == 0.0);
}

TEST_CASE("halving transmittance never increases the key rate") {
    QkdLinkModel m;
    for (double le = -12.0; le <= 0.0; le += 0.05) {
        const double eta = std::pow(10.0, le);
        CHECK(secret_key_rate(m, eta / 2.0) <= secret_key_rate(m, eta));
    }
}

TEST_CASE("memory fidelity and TTL") {
    QuantumMemorySpec mem;
    mem.t2_s = 2.0;
    CHECK(memory_fidelity(mem, 0.0) == 1.0);
    CHECK(memory_fidelity(mem, 1e4) == doctest::Approx(0.5));
    CHECK(memory_fidelity(mem, mem.t2_s * std::log(1.0 / 0.7)) == doctest::Approx(0.85).epsilon(1e-14));
    mem.f_min = 0.85;
    CHECK(entanglement_ttl(mem) == doctest::Approx(0.3566749439 * mem.t2_s).epsilon(1e-9));
    mem.f_min = 0.75;
    CHECK(entanglement_ttl(mem) == doctest::Approx(std::log(2.0) * mem.t2_s).epsilon(1e-14));
    mem.f_min = 1.0;
    CHECK(entanglement_ttl(mem) == 0.0);
    mem.f_min = 0.5;
    CHECK_THROWS_AS(entanglement_ttl(mem), std::invalid_argument);
    CHECK_THROWS_AS(memory_fidelity(mem, -1.0), std::invalid_argument);
}

TEST_CASE("RF backup capacity") {
    RfLinkModel rf;
    CHECK(rf_fallback_capacity(rf, 800.0, RfWeather{false}) == rf.nominal_capacity_bps);
    CHECK(rf_fallback_capacity(rf, 800.0, RfWeather{true}) == rf.nominal_capacity_bps * rf.rain_factor);
    CHECK(rf_fallback_capacity(rf, rf.max_range_km + 1.0, RfWeather{false}) == 0.0);
    CHECK(rf_secret_key_rate() == 0.0);
}
