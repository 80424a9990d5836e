#include "qntn/channel.hpp"

#include "qntn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qntn::channel {

double GammaGammaParams::scintillation_index() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta)) {
        const double a = std::isfinite(alpha) ? 1.0 / alpha : 0.0;
        const double b = std::isfinite(beta) ? 1.0 / beta : 0.0;
        return a + b;
    }
    return 1.0 / alpha + 1.0 / beta + 1.0 / (alpha * beta);
}

GammaGammaParams rytov_to_gg(double rytov_variance, double aperture_m, double range_km,
                             double wavelength_nm) {
    if (!(rytov_variance >= 0.0)) {
        throw std::invalid_argument("rytov_to_gg: Rytov variance must be non-negative");
    }
    if (aperture_m < 0.0 || range_km < 0.0) {
        throw std::invalid_argument("rytov_to_gg: negative aperture or range");
    }
    GammaGammaParams p;
    if (rytov_variance == 0.0) {
        return p;
    }
    double d2 = 0.0;
    if (aperture_m > 0.0 && range_km > 0.0) {
        const double k = 2.0 * kPi / (wavelength_nm * 1e-9);
        d2 = k * aperture_m * aperture_m / (4.0 * range_km * 1e3);
    }
    const double s125 = std::pow(rytov_variance, 1.2);
    const double ln_x =
        0.49 * rytov_variance / std::pow(1.0 + 0.65 * d2 + 1.11 * s125, 7.0 / 6.0);
    const double ln_y = 0.51 * rytov_variance * std::pow(1.0 + 0.69 * s125, -5.0 / 6.0) /
                        (1.0 + 0.90 * d2 + 0.62 * d2 * s125);
    p.alpha = 1.0 / std::expm1(ln_x);
    p.beta = 1.0 / std::expm1(ln_y);
    return p;
}

namespace {
constexpr double kRytovFriedCoeff = 1.23 / 0.423;

double wavenumber(double wavelength_nm) { return 2.0 * kPi / (wavelength_nm * 1e-9); }
} // namespace

double rytov_from_fried(double fried_m, double path_km, double wavelength_nm) {
    if (!(fried_m > 0.0)) {
        throw std::invalid_argument("rytov_from_fried: r0 must be positive");
    }
    const double k = wavenumber(wavelength_nm);
    const double l = path_km * 1e3;
    return kRytovFriedCoeff * std::pow(l / k, 5.0 / 6.0) * std::pow(fried_m, -5.0 / 3.0);
}

double fried_from_rytov(double rytov_variance, double path_km, double wavelength_nm) {
    if (!(rytov_variance > 0.0)) {
        throw std::invalid_argument("fried_from_rytov: Rytov variance must be positive");
    }
    const double k = wavenumber(wavelength_nm);
    const double l = path_km * 1e3;
    return std::pow(rytov_variance / (kRytovFriedCoeff * std::pow(l / k, 5.0 / 6.0)), -0.6);
}

double sample_irradiance(const GammaGammaParams& params, Rng& rng) {
    double x = 1.0;
    double y = 1.0;
    if (std::isfinite(params.alpha)) {
        std::gamma_distribution<double> g(params.alpha, 1.0 / params.alpha);
        x = g(rng);
    }
    if (std::isfinite(params.beta)) {
        std::gamma_distribution<double> g(params.beta, 1.0 / params.beta);
        y = g(rng);
    }
    return params.mean_irradiance * x * y;
}

double gg_pdf(double irradiance, const GammaGammaParams& params) {
    if (!(irradiance > 0.0)) {
        throw std::invalid_argument("gg_pdf: irradiance must be positive");
    }
    const double a = params.alpha;
    const double b = params.beta;
    if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0) {
        throw std::invalid_argument("gg_pdf: alpha and beta must be finite and positive");
    }
    const double x = irradiance / params.mean_irradiance;
    const double bessel = std::cyl_bessel_k(std::abs(a - b), 2.0 * std::sqrt(a * b * x));
    if (bessel == 0.0) {
        return 0.0;
    }
    const double log_pdf = std::log(2.0) + 0.5 * (a + b) * std::log(a * b * x) - std::lgamma(a) -
                           std::lgamma(b) - std::log(irradiance) + std::log(bessel);
    return std::exp(log_pdf);
}

double CorrelatedIrradiance::next(const GammaGammaParams& params, Rng& rng) {
    if (last_ >= 0.0 && rho_ > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < rho_) {
            return last_;
        }
    }
    last_ = sample_irradiance(params, rng);
    return last_;
}

double beer_lambert(double extinction_db_per_km, double path_km) {
    return std::pow(10.0, -extinction_db_per_km * path_km / 10.0);
}

namespace {
double beam_diameter_m(const LinkGeometry& g) {
    return g.tx_aperture_m + g.divergence_urad * 1e-6 * g.range_km * 1e3;
}
} // namespace

double geometric_efficiency(const LinkGeometry& g) {
    const double beam = beam_diameter_m(g);
    if (beam <= 0.0) {
        return 1.0;
    }
    const double r = g.rx_aperture_m / beam;
    return std::min(1.0, r * r);
}

double sample_pointing_error_urad(double sigma_urad, Rng& rng) {
    if (sigma_urad <= 0.0) {
        return 0.0;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double v = 1.0 - u(rng); // (0, 1]
    return sigma_urad * std::sqrt(-2.0 * std::log(v));
}

double pointing_efficiency(const LinkGeometry& g, double pointing_error_urad) {
    const double w = 0.5 * beam_diameter_m(g);
    if (w <= 0.0) {
        return 1.0;
    }
    const double r = pointing_error_urad * 1e-6 * g.range_km * 1e3;
    return std::exp(-2.0 * r * r / (w * w));
}

LinkBudget link_transmittance(const LinkGeometry& g, double turbulence_irradiance,
                              double pointing_error_urad) {
    LinkBudget b;
    b.eta_geo = geometric_efficiency(g);
    b.eta_atm = beer_lambert(g.extinction_db_per_km, g.atm_path_km);
    b.eta_turb = std::max(0.0, turbulence_irradiance);
    b.eta_point = pointing_efficiency(g, pointing_error_urad);
    b.eta_total = std::clamp(b.eta_geo * b.eta_atm * b.eta_turb * b.eta_point, 0.0, 1.0);
    b.wavelength_nm = g.wavelength_nm;
    b.rx_aperture_m = g.rx_aperture_m;
    b.range_km = g.range_km;
    b.extinction_db_per_km = g.extinction_db_per_km;
    b.pointing_jitter_sigma_urad = g.pointing_jitter_sigma_urad;
    return b;
}

void QkdLinkModel::validate() const {
    if (!(pulse_rate_hz > 0.0) || sift_factor < 0.0 || sift_factor > 1.0 ||
        detector_efficiency < 0.0 || detector_efficiency > 1.0 || dark_count_rate_hz < 0.0 ||
        intrinsic_error < 0.0 || intrinsic_error > 1.0 || ec_inefficiency < 1.0) {
        throw std::invalid_argument("QKD link model parameter out of range");
    }
}

double binary_entropy(double q) {
    if (q <= 0.0 || q >= 1.0) {
        return 0.0;
    }
    return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

double qber(const QkdLinkModel& m, double eta_total) {
    const double signal = std::clamp(eta_total, 0.0, 1.0) * m.detector_efficiency;
    const double dark = m.dark_probability();
    if (signal + dark <= 0.0) {
        return 0.5;
    }
    return (m.intrinsic_error * signal + 0.5 * dark) / (signal + dark);
}

double secret_key_rate(const QkdLinkModel& m, double eta_total) {
    const double eta_sys = std::clamp(eta_total, 0.0, 1.0) * m.detector_efficiency;
    if (eta_sys <= 0.0) {
        return 0.0;
    }
    const double h = binary_entropy(qber(m, eta_total));
    const double fraction = std::max(0.0, 1.0 - m.ec_inefficiency * h - h);
    return m.pulse_rate_hz * m.sift_factor * eta_sys * fraction;
}

double snr_db(const QkdLinkModel& m, double eta_total) {
    const double signal = std::clamp(eta_total, 0.0, 1.0) * m.detector_efficiency;
    const double dark = m.dark_probability();
    if (signal <= 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    if (dark <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(signal / dark);
}

double qkd_snr_threshold_db(const QkdLinkModel& m) {
    // Largest QBER with a positive secret fraction.
    double lo = 0.0;
    double hi = 0.5;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (1.0 - (1.0 + m.ec_inefficiency) * binary_entropy(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double q_max = lo;
    if (m.intrinsic_error >= q_max) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10((0.5 - q_max) / (q_max - m.intrinsic_error));
}

void QuantumMemorySpec::validate() const {
    if (!(t2_s > 0.0) || f_min < 0.5 || f_min > 1.0 || capacity < 0) {
        throw std::invalid_argument("quantum memory spec out of range");
    }
}

double memory_fidelity(const QuantumMemorySpec& mem, double storage_time_s) {
    if (storage_time_s < 0.0) {
        throw std::invalid_argument("memory_fidelity: negative storage time");
    }
    return 0.5 * (1.0 + std::exp(-storage_time_s / mem.t2_s));
}

double entanglement_ttl(const QuantumMemorySpec& mem) {
    if (!(mem.f_min > 0.5) || mem.f_min > 1.0) {
        throw std::invalid_argument("entanglement_ttl: F_min must lie in (0.5, 1]");
    }
    return -mem.t2_s * std::log(2.0 * mem.f_min - 1.0);
}

double rf_fallback_capacity(const RfLinkModel& m, double range_km, RfWeather weather) {
    if (range_km < 0.0 || range_km > m.max_range_km) {
        return 0.0;
    }
    return m.nominal_capacity_bps * (weather.heavy_rain ? m.rain_factor : 1.0);
}

} // namespace qntn::channel
