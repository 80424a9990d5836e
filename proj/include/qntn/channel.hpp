#pragma once

// Optical channel physics for ground-satellite quantum links:
// transmittance factorisation, Gamma-Gamma scintillation, an asymptotic
// BB84-style secret-key rate, quantum-memory decoherence and the Ka-band
// RF backup.
//
// Turbulence uses the plane-wave Andrews-Phillips closed forms. Satellite
// slant paths are closer to a spherical/beam wave near the receiver; the
// plane-wave choice slightly overestimates scintillation for downlinks.

#include <cstdint>
#include <limits>
#include <random>

namespace qntn::channel {

using Rng = std::mt19937_64;

struct TurbulenceProfile {
    double rytov_variance = 0.0;
    double fried_parameter_m = 0.1;
    double outer_scale_m = 10.0;
    double cn2_index = 0.0;          // label for the C_n^2 profile
    double isoplanatic_angle_urad = 7.0;
};

struct GammaGammaParams {
    double alpha = std::numeric_limits<double>::infinity();
    double beta = std::numeric_limits<double>::infinity();
    double mean_irradiance = 1.0;

    // 1/alpha + 1/beta + 1/(alpha beta); zero in the no-turbulence limit.
    double scintillation_index() const;
};

// Plane-wave alpha/beta from the Rytov variance, with aperture averaging
// over a receiver of diameter aperture_m at the given range. aperture_m = 0
// gives the point-receiver forms.
GammaGammaParams rytov_to_gg(double rytov_variance, double aperture_m, double range_km,
                             double wavelength_nm = 1550.0);

// Rytov variance of a uniform-C_n^2 path of the given length whose Fried
// parameter is r0, and the inverse mapping.
double rytov_from_fried(double fried_m, double path_km, double wavelength_nm = 1550.0);
double fried_from_rytov(double rytov_variance, double path_km, double wavelength_nm = 1550.0);

double sample_irradiance(const GammaGammaParams& params, Rng& rng);

// Gamma-Gamma density at irradiance I > 0.
double gg_pdf(double irradiance, const GammaGammaParams& params);

// Sticky resampling: with probability rho the previous draw is kept.
// Preserves the Gamma-Gamma marginal with lag-one correlation rho.
class CorrelatedIrradiance {
public:
    explicit CorrelatedIrradiance(double rho = 0.0) : rho_(rho) {}
    double next(const GammaGammaParams& params, Rng& rng);

private:
    double rho_;
    double last_ = -1.0;
};

struct LinkGeometry {
    double wavelength_nm = 1550.0;
    double tx_aperture_m = 0.1;
    double rx_aperture_m = 0.4;
    double divergence_urad = 10.0;      // full-angle beam divergence
    double range_km = 550.0;
    double extinction_db_per_km = 0.2;
    double atm_path_km = 1.0;           // path length through the lossy layer
    double pointing_jitter_sigma_urad = 1.0;
};

struct LinkBudget {
    double eta_geo = 1.0;
    double eta_atm = 1.0;
    double eta_turb = 1.0;
    double eta_point = 1.0;
    double eta_total = 1.0;
    double wavelength_nm = 1550.0;
    double rx_aperture_m = 0.4;
    double range_km = 0.0;
    double extinction_db_per_km = 0.0;
    double pointing_jitter_sigma_urad = 0.0;
};

double beer_lambert(double extinction_db_per_km, double path_km);
double geometric_efficiency(const LinkGeometry& g);

// Rayleigh-distributed radial pointing error, microradians.
double sample_pointing_error_urad(double sigma_urad, Rng& rng);

// Gaussian-beam loss for a radial pointing error.
double pointing_efficiency(const LinkGeometry& g, double pointing_error_urad);

// Evaluates the product of the four factors; eta_total is clamped to [0, 1].
LinkBudget link_transmittance(const LinkGeometry& g, double turbulence_irradiance,
                              double pointing_error_urad);

struct QkdLinkModel {
    double pulse_rate_hz = 1e8;
    double sift_factor = 0.5;
    double detector_efficiency = 0.6;
    double dark_count_rate_hz = 100.0;
    double intrinsic_error = 0.015;
    double ec_inefficiency = 1.16;

    void validate() const;
    double dark_probability() const { return dark_count_rate_hz / pulse_rate_hz; }
};

double binary_entropy(double q);
double qber(const QkdLinkModel& m, double eta_total);
double secret_key_rate(const QkdLinkModel& m, double eta_total);

// Signal-to-dark ratio of the detector, dB.
double snr_db(const QkdLinkModel& m, double eta_total);
// SNR at which the secret fraction reaches zero.
double qkd_snr_threshold_db(const QkdLinkModel& m);

struct QuantumMemorySpec {
    double t2_s = 1.0;
    double f_min = 0.85;
    int capacity = 8;

    void validate() const;
};

double memory_fidelity(const QuantumMemorySpec& mem, double storage_time_s);
double entanglement_ttl(const QuantumMemorySpec& mem);

struct RfLinkModel {
    double nominal_capacity_bps = 50e6;
    double rain_factor = 0.3;
    double max_range_km = 2500.0;
};

struct RfWeather {
    bool heavy_rain = false;
};

double rf_fallback_capacity(const RfLinkModel& m, double range_km, RfWeather weather);

// RF carries no quantum channel.
constexpr double rf_secret_key_rate() { return 0.0; }

} // namespace qntn::channel
