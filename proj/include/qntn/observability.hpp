#pragma once

// Seeing sensors, scalar Kalman fusion of log(r0), probabilistic SNR
// prediction and noisy forecast feeds for the controllers.

#include "qntn/channel.hpp"
#include "qntn/netmodel.hpp"

#include <map>
#include <string>
#include <vector>

namespace qntn::obs {

struct SeeingMeasurement {
    std::string site_id;
    double t = 0.0;
    double r0_measured_m = 0.1;
    double theta0_measured_urad = 7.0;
    double noise_sigma_m = 0.01;
};

// Random-walk scalar filter. The sim filters log(r0) so r0 stays positive.
struct KalmanState {
    double mean = 0.0;
    double variance = 1.0;
    double process_noise = 1e-4; // variance growth per second
    double last_update = 0.0;
};

KalmanState kalman_predict(const KalmanState& s, double dt_s);

// Scalar update with measurement z and measurement variance r.
KalmanState kalman_update(const KalmanState& s, double z, double r);

// Seeing update on log(r0); the r0 noise is mapped to log space by the
// delta method (sigma / r0).
KalmanState kalman_update(const KalmanState& s, const SeeingMeasurement& m);

// Quantities that fix the SNR of one ground-satellite link apart from r0.
struct LinkSnrModel {
    channel::QkdLinkModel qkd;
    double eta_clear = 1e-3;       // geometric x atmospheric x pointing
    double elevation_deg = 90.0;
    double range_km = 550.0;
    double turbulent_layer_km = 1.0;
    double aperture_m = 0.4;
    double wavelength_nm = 1550.0;
};

// Zenith Rytov variance implied by zenith r0 for the model's layer.
double rytov_zenith_from_r0(const LinkSnrModel& m, double r0_m);

// Deterministic link SNR for a given zenith r0, dB. Scintillation enters as
// the fade penalty 1 / (1 + sigma_I^2); monotone increasing in r0.
double snr_point_db(const LinkSnrModel& m, double r0_m);

struct SnrEstimate {
    std::string link_id;
    double t = 0.0;
    double snr_mean_db = 0.0;
    double snr_variance_db2 = 0.0;
    double p_above_qkd_threshold = 0.0;
};

// Pushes the log(r0) posterior through the SNR map. Moments use three
// sigma points; the threshold probability sums the Gaussian mass over every
// log(r0) interval where the point SNR clears the threshold.
SnrEstimate predict_snr(const LinkSnrModel& m, const KalmanState& log_r0, double threshold_db,
                        const std::string& link_id = {}, double t = 0.0);

// --- Forecasts ---------------------------------------------------------------

struct ForecastConfig {
    double step_s = 60.0;
    double r0_log_sigma = 0.0;   // multiplicative noise on r0
    double nowcast_lead_s = 1800.0; // weather changes visible this far ahead
    double cloud_timing_sigma_s = 0.0;
    double ci_noise_frac = 0.0;
};

// Truth the forecasts are derived from.
struct ScenarioTruth {
    const net::WeatherTimeline* weather = nullptr;
    const net::CarbonTable* carbon = nullptr;
    const std::vector<net::FlowDemand>* demand = nullptr;
    std::vector<std::string> sites;
    std::vector<std::string> regions;
    double turbulent_layer_km = 1.0;
    double wavelength_nm = 1550.0;
    double end_s = 0.0;
};

struct Forecast {
    double t = 0.0;
    double horizon_s = 0.0;
    double step_s = 60.0;
    std::map<std::string, std::vector<double>> turbulence_index; // forecast zenith r0, m
    std::map<std::string, std::vector<std::pair<double, double>>> cloud;
    std::map<std::string, std::vector<double>> ci;
    std::vector<net::FlowDemand> demand;

    size_t steps() const;
    double ci_at(const std::string& region, double tt) const;
    bool cloud_at(const std::string& site, double tt) const;
    bool cloud_during(const std::string& site, double t0, double t1) const;
};

// Horizon is truncated at the scenario end. Weather changes starting after
// t + nowcast_lead_s are not yet known and are forecast as the baseline.
Forecast forecast_feeds(const ScenarioTruth& truth, double t, double horizon_s,
                        const ForecastConfig& cfg, channel::Rng& rng);

// Zenith r0 implied by a site's weather, m.
double truth_r0(const net::SiteWeather& w, double layer_km, double wavelength_nm);

} // namespace qntn::obs
