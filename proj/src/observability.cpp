#include "qntn/observability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qntn::obs {

KalmanState kalman_predict(const KalmanState& s, double dt_s) {
    if (dt_s < 0.0) {
        throw std::invalid_argument("kalman_predict: negative dt");
    }
    KalmanState out = s;
    out.variance += s.process_noise * dt_s;
    out.last_update += dt_s;
    return out;
}

KalmanState kalman_update(const KalmanState& s, double z, double r) {
    if (r < 0.0) {
        throw std::invalid_argument("kalman_update: negative measurement variance");
    }
    KalmanState out = s;
    if (std::isinf(r)) {
        return out;
    }
    const double denom = s.variance + r;
    if (denom <= 0.0) {
        return out;
    }
    const double k = s.variance / denom;
    out.mean = s.mean + k * (z - s.mean);
    out.variance = (1.0 - k) * s.variance;
    return out;
}

KalmanState kalman_update(const KalmanState& s, const SeeingMeasurement& m) {
    if (m.noise_sigma_m < 0.0) {
        throw std::invalid_argument("kalman_update: negative measurement noise");
    }
    if (!(m.r0_measured_m > 0.0)) {
        throw std::invalid_argument("kalman_update: r0 must be positive");
    }
    const double rel = m.noise_sigma_m / m.r0_measured_m;
    KalmanState out = kalman_update(s, std::log(m.r0_measured_m), rel * rel);
    out.last_update = std::max(s.last_update, m.t);
    return out;
}

double rytov_zenith_from_r0(const LinkSnrModel& m, double r0_m) {
    return channel::rytov_from_fried(r0_m, m.turbulent_layer_km, m.wavelength_nm);
}

double snr_point_db(const LinkSnrModel& m, double r0_m) {
    const double rytov = net::slant_rytov(rytov_zenith_from_r0(m, r0_m), m.elevation_deg);
    const auto gg = channel::rytov_to_gg(rytov, m.aperture_m, m.range_km, m.wavelength_nm);
    const double fade = 1.0 / (1.0 + gg.scintillation_index());
    return channel::snr_db(m.qkd, m.eta_clear * fade);
}

SnrEstimate predict_snr(const LinkSnrModel& m, const KalmanState& log_r0, double threshold_db,
                        const std::string& link_id, double t) {
    SnrEstimate est;
    est.link_id = link_id;
    est.t = t;

    // Three-point rule, exact for polynomials up to degree five.
    const double spread = std::sqrt(3.0 * std::max(0.0, log_r0.variance));
    const double pts[3] = {log_r0.mean, log_r0.mean - spread, log_r0.mean + spread};
    const double wts[3] = {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0};
    double mean = 0.0;
    double sq = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double v = snr_point_db(m, std::exp(pts[i]));
        mean += wts[i] * v;
        sq += wts[i] * v * v;
    }
    est.snr_mean_db = mean;
    est.snr_variance_db2 = std::max(0.0, sq - mean * mean);

    // The point SNR is not monotone in r0 (scintillation saturates in strong
    // turbulence), so the region above threshold is found by a scan in
    // log(r0) with every sign change refined by bisection. Beyond the scan
    // range the end values are held.
    const double lo_log = std::log(1e-4);
    const double hi_log = std::log(10.0);
    const int n = 400;
    auto above = [&](double x) { return snr_point_db(m, std::exp(x)) >= threshold_db; };
    std::vector<double> cuts;
    double prev_x = lo_log;
    bool prev_above = above(prev_x);
    const bool first_above = prev_above;
    for (int i = 1; i <= n; ++i) {
        const double x = lo_log + (hi_log - lo_log) * i / n;
        const bool a = above(x);
        if (a != prev_above) {
            double l = prev_x;
            double h = x;
            for (int k = 0; k < 60; ++k) {
                const double mid = 0.5 * (l + h);
                (above(mid) == prev_above ? l : h) = mid;
            }
            cuts.push_back(h);
        }
        prev_x = x;
        prev_above = a;
    }
    // Mass of the normal belief on each interval where the SNR is above.
    auto cdf = [&](double x) {
        if (log_r0.variance <= 0.0) {
            return log_r0.mean < x ? 1.0 : 0.0;
        }
        return 0.5 * std::erfc(-(x - log_r0.mean) / std::sqrt(2.0 * log_r0.variance));
    };
    double p = 0.0;
    bool state = first_above;
    double from = -std::numeric_limits<double>::infinity();
    for (double c : cuts) {
        if (state) {
            p += cdf(c) - (std::isinf(from) ? 0.0 : cdf(from));
        }
        from = c;
        state = !state;
    }
    if (state) {
        p += 1.0 - (std::isinf(from) ? 0.0 : cdf(from));
    }
    est.p_above_qkd_threshold = std::clamp(p, 0.0, 1.0);
    return est;
}

// --- Forecasts ---------------------------------------------------------------

size_t Forecast::steps() const {
    return step_s > 0.0 ? static_cast<size_t>(std::ceil(horizon_s / step_s - 1e-9)) : 0;
}

double Forecast::ci_at(const std::string& region, double tt) const {
    auto it = ci.find(region);
    if (it == ci.end() || it->second.empty()) {
        throw std::out_of_range("no CI forecast for region " + region);
    }
    const double k = std::floor((tt - t) / step_s);
    const auto idx = static_cast<size_t>(std::clamp(k, 0.0, double(it->second.size() - 1)));
    return it->second[idx];
}

bool Forecast::cloud_at(const std::string& site, double tt) const {
    auto it = cloud.find(site);
    if (it == cloud.end()) {
        return false;
    }
    for (const auto& [a, b] : it->second) {
        if (a <= tt && tt < b) {
            return true;
        }
    }
    return false;
}

bool Forecast::cloud_during(const std::string& site, double t0, double t1) const {
    auto it = cloud.find(site);
    if (it == cloud.end()) {
        return false;
    }
    for (const auto& [a, b] : it->second) {
        if (a < t1 && t0 < b) {
            return true;
        }
    }
    return false;
}

double truth_r0(const net::SiteWeather& w, double layer_km, double wavelength_nm) {
    if (w.rytov_zenith <= 0.0) {
        return 10.0;
    }
    return channel::fried_from_rytov(w.rytov_zenith, layer_km, wavelength_nm);
}

Forecast forecast_feeds(const ScenarioTruth& truth, double t, double horizon_s,
                        const ForecastConfig& cfg, channel::Rng& rng) {
    if (truth.weather == nullptr) {
        throw std::invalid_argument("forecast_feeds: weather timeline missing");
    }
    Forecast f;
    f.t = t;
    f.step_s = cfg.step_s;
    f.horizon_s = std::max(0.0, std::min(horizon_s, truth.end_s - t));
    const size_t n = f.steps();
    const double known_until = t + cfg.nowcast_lead_s;
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Weather as it would be forecast: only changes that began before the
    // nowcast edge are known.
    auto forecast_weather = [&](const std::string& site, double tt) {
        net::SiteWeather w = truth.weather->baseline(site);
        const auto& ivs = truth.weather->intervals();
        for (auto it = ivs.rbegin(); it != ivs.rend(); ++it) {
            if (it->site_id == site && it->t0 <= tt && tt < it->t1 && it->t0 <= known_until) {
                w = it->weather;
                break;
            }
        }
        return w;
    };

    for (const auto& site : truth.sites) {
        auto& series = f.turbulence_index[site];
        series.reserve(n);
        for (size_t k = 0; k < n; ++k) {
            const double tt = t + static_cast<double>(k) * cfg.step_s;
            double r0 = truth_r0(forecast_weather(site, tt), truth.turbulent_layer_km,
                                 truth.wavelength_nm);
            if (cfg.r0_log_sigma > 0.0) {
                r0 *= std::exp(cfg.r0_log_sigma * gauss(rng));
            }
            series.push_back(r0);
        }
        auto& clouds = f.cloud[site];
        for (const auto& iv : truth.weather->intervals()) {
            if (iv.site_id != site || !iv.weather.cloud || iv.t0 > known_until) {
                continue;
            }
            double a = iv.t0;
            double b = iv.t1;
            if (cfg.cloud_timing_sigma_s > 0.0) {
                const double shift = cfg.cloud_timing_sigma_s * gauss(rng);
                a += shift;
                b += shift;
            }
            a = std::max(a, t);
            b = std::min(b, t + f.horizon_s);
            if (b > a) {
                clouds.emplace_back(a, b);
            }
        }
        std::sort(clouds.begin(), clouds.end());
    }

    if (truth.carbon != nullptr) {
        for (const auto& region : truth.regions) {
            auto& series = f.ci[region];
            series.reserve(n);
            for (size_t k = 0; k < n; ++k) {
                const double tt = t + static_cast<double>(k) * cfg.step_s;
                double v = truth.carbon->ci(region, tt);
                if (cfg.ci_noise_frac > 0.0) {
                    v = std::max(0.0, v * (1.0 + cfg.ci_noise_frac * gauss(rng)));
                }
                series.push_back(v);
            }
        }
    }

    if (truth.demand != nullptr) {
        for (const auto& d : *truth.demand) {
            if (d.start_s >= t && d.start_s < t + f.horizon_s) {
                f.demand.push_back(d);
            }
        }
    }
    return f;
}

} // namespace qntn::obs
