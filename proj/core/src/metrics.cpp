#include "resin/metrics.hpp"

#include "resin/errors.hpp"
#include "resin/target_net.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace resin {

namespace {

constexpr std::size_t kLsdFft = 2048;
constexpr std::size_t kLsdHop = 512;
constexpr double kLsdEpsilon = 1e-8;

void check_lengths(const AudioBuffer& x, const AudioBuffer& xhat) {
    if (x.samples.size() != xhat.samples.size()) {
        raise(ErrorCode::LengthMismatch, "signals differ in length");
    }
}

std::string row_id(const ManifestEntry& entry) {
    return entry.speaker_id + "/" + std::filesystem::path(entry.path).filename().string();
}

} // namespace

double mse(const AudioBuffer& x, const AudioBuffer& xhat) {
    check_lengths(x, xhat);
    if (x.samples.empty()) raise(ErrorCode::EmptySignal, "mse of empty signals");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.samples.size(); ++i) {
        const double d = x.samples[i] - xhat.samples[i];
        sum += d * d;
    }
    return sum / static_cast<double>(x.samples.size());
}

double lsd(const AudioBuffer& x, const AudioBuffer& xhat) {
    check_lengths(x, xhat);
    const Spectrogram sx = stft(x, kLsdFft, kLsdHop);
    const Spectrogram sh = stft(xhat, kLsdFft, kLsdHop);
    double frame_sum = 0.0;
    for (std::size_t f = 0; f < sx.frames; ++f) {
        double bin_sum = 0.0;
        for (std::size_t b = 0; b < sx.bins; ++b) {
            const double px = sx.at(f, b) * sx.at(f, b);
            const double ph = sh.at(f, b) * sh.at(f, b);
            const double d = std::log10(px + kLsdEpsilon) - std::log10(ph + kLsdEpsilon);
            bin_sum += d * d;
        }
        frame_sum += std::sqrt(bin_sum / static_cast<double>(sx.bins));
    }
    return frame_sum / static_cast<double>(sx.frames);
}

double si_snr(const AudioBuffer& x, const AudioBuffer& xhat) {
    check_lengths(x, xhat);
    const std::size_t n = x.samples.size();
    if (n == 0) raise(ErrorCode::EmptySignal, "si_snr of empty signals");
    double mean_x = 0.0;
    double mean_h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += x.samples[i];
        mean_h += xhat.samples[i];
    }
    mean_x /= static_cast<double>(n);
    mean_h /= static_cast<double>(n);
    double xx = 0.0;
    double hh = 0.0;
    double hx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = x.samples[i] - mean_x;
        const double b = xhat.samples[i] - mean_h;
        xx += a * a;
        hh += b * b;
        hx += a * b;
    }
    if (xx == 0.0 || hh == 0.0) {
        raise(ErrorCode::DegenerateSignal, "zero-variance signal in si_snr");
    }
    const double alpha = hx / xx;
    const double s_energy = alpha * alpha * xx;
    // |e|^2 = |xhat|^2 - 2 alpha <xhat,x> + alpha^2 |x|^2
    const double e_energy = hh - 2.0 * alpha * hx + alpha * alpha * xx;
    if (e_energy <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(s_energy / e_energy);
}

void finalize_aggregates(MetricReport& report) {
    double mse_sum = 0.0;
    double lsd_sum = 0.0;
    double snr_sum = 0.0;
    std::size_t snr_count = 0;
    report.si_snr_excluded = 0;
    for (const MetricRow& row : report.per_sample) {
        mse_sum += row.mse;
        lsd_sum += row.lsd;
        if (std::isfinite(row.si_snr_db)) {
            snr_sum += row.si_snr_db;
            ++snr_count;
        } else {
            ++report.si_snr_excluded;
        }
    }
    const double n = static_cast<double>(report.per_sample.size());
    report.mean_mse = report.per_sample.empty() ? 0.0 : mse_sum / n;
    report.mean_lsd = report.per_sample.empty() ? 0.0 : lsd_sum / n;
    report.mean_si_snr_db = snr_count == 0 ? std::numeric_limits<double>::quiet_NaN()
                                           : snr_sum / static_cast<double>(snr_count);
}

MetricReport evaluate_set(const HyperNetModel& model, const DatasetManifest& manifest,
                          int target_rate) {
    if (manifest.entries.empty()) raise(ErrorCode::EmptyDataset, "nothing to evaluate");
    if (target_rate <= 0) raise(ErrorCode::InvalidArgument, "target rate must be positive");
    MetricReport report;
    for (const ManifestEntry& entry : manifest.entries) {
        const std::string id = row_id(entry);
        try {
            const AudioBuffer source = read_wav(entry.path);
            const TargetNetParams theta = predict_inr(model, source);
            const std::size_t n =
                retargeted_sample_count(source.samples.size(), source.sample_rate, target_rate);
            if (n < 2) {
                report.failures.push_back({id, "retargeted grid too small"});
                continue;
            }
            const AudioBuffer rendered = render(theta, make_grid(n, target_rate));
            const AudioBuffer truth = sinc_resample(source, target_rate);
            MetricRow row;
            row.id = id;
            row.mse = mse(truth, rendered);
            row.lsd = lsd(truth, rendered);
            try {
                row.si_snr_db = si_snr(truth, rendered);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::DegenerateSignal) throw;
                row.si_snr_db = std::numeric_limits<double>::quiet_NaN();
            }
            report.per_sample.push_back(std::move(row));
        } catch (const Error& e) {
            report.failures.push_back({id, std::string(error_code_name(e.code())) + ": " + e.what()});
        }
    }
    finalize_aggregates(report);
    return report;
}

void write_report_csv(const MetricReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) raise(ErrorCode::IoError, "cannot open " + path + " for writing");
    f << "id,mse,lsd,si_snr_db\n";
    char line[256];
    for (const MetricRow& row : report.per_sample) {
        std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g", row.mse, row.lsd, row.si_snr_db);
        f << row.id << "," << line << "\n";
    }
    if (!f) raise(ErrorCode::IoError, "short write to " + path);
}

void write_report_json(const MetricReport& report, const std::string& path) {
    nlohmann::json j;
    j["per_sample"] = nlohmann::json::array();
    for (const MetricRow& row : report.per_sample) {
        nlohmann::json r = {{"id", row.id}, {"mse", row.mse}, {"lsd", row.lsd}};
        if (std::isfinite(row.si_snr_db)) {
            r["si_snr_db"] = row.si_snr_db;
        } else {
            r["si_snr_db"] = nullptr;
            r["si_snr_note"] = std::isnan(row.si_snr_db) ? "degenerate" : "infinite";
        }
        j["per_sample"].push_back(std::move(r));
    }
    nlohmann::json agg = {{"items", report.per_sample.size()},
                          {"mse", report.mean_mse},
                          {"lsd", report.mean_lsd},
                          {"si_snr_excluded", report.si_snr_excluded}};
    if (std::isfinite(report.mean_si_snr_db)) {
        agg["si_snr_db"] = report.mean_si_snr_db;
    } else {
        agg["si_snr_db"] = nullptr;
    }
    j["aggregate"] = std::move(agg);
    j["failures"] = nlohmann::json::array();
    for (const MetricFailure& failure : report.failures) {
        j["failures"].push_back({{"id", failure.id}, {"reason", failure.reason}});
    }
    std::ofstream f(path);
    if (!f) raise(ErrorCode::IoError, "cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
    if (!f) raise(ErrorCode::IoError, "short write to " + path);
}

} // namespace resin
