#pragma once

#include "resin/audio.hpp"
#include "resin/dataset.hpp"
#include "resin/hypernet.hpp"

#include <string>
#include <vector>

namespace resin {

struct MetricRow {
    std::string id;
    double mse = 0.0;
    double lsd = 0.0;
    double si_snr_db = 0.0; // +inf when the error term vanishes; NaN when degenerate
};

struct MetricFailure {
    std::string id;
    std::string reason;
};

struct MetricReport {
    std::vector<MetricRow> per_sample;
    std::vector<MetricFailure> failures; // excluded from every aggregate
    double mean_mse = 0.0;
    double mean_lsd = 0.0;
    double mean_si_snr_db = 0.0;         // finite rows only; NaN when there are none
    std::size_t si_snr_excluded = 0;     // rows with +inf or degenerate SI-SNR
};

// Mean squared sample difference.
double mse(const AudioBuffer& x, const AudioBuffer& xhat);

// Log-spectral distance over power spectrograms (fft 2048, hop 512, Hann,
// epsilon 1e-8): frame-wise RMS of log10 power differences, averaged over
// frames.
double lsd(const AudioBuffer& x, const AudioBuffer& xhat);

// Scale-invariant SNR in dB. Both signals are mean-removed; the reference
// projection s = (<xhat,x>/<x,x>) x and residual e = xhat - s give
// 10 log10(|s|^2/|e|^2). Returns +inf when |e|^2 == 0; raises
// DegenerateSignal when either signal has zero variance.
double si_snr(const AudioBuffer& x, const AudioBuffer& xhat);

// Per entry: predict an INR from the ingested audio, render it on the
// target-rate grid, and score against the resampling oracle. Item failures
// are recorded and excluded; a degenerate SI-SNR only excludes that column.
MetricReport evaluate_set(const HyperNetModel& model, const DatasetManifest& manifest,
                          int target_rate);

void finalize_aggregates(MetricReport& report);

// "id,mse,lsd,si_snr_db" rows; non-finite SI-SNR written as inf/nan.
void write_report_csv(const MetricReport& report, const std::string& path);
// Per-sample rows plus an aggregate block.
void write_report_json(const MetricReport& report, const std::string& path);

} // namespace resin
