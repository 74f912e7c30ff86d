#ifndef HYPERSAC_TELEMETRY_HPP_
#define HYPERSAC_TELEMETRY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "hypersac/common.hpp"
#include "hypersac/network.hpp"
#include "hypersac/tensor.hpp"

namespace hypersac {

// One (squared norm, dimension count) entry per parameter group.
struct NormGroup {
    double norm_sq = 0.0;
    std::int64_t dims = 0;
};

// sqrt(sum_i w_i * norm_sq_i) with dimension-fraction weights
// w_i = dims_i / sum_j dims_j.
inline double weighted_norm(const std::vector<NormGroup>& groups) {
    if (groups.empty()) throw UsageError("weighted_norm: empty group list");
    double total_dims = 0.0;
    for (const auto& g : groups) {
        if (g.dims <= 0) throw UsageError("weighted_norm: group dims must be > 0");
        total_dims += static_cast<double>(g.dims);
    }
    double acc = 0.0;
    for (const auto& g : groups) acc += (static_cast<double>(g.dims) / total_dims) * g.norm_sq;
    return std::sqrt(acc);
}

struct ElrGroup {
    double grad_norm_sq = 0.0;
    double param_norm_sq = 0.0;
    std::int64_t dims = 0;
};

// Effective learning rate before the global step size:
// sqrt(sum_i w_i * ||g_i||^2 / ||theta_i||^2), w_i as in weighted_norm.
inline double elr(const std::vector<ElrGroup>& groups) {
    if (groups.empty()) throw UsageError("elr: empty group list");
    double total_dims = 0.0;
    for (const auto& g : groups) {
        if (g.dims <= 0) throw UsageError("elr: group dims must be > 0");
        if (g.param_norm_sq <= 0.0) throw NumericError("elr: zero parameter norm");
        total_dims += static_cast<double>(g.dims);
    }
    double acc = 0.0;
    for (const auto& g : groups)
        acc += (static_cast<double>(g.dims) / total_dims) * (g.grad_norm_sq / g.param_norm_sq);
    return std::sqrt(acc);
}

// Per-step snapshot of critic norms and ELR, split encoder/predictor.
struct TelemetryRecord {
    std::uint64_t update_step = 0;
    double enc_feat_norm = 0.0;
    double enc_w_norm_constrained = 0.0;
    double enc_w_norm_all = 0.0;
    double enc_g_norm = 0.0;
    double enc_elr = 0.0;
    double pred_feat_norm = 0.0;
    double pred_w_norm_constrained = 0.0;
    double pred_w_norm_all = 0.0;
    double pred_g_norm = 0.0;
    double pred_elr = 0.0;
};

inline const char* telemetry_csv_header() {
    return "update_step,enc_feat_norm,enc_w_norm_constrained,enc_w_norm_all,enc_g_norm,enc_elr,"
           "pred_feat_norm,pred_w_norm_constrained,pred_w_norm_all,pred_g_norm,pred_elr";
}

inline std::string telemetry_csv_row(const TelemetryRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                  static_cast<unsigned long long>(r.update_step), r.enc_feat_norm, r.enc_w_norm_constrained,
                  r.enc_w_norm_all, r.enc_g_norm, r.enc_elr, r.pred_feat_norm, r.pred_w_norm_constrained,
                  r.pred_w_norm_all, r.pred_g_norm, r.pred_elr);
    return buf;
}

namespace detail {

// Matrices use the mean squared row norm (1 for unit rows); vectors use the
// plain squared l2 norm. Keeps the constrained-weight series at 1 while all
// rows stay on the sphere.
inline double group_norm_sq(const std::vector<double>& data, const Shape& shape) {
    double ss = 0.0;
    for (double v : data) ss += v * v;
    if (shape.size() == 2 && shape[0] > 0) ss /= static_cast<double>(shape[0]);
    return ss;
}

inline double batch_feature_norm_sq(const Tensor& feat) {
    const std::int64_t rows = feat.rows(), d = feat.cols();
    const auto& v = feat.value();
    double acc = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        const double* p = v.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) ss += p[j] * p[j];
        acc += ss;
    }
    return acc / static_cast<double>(rows);
}

}  // namespace detail

// Builds a telemetry record from one critic's parameters (with the critic-loss
// gradients still present) and the stage outputs of its forward pass. The
// feature list is the encoder stage outputs followed by the two head stages.
// Each parameter is its own group; scalers and interpolation vectors count
// toward the all-parameter series but not the constrained one. Features are
// weighted by the parameter dimensions of the stage that produced them.
inline TelemetryRecord record_telemetry(std::uint64_t update_step, const std::vector<ParamRef>& params,
                                        const std::string& prefix, const std::vector<Tensor>& features) {
    TelemetryRecord rec;
    rec.update_step = update_step;

    std::vector<NormGroup> w_con[2], w_all[2], g_all[2];
    std::vector<ElrGroup> elr_groups[2];
    for (const auto& p : params) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        const int side = p.encoder ? 0 : 1;
        const auto dims = p.tensor.numel();
        const double wsq = detail::group_norm_sq(p.tensor.value(), p.tensor.shape());
        w_all[side].push_back({wsq, dims});
        if (p.constrained) w_con[side].push_back({wsq, dims});
        double gsq_raw = 0.0, wsq_raw = 0.0;
        if (p.tensor.has_grad())
            for (double v : p.tensor.grad()) gsq_raw += v * v;
        for (double v : p.tensor.value()) wsq_raw += v * v;
        double g_group = 0.0;
        if (p.tensor.has_grad()) g_group = detail::group_norm_sq(p.tensor.grad(), p.tensor.shape());
        g_all[side].push_back({g_group, dims});
        elr_groups[side].push_back({gsq_raw, wsq_raw, dims});
    }

    // Stage grouping for feature weighting: encoder stages are the embedding
    // and each block; predictor stages are the two head maps.
    std::vector<std::int64_t> stage_dims;
    std::vector<int> stage_side;
    {
        std::int64_t embed_dims = 0;
        std::vector<std::int64_t> block_dims;
        std::int64_t head1_dims = 0, head2_dims = 0;
        for (const auto& p : params) {
            if (p.name.rfind(prefix, 0) != 0) continue;
            const std::string rest = p.name.substr(prefix.size());
            if (rest.rfind("/enc/embed", 0) == 0) {
                embed_dims += p.tensor.numel();
            } else if (rest.rfind("/enc/block", 0) == 0) {
                const std::size_t idx = static_cast<std::size_t>(std::stoll(rest.substr(10)));
                if (block_dims.size() <= idx) block_dims.resize(idx + 1, 0);
                block_dims[idx] += p.tensor.numel();
            } else if (rest == "/head/w1" || rest == "/head/s") {
                head1_dims += p.tensor.numel();
            } else if (rest == "/head/w2") {
                head2_dims += p.tensor.numel();
            }
        }
        stage_dims.push_back(embed_dims);
        stage_side.push_back(0);
        for (auto d : block_dims) {
            stage_dims.push_back(d);
            stage_side.push_back(0);
        }
        stage_dims.push_back(head1_dims);
        stage_side.push_back(1);
        stage_dims.push_back(head2_dims);
        stage_side.push_back(1);
    }
    if (features.size() != stage_dims.size())
        throw UsageError("record_telemetry: feature count " + std::to_string(features.size()) +
                         " does not match stage count " + std::to_string(stage_dims.size()));

    std::vector<NormGroup> feat_groups[2];
    for (std::size_t i = 0; i < features.size(); ++i)
        feat_groups[stage_side[i]].push_back({detail::batch_feature_norm_sq(features[i]), stage_dims[i]});

    rec.enc_feat_norm = weighted_norm(feat_groups[0]);
    rec.enc_w_norm_constrained = w_con[0].empty() ? 0.0 : weighted_norm(w_con[0]);
    rec.enc_w_norm_all = weighted_norm(w_all[0]);
    rec.enc_g_norm = weighted_norm(g_all[0]);
    rec.enc_elr = elr(elr_groups[0]);
    rec.pred_feat_norm = weighted_norm(feat_groups[1]);
    rec.pred_w_norm_constrained = w_con[1].empty() ? 0.0 : weighted_norm(w_con[1]);
    rec.pred_w_norm_all = weighted_norm(w_all[1]);
    rec.pred_g_norm = weighted_norm(g_all[1]);
    rec.pred_elr = elr(elr_groups[1]);
    return rec;
}

// Column summary used by the analyze command.
struct TelemetrySummary {
    std::vector<std::string> columns;
    std::vector<double> col_min, col_max, col_mean;
    double enc_elr_drift_ratio = 1.0;  // max/min over the second half
    std::size_t rows = 0;
};

inline TelemetrySummary summarize_telemetry(const std::vector<TelemetryRecord>& records) {
    TelemetrySummary s;
    s.columns = {"enc_feat_norm", "enc_w_norm_constrained", "enc_w_norm_all", "enc_g_norm", "enc_elr",
                 "pred_feat_norm", "pred_w_norm_constrained", "pred_w_norm_all", "pred_g_norm", "pred_elr"};
    s.rows = records.size();
    auto fields = [](const TelemetryRecord& r) {
        return std::vector<double>{r.enc_feat_norm,  r.enc_w_norm_constrained,  r.enc_w_norm_all,
                                   r.enc_g_norm,     r.enc_elr,                 r.pred_feat_norm,
                                   r.pred_w_norm_constrained, r.pred_w_norm_all, r.pred_g_norm,
                                   r.pred_elr};
    };
    const std::size_t ncol = s.columns.size();
    s.col_min.assign(ncol, 0.0);
    s.col_max.assign(ncol, 0.0);
    s.col_mean.assign(ncol, 0.0);
    if (records.empty()) return s;
    for (std::size_t c = 0; c < ncol; ++c) {
        double lo = fields(records[0])[c], hi = lo, sum = 0.0;
        for (const auto& r : records) {
            const double v = fields(r)[c];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        s.col_min[c] = lo;
        s.col_max[c] = hi;
        s.col_mean[c] = sum / static_cast<double>(records.size());
    }
    // Drift of the encoder ELR over the second half of the run.
    const std::size_t start = records.size() / 2;
    double lo = records[start].enc_elr, hi = records[start].enc_elr;
    for (std::size_t i = start; i < records.size(); ++i) {
        lo = std::min(lo, records[i].enc_elr);
        hi = std::max(hi, records[i].enc_elr);
    }
    s.enc_elr_drift_ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    return s;
}

inline std::vector<TelemetryRecord> parse_telemetry_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("telemetry: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw UsageError("telemetry: empty file '" + path + "'");
    if (line != telemetry_csv_header()) throw UsageError("telemetry: unexpected header in '" + path + "'");
    std::vector<TelemetryRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TelemetryRecord r;
        unsigned long long step = 0;
        const int got = std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &step,
                                    &r.enc_feat_norm, &r.enc_w_norm_constrained, &r.enc_w_norm_all, &r.enc_g_norm,
                                    &r.enc_elr, &r.pred_feat_norm, &r.pred_w_norm_constrained, &r.pred_w_norm_all,
                                    &r.pred_g_norm, &r.pred_elr);
        if (got != 11) throw UsageError("telemetry: malformed row '" + line + "'");
        r.update_step = step;
        out.push_back(r);
    }
    return out;
}

}  // namespace hypersac

#endif  // HYPERSAC_TELEMETRY_HPP_
