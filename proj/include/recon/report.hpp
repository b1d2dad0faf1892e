#pragma once

#include "recon/io.hpp"
#include "recon/metrics.hpp"
#include "recon/registration.hpp"
#include "recon/rigid.hpp"

#include <json.hpp>

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace recon {

struct RegistrationDiagnostics {
    RegistrationResult ransac;
    RegistrationResult icp;
    std::size_t source_points = 0;
    std::size_t target_points = 0;
    std::size_t source_downsampled = 0;
    std::size_t target_downsampled = 0;
};

/// Results of one (geometry, segmenter) run.
struct RunRecord {
    std::string geometry;
    std::string segmenter;
    std::optional<double> foreground_fraction;  // of the reference mask
    std::optional<VoxelMetrics> voxel;
    std::optional<SurfaceMetrics> surface;
    std::optional<RegistrationDiagnostics> registration;
    nlohmann::json alignment;  // voxel-grid alignment details, or null
    nlohmann::json config;     // effective parameters
    std::vector<std::string> warnings;
    std::map<std::string, double> timing_ms;
};

struct MetricsReport {
    std::vector<RunRecord> runs;
};

enum class ReportFormat { json, csv };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    throw Error("unknown report format '" + s + "' (expected json or csv)");
}

/// Fixed CSV column order.
inline const std::vector<std::string>& report_csv_columns() {
    static const std::vector<std::string> cols = {
        "geometry",          "segmenter",         "foreground_fraction",  "tp",
        "tn",                "fp",                "fn",                   "sensitivity",
        "specificity",       "precision",         "dice",                 "jaccard",
        "volume_similarity", "chamfer_sq_mm2",    "chamfer_mm",           "ahd_mm",
        "rmse_mm",           "ransac_fitness",    "ransac_inlier_rmse_mm", "icp_fitness",
        "icp_inlier_rmse_mm", "icp_iterations",   "icp_converged"};
    return cols;
}

inline nlohmann::json transform_to_json(const RigidTransform& t) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) r.push_back({t.rotation(i, 0), t.rotation(i, 1), t.rotation(i, 2)});
    return {{"rotation", r}, {"translation", {t.translation[0], t.translation[1], t.translation[2]}}};
}

inline RigidTransform transform_from_json(const nlohmann::json& j) {
    try {
        RigidTransform t;
        const auto& r = j.at("rotation");
        if (!r.is_array() || r.size() != 3) throw Error("rotation must be a 3x3 array");
        for (int i = 0; i < 3; ++i) {
            if (!r[i].is_array() || r[i].size() != 3) throw Error("rotation must be a 3x3 array");
            for (int c = 0; c < 3; ++c) t.rotation(i, c) = r[i][c].get<double>();
        }
        const auto& tr = j.at("translation");
        if (!tr.is_array() || tr.size() != 3) throw Error("translation must have 3 components");
        for (int a = 0; a < 3; ++a) t.translation[a] = tr[a].get<double>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed transform: ") + e.what());
    }
}

inline nlohmann::json registration_result_json(const RegistrationResult& r) {
    return {{"transform", transform_to_json(r.transform)},
            {"fitness", r.fitness},
            {"inlier_rmse_mm", r.inlier_rmse},
            {"iterations_used", r.iterations_used},
            {"converged", r.converged},
            {"objective_trace", r.objective_trace}};
}

namespace detail {

inline nlohmann::json ratio_json(const Ratio& r) { return r ? nlohmann::json(*r) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json run_to_json(const RunRecord& r) {
    using nlohmann::json;
    json j;
    j["geometry"] = r.geometry;
    j["segmenter"] = r.segmenter;
    j["foreground_fraction"] = r.foreground_fraction ? json(*r.foreground_fraction) : json(nullptr);
    if (r.voxel) {
        const auto& v = *r.voxel;
        j["confusion"] = {{"tp", v.counts.tp}, {"tn", v.counts.tn}, {"fp", v.counts.fp}, {"fn", v.counts.fn}};
        j["sensitivity"] = detail::ratio_json(v.sensitivity);
        j["specificity"] = detail::ratio_json(v.specificity);
        j["precision"] = detail::ratio_json(v.precision);
        j["dice"] = detail::ratio_json(v.dice);
        j["jaccard"] = detail::ratio_json(v.jaccard);
        j["volume_similarity"] = detail::ratio_json(v.volume_similarity);
    } else {
        j["confusion"] = nullptr;
        for (const char* k : {"sensitivity", "specificity", "precision", "dice", "jaccard", "volume_similarity"}) {
            j[k] = nullptr;
        }
    }
    if (r.surface) {
        j["chamfer_sq_mm2"] = r.surface->chamfer_sq_mm2;
        j["chamfer_mm"] = r.surface->chamfer_mm;
        j["ahd_mm"] = r.surface->ahd_mm;
        j["rmse_mm"] = r.surface->rmse_mm;
    } else {
        for (const char* k : {"chamfer_sq_mm2", "chamfer_mm", "ahd_mm", "rmse_mm"}) j[k] = nullptr;
    }
    if (r.registration) {
        const auto& g = *r.registration;
        j["registration"] = {{"ransac", registration_result_json(g.ransac)},
                             {"icp", registration_result_json(g.icp)},
                             {"source_points", g.source_points},
                             {"target_points", g.target_points},
                             {"source_downsampled", g.source_downsampled},
                             {"target_downsampled", g.target_downsampled}};
    } else {
        j["registration"] = nullptr;
    }
    j["alignment"] = r.alignment;
    j["config"] = r.config;
    j["warnings"] = r.warnings;
    j["timing_ms"] = r.timing_ms;
    return j;
}

inline nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : report.runs) arr.push_back(run_to_json(r));
    return arr;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_ratio(const Ratio& r) { return r ? csv_number(*r) : std::string(); }

}  // namespace detail

/// RFC 4180 CSV: header row plus one row per run; undefined values are empty fields.
inline std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    const auto& cols = report_csv_columns();
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << "\r\n";
    for (const auto& r : report.runs) {
        std::vector<std::string> f;
        f.push_back(detail::csv_escape(r.geometry));
        f.push_back(detail::csv_escape(r.segmenter));
        f.push_back(r.foreground_fraction ? detail::csv_number(*r.foreground_fraction) : "");
        if (r.voxel) {
            const auto& v = *r.voxel;
            for (auto n : {v.counts.tp, v.counts.tn, v.counts.fp, v.counts.fn}) f.push_back(std::to_string(n));
            for (const auto* x : {&v.sensitivity, &v.specificity, &v.precision, &v.dice, &v.jaccard, &v.volume_similarity}) {
                f.push_back(detail::csv_ratio(*x));
            }
        } else {
            f.insert(f.end(), 10, "");
        }
        if (r.surface) {
            for (double x : {r.surface->chamfer_sq_mm2, r.surface->chamfer_mm, r.surface->ahd_mm, r.surface->rmse_mm}) {
                f.push_back(detail::csv_number(x));
            }
        } else {
            f.insert(f.end(), 4, "");
        }
        if (r.registration) {
            const auto& g = *r.registration;
            f.push_back(detail::csv_number(g.ransac.fitness));
            f.push_back(detail::csv_number(g.ransac.inlier_rmse));
            f.push_back(detail::csv_number(g.icp.fitness));
            f.push_back(detail::csv_number(g.icp.inlier_rmse));
            f.push_back(std::to_string(g.icp.iterations_used));
            f.push_back(g.icp.converged ? "true" : "false");
        } else {
            f.insert(f.end(), 6, "");
        }
        for (std::size_t c = 0; c < f.size(); ++c) out << (c ? "," : "") << f[c];
        out << "\r\n";
    }
    return out.str();
}

inline std::string format_report(const MetricsReport& report, ReportFormat format) {
    if (format == ReportFormat::csv) return report_to_csv(report);
    return report_to_json(report).dump(2) + "\n";
}

inline void write_report(const MetricsReport& report, const fs::path& path, ReportFormat format) {
    const std::string s = format_report(report, format);
    detail::write_file(path, s.data(), s.size());
}

}  // namespace recon
