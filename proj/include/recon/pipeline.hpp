#pragma once

#include "recon/io.hpp"
#include "recon/metrics.hpp"
#include "recon/phantom.hpp"
#include "recon/registration.hpp"
#include "recon/report.hpp"
#include "recon/segmentation.hpp"
#include "recon/surface.hpp"
#include "recon/voxel_align.hpp"
#include "recon/voxelize.hpp"

#include <json.hpp>

#include <chrono>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace recon {

/// Error raised by run_pipeline; names the stage that failed.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct ReferencePhantom {
    PhantomKind kind = PhantomKind::sphere;
    double radius_mm = 10.0;
    double wall_mm = 0.5;
    int subdivisions = 5;
};

struct InputPhantom {
    PhantomKind kind = PhantomKind::sphere;
    double radius_mm = 10.0;
    double wall_mm = 0.5;
    std::array<std::int64_t, 3> dims{96, 96, 96};
    Vec3 spacing_mm{0.25, 0.25, 0.25};
    std::optional<Vec3> origin_mm;  // default centers the grid on the world origin
    double fg_mean = 1000.0;
    double bg_mean = 0.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    GridGeometry geometry() const {
        Vec3 o;
        if (origin_mm) {
            o = *origin_mm;
        } else {
            for (int a = 0; a < 3; ++a) o[a] = -0.5 * static_cast<double>(dims[a] - 1) * spacing_mm[a];
        }
        return GridGeometry(dims, spacing_mm, o);
    }

    PhantomSpec spec() const {
        PhantomSpec s;
        s.kind = kind;
        s.radius_mm = radius_mm;
        s.wall_mm = wall_mm;
        s.geometry = geometry();
        s.fg_mean = fg_mean;
        s.bg_mean = bg_mean;
        s.noise_sigma = noise_sigma;
        s.seed = seed;
        return s;
    }
};

struct SmoothingConfig {
    bool enabled = false;
    double lambda = 0.5;
    int iterations = 10;
};

struct OutputConfig {
    std::string report;  // empty: not written
    ReportFormat format = ReportFormat::json;
    std::string dump_intermediates;  // empty: no dumps
};

struct PipelineConfig {
    std::string name;  // geometry label; defaults to the reference kind or mesh file stem
    std::optional<std::string> reference_mesh;
    std::optional<ReferencePhantom> reference_phantom;
    std::optional<std::string> input_volume;
    std::optional<InputPhantom> input_phantom;
    Vec3 coarse_euler_deg = Vec3::Zero();
    Vec3 coarse_translation_mm = Vec3::Zero();
    SegmentationConfig segmentation;
    RegistrationConfig registration;
    SmoothingConfig smoothing;
    OutputConfig outputs;

    std::string geometry_label() const {
        if (!name.empty()) return name;
        if (reference_phantom) return to_string(reference_phantom->kind);
        if (reference_mesh) return fs::path(*reference_mesh).stem().string();
        return "unnamed";
    }

    /// Replaces every seed (phantom noise, GMM subsampling, RANSAC).
    void override_seed(std::uint64_t seed) {
        if (input_phantom) input_phantom->seed = seed;
        segmentation.gmm.seed = seed;
        registration.ransac.seed = seed;
    }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw Error("config: '" + where + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
        if (!ok.count(k)) throw Error("config: unknown key '" + k + "' in '" + where + "'");
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline Vec3 read_vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw Error("config: '" + what + "' must be an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline PhantomKind parse_phantom_kind(const std::string& s) {
    if (s == "sphere") return PhantomKind::sphere;
    if (s == "shell") return PhantomKind::shell;
    throw Error("config: unknown phantom kind '" + s + "' (expected sphere or shell)");
}

inline Connectivity parse_connectivity(int c) {
    if (c == 6) return Connectivity::six;
    if (c == 26) return Connectivity::twenty_six;
    throw Error("config: connectivity must be 6 or 26");
}

inline std::string resolve_path(const std::string& p, const fs::path& base) {
    const fs::path q(p);
    if (q.is_absolute() || base.empty()) return q.lexically_normal().string();
    return (base / q).lexically_normal().string();
}

}  // namespace detail

/// Strict parse: unknown keys are errors. Relative paths resolve against `base_dir`.
inline PipelineConfig parse_pipeline_config(const nlohmann::json& j, const fs::path& base_dir = {}) {
    using detail::check_keys;
    using detail::read_opt;
    using nlohmann::json;
    PipelineConfig c;
    try {
        check_keys(j, "<root>",
                   {"name", "reference", "input", "coarse_align", "segmentation", "registration", "smoothing", "outputs"});
        read_opt(j, "name", c.name);

        if (j.contains("reference")) {
            const auto& ref = j.at("reference");
            check_keys(ref, "reference", {"mesh", "phantom"});
            if (ref.contains("mesh") == ref.contains("phantom")) {
                throw Error("config: 'reference' needs exactly one of 'mesh' or 'phantom'");
            }
            if (ref.contains("mesh")) {
                c.reference_mesh = detail::resolve_path(ref.at("mesh").get<std::string>(), base_dir);
            } else {
                const auto& p = ref.at("phantom");
                check_keys(p, "reference.phantom", {"kind", "radius_mm", "wall_mm", "subdivisions"});
                ReferencePhantom rp;
                if (p.contains("kind")) rp.kind = detail::parse_phantom_kind(p.at("kind").get<std::string>());
                read_opt(p, "radius_mm", rp.radius_mm);
                read_opt(p, "wall_mm", rp.wall_mm);
                read_opt(p, "subdivisions", rp.subdivisions);
                c.reference_phantom = rp;
            }
        }

        if (j.contains("input")) {
            const auto& in = j.at("input");
            check_keys(in, "input", {"volume", "phantom"});
            if (in.contains("volume") == in.contains("phantom")) {
                throw Error("config: 'input' needs exactly one of 'volume' or 'phantom'");
            }
            if (in.contains("volume")) {
                c.input_volume = detail::resolve_path(in.at("volume").get<std::string>(), base_dir);
            } else {
                const auto& p = in.at("phantom");
                check_keys(p, "input.phantom",
                           {"kind", "radius_mm", "wall_mm", "dims", "spacing_mm", "origin_mm", "fg_mean", "bg_mean",
                            "noise_sigma", "seed"});
                InputPhantom ip;
                if (p.contains("kind")) ip.kind = detail::parse_phantom_kind(p.at("kind").get<std::string>());
                read_opt(p, "radius_mm", ip.radius_mm);
                read_opt(p, "wall_mm", ip.wall_mm);
                if (p.contains("dims")) {
                    const auto& d = p.at("dims");
                    if (!d.is_array() || d.size() != 3) throw Error("config: 'input.phantom.dims' must have 3 integers");
                    for (int a = 0; a < 3; ++a) ip.dims[a] = d[a].get<std::int64_t>();
                }
                if (p.contains("spacing_mm")) ip.spacing_mm = detail::read_vec3(p.at("spacing_mm"), "spacing_mm");
                if (p.contains("origin_mm")) ip.origin_mm = detail::read_vec3(p.at("origin_mm"), "origin_mm");
                read_opt(p, "fg_mean", ip.fg_mean);
                read_opt(p, "bg_mean", ip.bg_mean);
                read_opt(p, "noise_sigma", ip.noise_sigma);
                read_opt(p, "seed", ip.seed);
                c.input_phantom = ip;
            }
        }

        if (j.contains("coarse_align")) {
            const auto& a = j.at("coarse_align");
            check_keys(a, "coarse_align", {"euler_deg", "translation_mm"});
            if (a.contains("euler_deg")) c.coarse_euler_deg = detail::read_vec3(a.at("euler_deg"), "euler_deg");
            if (a.contains("translation_mm")) {
                c.coarse_translation_mm = detail::read_vec3(a.at("translation_mm"), "translation_mm");
            }
        }

        if (j.contains("segmentation")) {
            const auto& s = j.at("segmentation");
            check_keys(s, "segmentation", {"method", "gmm", "region_growing"});
            if (s.contains("method")) c.segmentation.method = parse_segmentation_method(s.at("method").get<std::string>());
            if (s.contains("gmm")) {
                const auto& g = s.at("gmm");
                check_keys(g, "segmentation.gmm", {"n_components", "max_iters", "tol", "seed", "max_samples"});
                read_opt(g, "n_components", c.segmentation.gmm.n_components);
                read_opt(g, "max_iters", c.segmentation.gmm.max_iters);
                read_opt(g, "tol", c.segmentation.gmm.tol);
                read_opt(g, "seed", c.segmentation.gmm.seed);
                read_opt(g, "max_samples", c.segmentation.gmm.max_samples);
            }
            if (s.contains("region_growing")) {
                const auto& r = s.at("region_growing");
                check_keys(r, "segmentation.region_growing", {"seeds", "tolerance", "connectivity"});
                if (r.contains("seeds")) {
                    for (const auto& sd : r.at("seeds")) {
                        if (!sd.is_array() || sd.size() != 3) throw Error("config: each seed must be [i, j, k]");
                        c.segmentation.rg.seeds.push_back(
                            {sd[0].get<std::int64_t>(), sd[1].get<std::int64_t>(), sd[2].get<std::int64_t>()});
                    }
                }
                read_opt(r, "tolerance", c.segmentation.rg.tolerance);
                if (r.contains("connectivity")) {
                    c.segmentation.rg.connectivity = detail::parse_connectivity(r.at("connectivity").get<int>());
                }
            }
        }

        if (j.contains("registration")) {
            const auto& r = j.at("registration");
            check_keys(r, "registration", {"downsample_voxel_mm", "normal_k", "fpfh_radius_mm", "ransac", "icp"});
            auto& rc = c.registration;
            read_opt(r, "downsample_voxel_mm", rc.downsample_voxel);
            read_opt(r, "normal_k", rc.normal_k);
            if (r.contains("fpfh_radius_mm")) rc.fpfh_radius = r.at("fpfh_radius_mm").get<double>();
            if (r.contains("ransac")) {
                const auto& s = r.at("ransac");
                check_keys(s, "registration.ransac",
                           {"n_sample_points", "max_iterations", "confidence", "distance_threshold_mm",
                            "edge_length_ratio", "seed"});
                read_opt(s, "n_sample_points", rc.ransac.n_sample_points);
                read_opt(s, "max_iterations", rc.ransac.max_iterations);
                read_opt(s, "confidence", rc.ransac.confidence);
                if (s.contains("distance_threshold_mm")) {
                    rc.ransac_distance_threshold = s.at("distance_threshold_mm").get<double>();
                }
                read_opt(s, "edge_length_ratio", rc.ransac.edge_length_ratio);
                read_opt(s, "seed", rc.ransac.seed);
            }
            if (r.contains("icp")) {
                const auto& s = r.at("icp");
                check_keys(s, "registration.icp", {"max_correspondence_mm", "max_iterations", "rel_change_tol"});
                if (s.contains("max_correspondence_mm")) {
                    rc.icp_max_correspondence = s.at("max_correspondence_mm").get<double>();
                }
                read_opt(s, "max_iterations", rc.icp.max_iterations);
                read_opt(s, "rel_change_tol", rc.icp.rel_change_tol);
            }
        }

        if (j.contains("smoothing")) {
            const auto& s = j.at("smoothing");
            check_keys(s, "smoothing", {"enabled", "lambda", "iterations"});
            read_opt(s, "enabled", c.smoothing.enabled);
            read_opt(s, "lambda", c.smoothing.lambda);
            read_opt(s, "iterations", c.smoothing.iterations);
        }

        if (j.contains("outputs")) {
            const auto& o = j.at("outputs");
            check_keys(o, "outputs", {"report", "format", "dump_intermediates"});
            if (o.contains("report")) c.outputs.report = detail::resolve_path(o.at("report").get<std::string>(), base_dir);
            if (o.contains("format")) c.outputs.format = parse_report_format(o.at("format").get<std::string>());
            if (o.contains("dump_intermediates")) {
                c.outputs.dump_intermediates =
                    detail::resolve_path(o.at("dump_intermediates").get<std::string>(), base_dir);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_pipeline_config(j, path.parent_path());
}

/// Every effective parameter, in the same schema parse_pipeline_config reads.
/// Output locations are not part of the echo.
inline nlohmann::json config_to_json(const PipelineConfig& c) {
    using nlohmann::json;
    auto v3 = [](const Vec3& v) { return json::array({v[0], v[1], v[2]}); };
    json j;
    j["name"] = c.geometry_label();
    if (c.reference_mesh) {
        j["reference"] = {{"mesh", *c.reference_mesh}};
    } else if (c.reference_phantom) {
        const auto& p = *c.reference_phantom;
        j["reference"] = {{"phantom",
                           {{"kind", to_string(p.kind)},
                            {"radius_mm", p.radius_mm},
                            {"wall_mm", p.wall_mm},
                            {"subdivisions", p.subdivisions}}}};
    }
    if (c.input_volume) {
        j["input"] = {{"volume", *c.input_volume}};
    } else if (c.input_phantom) {
        const auto& p = *c.input_phantom;
        j["input"] = {{"phantom",
                       {{"kind", to_string(p.kind)},
                        {"radius_mm", p.radius_mm},
                        {"wall_mm", p.wall_mm},
                        {"dims", p.dims},
                        {"spacing_mm", v3(p.spacing_mm)},
                        {"origin_mm", v3(p.geometry().origin)},
                        {"fg_mean", p.fg_mean},
                        {"bg_mean", p.bg_mean},
                        {"noise_sigma", p.noise_sigma},
                        {"seed", p.seed}}}};
    }
    j["coarse_align"] = {{"euler_deg", v3(c.coarse_euler_deg)}, {"translation_mm", v3(c.coarse_translation_mm)}};
    const auto& s = c.segmentation;
    json seeds = json::array();
    for (const auto& sd : s.rg.seeds) seeds.push_back(json::array({sd[0], sd[1], sd[2]}));
    j["segmentation"] = {{"method", to_string(s.method)},
                         {"gmm",
                          {{"n_components", s.gmm.n_components},
                           {"max_iters", s.gmm.max_iters},
                           {"tol", s.gmm.tol},
                           {"seed", s.gmm.seed},
                           {"max_samples", s.gmm.max_samples}}},
                         {"region_growing",
                          {{"seeds", seeds},
                           {"tolerance", s.rg.tolerance},
                           {"connectivity", static_cast<int>(s.rg.connectivity)}}}};
    const auto& r = c.registration;
    j["registration"] = {{"downsample_voxel_mm", r.downsample_voxel},
                         {"normal_k", r.normal_k},
                         {"fpfh_radius_mm", r.effective_fpfh_radius()},
                         {"ransac",
                          {{"n_sample_points", r.ransac.n_sample_points},
                           {"max_iterations", r.ransac.max_iterations},
                           {"confidence", r.ransac.confidence},
                           {"distance_threshold_mm", r.effective_distance_threshold()},
                           {"edge_length_ratio", r.ransac.edge_length_ratio},
                           {"seed", r.ransac.seed}}},
                         {"icp",
                          {{"max_correspondence_mm", r.effective_max_correspondence()},
                           {"max_iterations", r.icp.max_iterations},
                           {"rel_change_tol", r.icp.rel_change_tol}}}};
    j["smoothing"] = {{"enabled", c.smoothing.enabled},
                      {"lambda", c.smoothing.lambda},
                      {"iterations", c.smoothing.iterations}};
    return j;
}

// ---------------------------------------------------------------------------
// Pipeline

/// Reference surface for a phantom: icosphere, plus an inward-facing inner
/// icosphere for shells.
inline TriangleMesh reference_phantom_mesh(const ReferencePhantom& p, const Vec3& center) {
    if (!(p.radius_mm > 0.0)) throw Error("reference phantom radius must be positive");
    TriangleMesh mesh = make_icosphere(center, p.radius_mm, p.subdivisions);
    if (p.kind == PhantomKind::shell) {
        if (!(p.wall_mm > 0.0 && p.wall_mm < p.radius_mm)) {
            throw Error("shell wall must satisfy 0 < wall < outer radius");
        }
        const TriangleMesh inner = make_icosphere(center, p.radius_mm - p.wall_mm, p.subdivisions);
        const auto off = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.insert(mesh.vertices.end(), inner.vertices.begin(), inner.vertices.end());
        for (const auto& t : inner.triangles) mesh.triangles.push_back({t[0] + off, t[2] + off, t[1] + off});
    }
    return mesh;
}

/// Foreground centroid of a mask (mm); the pivot of the coarse rotation.
inline Vec3 foreground_centroid(const BinaryMask& mask) {
    const auto pts = foreground_centers(mask);
    if (pts.empty()) throw Error("mask has no foreground");
    Vec3 c = Vec3::Zero();
    for (const auto& p : pts) c += p;
    return c / static_cast<double>(pts.size());
}

/// Coarse pre-alignment: intrinsic x-y-z Euler rotation about `pivot`, then translation.
inline RigidTransform coarse_transform(const Vec3& euler_deg, const Vec3& translation_mm, const Vec3& pivot) {
    return rotate_about(euler_xyz_deg(euler_deg), pivot, translation_mm);
}

/// Everything a run produces besides the report record.
struct PipelineArtifacts {
    ScalarVolume input;
    TriangleMesh reference_mesh;
    BinaryMask reference_mask;
    BinaryMask segmented_mask;
    MaskAlignment alignment;
    TriangleMesh recon_surface;
    TriangleMesh reference_surface;
    CompositeRegistration registration;
};

inline nlohmann::json alignment_json(const MaskAlignment& a) {
    auto lm = [](const LandmarkSet& l) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : l.points) pts.push_back({p[0], p[1], p[2]});
        return nlohmann::json{{"points_mm", pts},
                              {"eigenvalues", l.eigenvalues},
                              {"isotropic_fallback", l.isotropic_fallback}};
    };
    return {{"coarse", transform_to_json(a.coarse)},
            {"fine", transform_to_json(a.fine)},
            {"total", transform_to_json(a.total)},
            {"moving_landmarks", lm(a.moving_landmarks)},
            {"fixed_landmarks", lm(a.fixed_landmarks)}};
}

namespace detail {

class StageTimer {
public:
    explicit StageTimer(RunRecord& rec) : rec_(rec) {}

    template <typename F>
    auto run(const std::string& stage, F&& f) -> decltype(f()) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(f())>) {
                f();
                record(stage, t0);
            } else {
                auto r = f();
                record(stage, t0);
                return r;
            }
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(stage, e.what());
        }
    }

private:
    void record(const std::string& stage, std::chrono::steady_clock::time_point t0) {
        rec_.timing_ms[stage] =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    RunRecord& rec_;
};

}  // namespace detail

/// Runs the full workflow for one config. Throws StageError; writes nothing.
inline RunRecord run_pipeline(const PipelineConfig& cfg, PipelineArtifacts* artifacts = nullptr) {
    RunRecord rec;
    detail::StageTimer timer(rec);
    PipelineArtifacts a;

    timer.run("config", [&] {
        if (cfg.reference_mesh.has_value() == cfg.reference_phantom.has_value()) {
            throw Error("exactly one reference source is required");
        }
        if (cfg.input_volume.has_value() == cfg.input_phantom.has_value()) {
            throw Error("exactly one input source is required");
        }
        if (cfg.reference_mesh && !fs::exists(*cfg.reference_mesh)) {
            throw Error("reference mesh '" + *cfg.reference_mesh + "' does not exist");
        }
        if (cfg.input_volume && !fs::exists(detail::header_path_for(*cfg.input_volume))) {
            throw Error("input volume '" + *cfg.input_volume + "' does not exist");
        }
        cfg.registration.validate();
        if (cfg.segmentation.method == SegmentationMethod::region_growing && cfg.segmentation.rg.seeds.empty()) {
            throw Error("region growing needs at least one seed");
        }
        rec.geometry = cfg.geometry_label();
        rec.segmenter = to_string(cfg.segmentation.method);
        rec.config = config_to_json(cfg);
    });

    timer.run("input", [&] {
        a.input = cfg.input_volume ? read_scalar_volume(*cfg.input_volume) : make_phantom(cfg.input_phantom->spec());
    });
    const GridGeometry& geom = a.input.geometry();

    timer.run("reference", [&] {
        a.reference_mesh = cfg.reference_mesh ? read_mesh(*cfg.reference_mesh)
                                              : reference_phantom_mesh(*cfg.reference_phantom, geom.center());
    });
    timer.run("voxelize", [&] { a.reference_mask = voxelize_mesh(a.reference_mesh, geom); });
    rec.foreground_fraction = foreground_fraction(a.reference_mask);

    timer.run("segment", [&] {
        auto s = segment(a.input, cfg.segmentation);
        a.segmented_mask = std::move(s.mask);
        for (auto& w : s.warnings) rec.warnings.push_back("segment: " + w);
    });

    Vec3 pivot = Vec3::Zero();
    timer.run("align", [&] {
        pivot = foreground_centroid(a.segmented_mask);
        const auto coarse = coarse_transform(cfg.coarse_euler_deg, cfg.coarse_translation_mm, pivot);
        a.alignment = align_masks(a.segmented_mask, a.reference_mask, coarse);
    });
    rec.alignment = alignment_json(a.alignment);
    rec.alignment["coarse_pivot_mm"] = {pivot[0], pivot[1], pivot[2]};

    timer.run("voxel_metrics", [&] { rec.voxel = voxel_metrics(a.alignment.aligned, a.reference_mask); });

    timer.run("extract", [&] {
        std::vector<std::string> w;
        a.recon_surface = marching_cubes(a.segmented_mask, &w);
        a.reference_surface = marching_cubes(a.reference_mask, &w);
        for (auto& s : w) rec.warnings.push_back("extract: " + s);
        if (a.recon_surface.triangles.empty() || a.reference_surface.triangles.empty()) {
            throw Error("isosurface is empty");
        }
    });

    if (cfg.smoothing.enabled) {
        timer.run("smooth", [&] {
            a.recon_surface = laplacian_smooth(a.recon_surface, cfg.smoothing.lambda, cfg.smoothing.iterations);
            a.reference_surface =
                laplacian_smooth(a.reference_surface, cfg.smoothing.lambda, cfg.smoothing.iterations);
        });
    }

    const PointCloud recon_cloud = mesh_to_pointcloud(a.recon_surface);
    const PointCloud ref_cloud = mesh_to_pointcloud(a.reference_surface);
    timer.run("register", [&] { a.registration = register_clouds(recon_cloud, ref_cloud, cfg.registration); });
    rec.registration = RegistrationDiagnostics{a.registration.coarse,
                                               a.registration.fine,
                                               recon_cloud.size(),
                                               ref_cloud.size(),
                                               a.registration.source_downsampled,
                                               a.registration.target_downsampled};

    timer.run("surface_metrics", [&] {
        const PointCloud moved = transformed(recon_cloud, a.registration.fine.transform);
        rec.surface = surface_metrics(moved.points, ref_cloud.points);
    });

    if (artifacts) *artifacts = std::move(a);
    return rec;
}

/// Writes intermediate products of a run into `dir`.
inline void dump_intermediates(const PipelineArtifacts& a, const fs::path& dir) {
    fs::create_directories(dir);
    write_volume(a.input, dir / "input.json");
    write_volume(a.reference_mask, dir / "reference_mask.json");
    write_volume(a.segmented_mask, dir / "segmented_mask.json");
    write_volume(a.alignment.aligned, dir / "aligned_mask.json");
    write_mesh(a.reference_mesh, dir / "reference_mesh.ply");
    write_mesh(a.recon_surface, dir / "recon_surface.ply");
    write_mesh(a.reference_surface, dir / "reference_surface.ply");
    const nlohmann::json t = {{"voxel_alignment", alignment_json(a.alignment)},
                              {"registration",
                               {{"ransac", registration_result_json(a.registration.coarse)},
                                {"icp", registration_result_json(a.registration.fine)}}}};
    const std::string s = t.dump(2) + "\n";
    detail::write_file(dir / "transforms.json", s.data(), s.size());
}

/// run_pipeline plus the configured outputs. The report is written only after every
/// stage succeeded.
inline MetricsReport run_and_write(const PipelineConfig& cfg) {
    PipelineArtifacts art;
    MetricsReport report;
    report.runs.push_back(run_pipeline(cfg, cfg.outputs.dump_intermediates.empty() ? nullptr : &art));
    if (!cfg.outputs.dump_intermediates.empty()) {
        try {
            dump_intermediates(art, cfg.outputs.dump_intermediates);
        } catch (const std::exception& e) {
            throw StageError("dump", e.what());
        }
    }
    if (!cfg.outputs.report.empty()) {
        try {
            write_report(report, cfg.outputs.report, cfg.outputs.format);
        } catch (const std::exception& e) {
            throw StageError("report", e.what());
        }
    }
    return report;
}

}  // namespace recon
