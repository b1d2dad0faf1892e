// recon3d: subcommand front end over the recon library.

#include "recon/recon.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace recon;
using nlohmann::json;

struct Globals {
    std::string config;
    std::string out;
    std::string format = "json";
    bool format_given = false;
    std::string dump_dir;
    std::optional<std::uint64_t> seed;
};

PipelineConfig load_config(const Globals& g) {
    PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_pipeline_config(g.config);
    if (g.seed) c.override_seed(*g.seed);
    return c;
}

void require_out(const Globals& g) {
    if (g.out.empty()) throw Error("--out is required");
}

Vec3 vec3_of(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

void write_text(const std::string& path, const std::string& s) {
    recon::detail::write_file(path, s.data(), s.size());
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(recon::detail::read_file(path));
    } catch (const json::exception& e) {
        throw Error("'" + path + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
    std::string kind;
    std::optional<double> radius, wall, fg, bg, noise;
    std::vector<std::int64_t> dims;
    std::vector<double> spacing, origin;
    std::string mesh_out, truth_out;
    int subdivisions = 5;
};

void cmd_phantom(const Globals& g, const PhantomArgs& a) {
    require_out(g);
    const PipelineConfig c = load_config(g);
    InputPhantom p = c.input_phantom.value_or(InputPhantom{});
    if (!a.kind.empty()) p.kind = recon::detail::parse_phantom_kind(a.kind);
    if (a.radius) p.radius_mm = *a.radius;
    if (a.wall) p.wall_mm = *a.wall;
    if (a.fg) p.fg_mean = *a.fg;
    if (a.bg) p.bg_mean = *a.bg;
    if (a.noise) p.noise_sigma = *a.noise;
    if (!a.dims.empty()) p.dims = {a.dims[0], a.dims[1], a.dims[2]};
    if (!a.spacing.empty()) p.spacing_mm = vec3_of(a.spacing);
    if (!a.origin.empty()) p.origin_mm = vec3_of(a.origin);
    if (g.seed) p.seed = *g.seed;
    const PhantomSpec spec = p.spec();
    write_volume(make_phantom(spec), g.out);
    if (!a.truth_out.empty()) write_volume(phantom_truth_mask(spec), a.truth_out);
    if (!a.mesh_out.empty()) {
        ReferencePhantom r = c.reference_phantom.value_or(ReferencePhantom{p.kind, p.radius_mm, p.wall_mm, a.subdivisions});
        write_mesh(reference_phantom_mesh(r, spec.geometry.center()), a.mesh_out);
    }
}

struct SegmentArgs {
    std::string in;
    std::string method;
    std::string model_out;
};

void cmd_segment(const Globals& g, const SegmentArgs& a) {
    require_out(g);
    PipelineConfig c = load_config(g);
    if (!a.method.empty()) c.segmentation.method = parse_segmentation_method(a.method);
    const auto r = segment(read_scalar_volume(a.in), c.segmentation);
    for (const auto& w : r.warnings) std::cerr << json{{"warning", w}}.dump() << "\n";
    write_volume(r.mask, g.out);
    if (!a.model_out.empty()) {
        json j{{"method", to_string(c.segmentation.method)}};
        j["threshold"] = r.threshold ? json(*r.threshold) : json(nullptr);
        if (r.model) {
            j["gmm"] = {{"weights", r.model->weights},
                        {"means", r.model->means},
                        {"variances", r.model->variances},
                        {"log_likelihood_trace", r.model->log_likelihood_trace},
                        {"converged", r.model->converged}};
        }
        write_text(a.model_out, j.dump(2) + "\n");
    }
}

struct VoxelizeArgs {
    std::string mesh, like;
};

void cmd_voxelize(const Globals& g, const VoxelizeArgs& a) {
    require_out(g);
    const auto header = read_volume_header(a.like);
    write_volume(voxelize_mesh(read_mesh(a.mesh), header.geometry()), g.out);
}

struct AlignArgs {
    std::string moving, fixed, transform_out;
    std::vector<double> euler, translation;
};

void cmd_align(const Globals& g, const AlignArgs& a) {
    require_out(g);
    const PipelineConfig c = load_config(g);
    const BinaryMask moving = read_mask(a.moving);
    const BinaryMask fixed = read_mask(a.fixed);
    const Vec3 euler = a.euler.empty() ? c.coarse_euler_deg : vec3_of(a.euler);
    const Vec3 trans = a.translation.empty() ? c.coarse_translation_mm : vec3_of(a.translation);
    const Vec3 pivot = foreground_centroid(moving);
    const auto r = align_masks(moving, fixed, coarse_transform(euler, trans, pivot));
    write_volume(r.aligned, g.out);
    if (!a.transform_out.empty()) {
        json j = alignment_json(r);
        j["coarse_pivot_mm"] = {pivot[0], pivot[1], pivot[2]};
        write_text(a.transform_out, j.dump(2) + "\n");
    }
}

struct ExtractArgs {
    std::string in;
    std::optional<double> lambda;
    std::optional<int> iterations;
    bool smooth = false;
};

void cmd_extract(const Globals& g, const ExtractArgs& a) {
    require_out(g);
    const PipelineConfig c = load_config(g);
    SmoothingConfig s = c.smoothing;
    if (a.smooth) s.enabled = true;
    if (a.lambda) s.lambda = *a.lambda;
    if (a.iterations) s.iterations = *a.iterations;
    std::vector<std::string> warnings;
    TriangleMesh mesh = marching_cubes(read_mask(a.in), &warnings);
    for (const auto& w : warnings) std::cerr << json{{"warning", w}}.dump() << "\n";
    if (mesh.triangles.empty()) throw Error("isosurface is empty");
    if (s.enabled) mesh = laplacian_smooth(mesh, s.lambda, s.iterations);
    write_mesh(mesh, g.out);
}

struct RegisterArgs {
    std::string source, target;
    std::optional<double> voxel;
};

void cmd_register(const Globals& g, const RegisterArgs& a) {
    require_out(g);
    PipelineConfig c = load_config(g);
    if (a.voxel) c.registration.downsample_voxel = *a.voxel;
    const PointCloud src = mesh_to_pointcloud(read_mesh(a.source));
    const PointCloud dst = mesh_to_pointcloud(read_mesh(a.target));
    const auto r = register_clouds(src, dst, c.registration);
    const json j{{"transform", transform_to_json(r.fine.transform)},
                 {"ransac", registration_result_json(r.coarse)},
                 {"icp", registration_result_json(r.fine)},
                 {"source_points", src.size()},
                 {"target_points", dst.size()},
                 {"source_downsampled", r.source_downsampled},
                 {"target_downsampled", r.target_downsampled}};
    write_text(g.out, j.dump(2) + "\n");
}

struct EvaluateArgs {
    std::string pred, ref, pred_mesh, ref_mesh, transform;
    std::string name = "unnamed", segmenter = "unknown";
};

void cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
    require_out(g);
    RunRecord rec;
    rec.geometry = a.name;
    rec.segmenter = a.segmenter;
    rec.alignment = nullptr;
    rec.config = nullptr;
    if (!a.pred.empty() || !a.ref.empty()) {
        if (a.pred.empty() || a.ref.empty()) throw Error("--pred and --ref must be given together");
        const BinaryMask ref = read_mask(a.ref);
        rec.foreground_fraction = foreground_fraction(ref);
        rec.voxel = voxel_metrics(read_mask(a.pred), ref);
    }
    if (!a.pred_mesh.empty() || !a.ref_mesh.empty()) {
        if (a.pred_mesh.empty() || a.ref_mesh.empty()) throw Error("--pred-mesh and --ref-mesh must be given together");
        PointCloud pred = mesh_to_pointcloud(read_mesh(a.pred_mesh));
        const PointCloud ref = mesh_to_pointcloud(read_mesh(a.ref_mesh));
        if (!a.transform.empty()) {
            const json t = read_json_file(a.transform);
            const json& tj = t.contains("transform") ? t.at("transform") : t;
            pred = transformed(pred, transform_from_json(tj));
            if (t.contains("ransac") && t.contains("icp")) {
                auto result_of = [](const json& j) {
                    RegistrationResult r;
                    r.transform = transform_from_json(j.at("transform"));
                    r.fitness = j.at("fitness").get<double>();
                    r.inlier_rmse = j.at("inlier_rmse_mm").get<double>();
                    r.iterations_used = j.at("iterations_used").get<int>();
                    r.converged = j.at("converged").get<bool>();
                    r.objective_trace = j.at("objective_trace").get<std::vector<double>>();
                    return r;
                };
                rec.registration = RegistrationDiagnostics{result_of(t.at("ransac")),
                                                           result_of(t.at("icp")),
                                                           t.value("source_points", std::size_t{0}),
                                                           t.value("target_points", std::size_t{0}),
                                                           t.value("source_downsampled", std::size_t{0}),
                                                           t.value("target_downsampled", std::size_t{0})};
            }
        }
        rec.surface = surface_metrics(pred.points, ref.points);
    }
    if (!rec.voxel && !rec.surface) throw Error("nothing to evaluate: give --pred/--ref and/or --pred-mesh/--ref-mesh");
    MetricsReport report;
    report.runs.push_back(std::move(rec));
    write_report(report, g.out, parse_report_format(g.format));
}

void cmd_run(const Globals& g) {
    if (g.config.empty()) throw Error("--config is required");
    PipelineConfig c = load_config(g);
    if (!g.out.empty()) c.outputs.report = g.out;
    if (g.format_given) c.outputs.format = parse_report_format(g.format);
    if (!g.dump_dir.empty()) c.outputs.dump_intermediates = g.dump_dir;
    const MetricsReport r = run_and_write(c);
    if (c.outputs.report.empty()) std::cout << format_report(r, c.outputs.format);
}

void print_error(const std::string& msg, const std::string& stage = {}) {
    json j{{"error", msg}};
    if (!stage.empty()) j["stage"] = stage;
    std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volume segmentation, alignment, surface extraction, registration and accuracy metrics"};
    app.name("recon3d");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::string seed_text;
    app.add_option("--config", g.config, "pipeline config (JSON)");
    app.add_option("--out", g.out, "output path");
    auto* format_opt = app.add_option("--format", g.format, "report format")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--dump-intermediates", g.dump_dir, "directory for intermediate volumes and meshes");
    app.add_option("--seed", seed_text, "overrides every seed in the config");

    PhantomArgs pa;
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic phantom volume");
    phantom->add_option("--kind", pa.kind)->check(CLI::IsMember({"sphere", "shell"}));
    phantom->add_option("--radius", pa.radius, "outer radius (mm)");
    phantom->add_option("--wall", pa.wall, "shell wall (mm)");
    phantom->add_option("--dims", pa.dims)->expected(3);
    phantom->add_option("--spacing", pa.spacing, "mm")->expected(3);
    phantom->add_option("--origin", pa.origin, "mm")->expected(3);
    phantom->add_option("--fg", pa.fg);
    phantom->add_option("--bg", pa.bg);
    phantom->add_option("--noise", pa.noise, "Gaussian noise sigma");
    phantom->add_option("--truth-out", pa.truth_out, "noise-free ground-truth mask");
    phantom->add_option("--mesh-out", pa.mesh_out, "reference surface mesh (.ply or .stl)");
    phantom->add_option("--subdivisions", pa.subdivisions, "icosphere subdivisions for --mesh-out");

    SegmentArgs sa;
    auto* seg = app.add_subcommand("segment", "segment a scalar volume into a mask");
    seg->add_option("--in", sa.in)->required();
    seg->add_option("--method", sa.method)->check(CLI::IsMember({"otsu", "gmm", "region_growing"}));
    seg->add_option("--model-out", sa.model_out, "threshold / GMM parameters (JSON)");

    VoxelizeArgs va;
    auto* vox = app.add_subcommand("voxelize", "rasterize a closed mesh onto a volume's grid");
    vox->add_option("--mesh", va.mesh)->required();
    vox->add_option("--like", va.like, "volume whose geometry is used")->required();

    AlignArgs aa;
    auto* align = app.add_subcommand("align", "align a moving mask onto a fixed mask");
    align->add_option("--moving", aa.moving)->required();
    align->add_option("--fixed", aa.fixed)->required();
    align->add_option("--euler", aa.euler, "coarse XYZ Euler angles (deg)")->expected(3);
    align->add_option("--translation", aa.translation, "coarse translation (mm)")->expected(3);
    align->add_option("--transform-out", aa.transform_out);

    ExtractArgs ea;
    auto* extract = app.add_subcommand("extract", "marching cubes on a mask");
    extract->add_option("--in", ea.in)->required();
    extract->add_flag("--smooth", ea.smooth);
    extract->add_option("--lambda", ea.lambda);
    extract->add_option("--iterations", ea.iterations);

    RegisterArgs ra;
    auto* reg = app.add_subcommand("register", "RANSAC + ICP registration of two surface meshes");
    reg->add_option("--source", ra.source)->required();
    reg->add_option("--target", ra.target)->required();
    reg->add_option("--voxel", ra.voxel, "downsample voxel (mm)");

    EvaluateArgs va2;
    auto* eval = app.add_subcommand("evaluate", "voxel and surface metrics");
    eval->add_option("--pred", va2.pred);
    eval->add_option("--ref", va2.ref);
    eval->add_option("--pred-mesh", va2.pred_mesh);
    eval->add_option("--ref-mesh", va2.ref_mesh);
    eval->add_option("--transform", va2.transform, "rigid transform applied to --pred-mesh");
    eval->add_option("--name", va2.name);
    eval->add_option("--segmenter", va2.segmenter);

    auto* run = app.add_subcommand("run", "run the full pipeline from --config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help();
        print_error(e.what());
        return 2;
    }

    g.format_given = format_opt->count() > 0;
    try {
        if (!seed_text.empty()) {
            std::size_t pos = 0;
            const auto v = std::stoull(seed_text, &pos);
            if (pos != seed_text.size()) throw Error("--seed must be an unsigned integer");
            g.seed = v;
        }
        if (phantom->parsed()) cmd_phantom(g, pa);
        else if (seg->parsed()) cmd_segment(g, sa);
        else if (vox->parsed()) cmd_voxelize(g, va);
        else if (align->parsed()) cmd_align(g, aa);
        else if (extract->parsed()) cmd_extract(g, ea);
        else if (reg->parsed()) cmd_register(g, ra);
        else if (eval->parsed()) cmd_evaluate(g, va2);
        else if (run->parsed()) cmd_run(g);
    } catch (const StageError& e) {
        print_error(e.what(), e.stage());
        return 1;
    } catch (const std::exception& e) {
        print_error(e.what());
        return 1;
    }
    return 0;
}
