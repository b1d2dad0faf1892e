#include <gtest/gtest.h>

#include "fixtures.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace recon;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json sphere_config(double radius, std::int64_t n, double spacing) {
    json j = json::parse(R"({
      "name": "sphere",
      "reference": {"phantom": {"kind": "sphere", "subdivisions": 5}},
      "input": {"phantom": {"kind": "sphere", "fg_mean": 1000, "bg_mean": 0, "noise_sigma": 0, "seed": 3}},
      "segmentation": {"method": "otsu"},
      "registration": {"downsample_voxel_mm": 1.0}
    })");
    j["reference"]["phantom"]["radius_mm"] = radius;
    j["input"]["phantom"]["radius_mm"] = radius;
    j["input"]["phantom"]["dims"] = {n, n, n};
    j["input"]["phantom"]["spacing_mm"] = {spacing, spacing, spacing};
    return j;
}

json small_config() {
    json j = json::parse(R"({
      "name": "sphere",
      "reference": {"phantom": {"kind": "sphere", "radius_mm": 5.0, "subdivisions": 4}},
      "input": {"phantom": {"kind": "sphere", "radius_mm": 5.0, "dims": [49, 49, 49],
                            "spacing_mm": [0.25, 0.25, 0.25], "noise_sigma": 50, "seed": 3}},
      "segmentation": {"method": "gmm"},
      "registration": {"downsample_voxel_mm": 1.0}
    })");
    return j;
}

std::string cli() {
    const char* p = std::getenv("RECON3D_CLI");
    return p ? p : "recon3d";
}

struct CliResult {
    int status = 0;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = "\"" + cli() + "\" " + args + " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
    const int rc = std::system(cmd.c_str());
    CliResult r;
    r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json without_timing(json report) {
    for (auto& run : report) run.erase("timing_ms");
    return report;
}

}  // namespace

TEST(Config, ParsesAndEchoesEffectiveParameters) {
    const auto c = parse_pipeline_config(small_config());
    EXPECT_EQ(c.geometry_label(), "sphere");
    EXPECT_EQ(c.segmentation.method, SegmentationMethod::gmm);
    const json echo = config_to_json(c);
    EXPECT_EQ(echo["registration"]["fpfh_radius_mm"], 5.0);
    EXPECT_EQ(echo["registration"]["ransac"]["distance_threshold_mm"], 1.5);
    EXPECT_EQ(echo["registration"]["icp"]["max_correspondence_mm"], 2.0);
    EXPECT_EQ(echo["input"]["phantom"]["seed"], 3);
    // the echo reparses to the same effective configuration
    EXPECT_EQ(config_to_json(parse_pipeline_config(echo)), echo);
}

TEST(Config, RejectsUnknownKeysAndDoubleSources) {
    json j = small_config();
    j["segmentation"]["otsu_bins"] = 128;
    EXPECT_THROW(parse_pipeline_config(j), Error);
    j = small_config();
    j["typo"] = 1;
    EXPECT_THROW(parse_pipeline_config(j), Error);
    j = small_config();
    j["reference"]["mesh"] = "x.stl";
    EXPECT_THROW(parse_pipeline_config(j), Error);
    j = small_config();
    j["segmentation"]["method"] = "kmeans";
    EXPECT_THROW(parse_pipeline_config(j), Error);
}

TEST(Config, ShippedConfigsParse) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(fs::path(RECON3D_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".json") continue;
        EXPECT_NO_THROW(load_pipeline_config(e.path())) << e.path();
        ++n;
    }
    EXPECT_GE(n, 3);
}

TEST(Config, SeedOverrideReachesEveryStochasticStage) {
    auto c = parse_pipeline_config(small_config());
    c.override_seed(77);
    EXPECT_EQ(c.input_phantom->seed, 77u);
    EXPECT_EQ(c.segmentation.gmm.seed, 77u);
    EXPECT_EQ(c.registration.ransac.seed, 77u);
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
    const auto dir = fixtures::scratch_dir("cfg_paths");
    json j = small_config();
    j["reference"] = {{"mesh", "meshes/ref.ply"}};
    write_json(dir / "c.json", j);
    const auto c = load_pipeline_config(dir / "c.json");
    EXPECT_EQ(fs::path(*c.reference_mesh), dir / "meshes/ref.ply");
}

TEST(Pipeline, NoiseFreeSphereIsSelfConsistent) {
    const auto c = parse_pipeline_config(sphere_config(5.0, 49, 0.25));
    const auto r = run_pipeline(c);
    ASSERT_TRUE(r.voxel && r.surface && r.registration);
    EXPECT_GE(*r.voxel->dice, 0.99);
    EXPECT_GE(*r.voxel->jaccard, 0.98);
    EXPECT_LE(r.surface->rmse_mm, 0.25);
    EXPECT_TRUE(r.warnings.empty());
    for (const char* stage : {"config", "input", "reference", "voxelize", "segment", "align", "voxel_metrics", "extract",
                              "register", "surface_metrics"}) {
        EXPECT_TRUE(r.timing_ms.count(stage)) << stage;
    }
}

TEST(Pipeline, InjectedMisalignmentIsUndone) {
    // odd lattice at 0.125 mm keeps landmark ties and resampling aliasing below the tolerance
    const double h = 0.125;
    const auto n = static_cast<std::int64_t>(20.0 / h) + 17;
    const auto base = parse_pipeline_config(sphere_config(10.0, n, h));
    auto moved = base;
    moved.coarse_euler_deg = Vec3(10.0, 0.0, 0.0);
    moved.coarse_translation_mm = Vec3(3.0, 0.0, 0.0);
    const auto a = run_pipeline(base);
    const auto b = run_pipeline(moved);
    EXPECT_NEAR(*a.voxel->dice, *b.voxel->dice, 0.01);
    EXPECT_NEAR(*a.voxel->jaccard, *b.voxel->jaccard, 0.01);
    EXPECT_NEAR(*a.voxel->sensitivity, *b.voxel->sensitivity, 0.01);
    EXPECT_NEAR(*a.voxel->specificity, *b.voxel->specificity, 0.01);
    EXPECT_NEAR(*a.voxel->precision, *b.voxel->precision, 0.01);
    EXPECT_NEAR(*a.voxel->volume_similarity, *b.voxel->volume_similarity, 0.01);
}

TEST(Pipeline, MissingFileNamesStageAndWritesNothing) {
    const auto dir = fixtures::scratch_dir("missing");
    json j = small_config();
    j["input"] = {{"volume", (dir / "nope.json").string()}};
    auto c = parse_pipeline_config(j);
    c.outputs.report = (dir / "report.json").string();
    try {
        run_and_write(c);
        FAIL() << "missing input accepted";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "config");
        EXPECT_NE(std::string(e.what()).find("nope.json"), std::string::npos);
    }
    EXPECT_FALSE(fs::exists(dir / "report.json"));
}

TEST(Pipeline, RegionGrowingWithoutSeedsFailsInConfigStage) {
    json j = small_config();
    j["segmentation"] = {{"method", "region_growing"}};
    try {
        run_pipeline(parse_pipeline_config(j));
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "config");
    }
}

TEST(Pipeline, ReportsAreDeterministicExceptTiming) {
    const auto c = parse_pipeline_config(small_config());
    MetricsReport a, b;
    a.runs.push_back(run_pipeline(c));
    b.runs.push_back(run_pipeline(c));
    EXPECT_EQ(without_timing(report_to_json(a)).dump(), without_timing(report_to_json(b)).dump());
    for (auto& r : a.runs) r.timing_ms.clear();
    for (auto& r : b.runs) r.timing_ms.clear();
    EXPECT_EQ(report_to_csv(a), report_to_csv(b));
}

TEST(Pipeline, DumpsIntermediates) {
    const auto dir = fixtures::scratch_dir("dumps");
    auto c = parse_pipeline_config(small_config());
    c.outputs.dump_intermediates = (dir / "d").string();
    c.outputs.report = (dir / "r.csv").string();
    c.outputs.format = ReportFormat::csv;
    run_and_write(c);
    for (const char* f : {"input.json", "input.raw", "reference_mask.json", "segmented_mask.json", "aligned_mask.json",
                          "reference_mesh.ply", "recon_surface.ply", "reference_surface.ply", "transforms.json"}) {
        EXPECT_TRUE(fs::exists(dir / "d" / f)) << f;
    }
    EXPECT_EQ(slurp(dir / "r.csv").rfind("geometry,segmenter,", 0), 0u);
}

TEST(Cli, SubcommandChainReproducesPipeline) {
    const auto dir = fixtures::scratch_dir("chain");
    const auto cfg_path = dir / "config.json";
    write_json(cfg_path, small_config());
    const std::string cfg = "--config \"" + cfg_path.string() + "\" ";
    auto p = [&](const char* f) { return "\"" + (dir / f).string() + "\""; };
    auto ok = [&](const std::string& args) {
        const auto r = run_cli(args, dir);
        ASSERT_EQ(r.status, 0) << args << "\n" << r.err;
    };
    ok(cfg + "--out " + p("report.json") + " run");
    ok(cfg + "--out " + p("input.json") + " phantom --mesh-out " + p("ref_mesh.ply"));
    ok(cfg + "--out " + p("ref_mask.json") + " voxelize --mesh " + p("ref_mesh.ply") + " --like " + p("input.json"));
    ok(cfg + "--out " + p("seg.json") + " segment --in " + p("input.json"));
    ok(cfg + "--out " + p("aligned.json") + " align --moving " + p("seg.json") + " --fixed " + p("ref_mask.json"));
    ok(cfg + "--out " + p("recon.ply") + " extract --in " + p("seg.json"));
    ok(cfg + "--out " + p("ref_surf.ply") + " extract --in " + p("ref_mask.json"));
    ok(cfg + "--out " + p("reg.json") + " register --source " + p("recon.ply") + " --target " + p("ref_surf.ply"));
    ok(cfg + "--out " + p("eval.json") + " evaluate --name sphere --segmenter gmm --pred " + p("aligned.json") +
       " --ref " + p("ref_mask.json") + " --pred-mesh " + p("recon.ply") + " --ref-mesh " + p("ref_surf.ply") +
       " --transform " + p("reg.json"));

    const json run = json::parse(slurp(dir / "report.json"))[0];
    const json chain = json::parse(slurp(dir / "eval.json"))[0];
    for (const char* k : {"foreground_fraction", "confusion", "sensitivity", "specificity", "precision", "dice", "jaccard",
                          "volume_similarity", "chamfer_sq_mm2", "chamfer_mm", "ahd_mm", "rmse_mm"}) {
        EXPECT_EQ(run[k], chain[k]) << k;
    }
    EXPECT_EQ(run["registration"]["icp"], chain["registration"]["icp"]);
    EXPECT_EQ(run["registration"]["ransac"], chain["registration"]["ransac"]);
}

TEST(Cli, EvaluateIdenticalMasksGivesDiceOne) {
    const auto dir = fixtures::scratch_dir("eval_same");
    PhantomSpec s;
    s.radius_mm = 2.0;
    s.geometry = fixtures::centered_grid(25, 0.25);
    write_volume(phantom_truth_mask(s), dir / "m.json");
    const std::string m = "\"" + (dir / "m.json").string() + "\"";
    const auto r = run_cli("--out \"" + (dir / "e.csv").string() + "\" --format csv evaluate --pred " + m + " --ref " + m, dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const std::string csv = slurp(dir / "e.csv");
    const auto row = csv.substr(csv.find("\r\n") + 2);
    std::vector<std::string> fields;
    std::stringstream ss(row.substr(0, row.find("\r\n")));
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    const auto& cols = report_csv_columns();
    const auto dice_col = std::find(cols.begin(), cols.end(), "dice") - cols.begin();
    EXPECT_EQ(fields.at(static_cast<std::size_t>(dice_col)), "1");
}

TEST(Cli, UnknownSubcommandPrintsUsage) {
    const auto dir = fixtures::scratch_dir("usage");
    const auto r = run_cli("frobnicate", dir);
    EXPECT_NE(r.status, 0);
    EXPECT_NE((r.out + r.err).find("Usage"), std::string::npos);
}

TEST(Cli, ErrorsAreOneLineJson) {
    const auto dir = fixtures::scratch_dir("errors");
    const auto r = run_cli("--out \"" + (dir / "x.json").string() + "\" segment --in \"" + (dir / "missing.json").string() + "\"", dir);
    EXPECT_EQ(r.status, 1);
    ASSERT_FALSE(r.err.empty());
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
    const json e = json::parse(r.err);
    EXPECT_TRUE(e.contains("error"));

    json bad = small_config();
    bad["input"] = {{"volume", (dir / "missing.json").string()}};
    write_json(dir / "bad.json", bad);
    const auto s = run_cli("--config \"" + (dir / "bad.json").string() + "\" --out \"" + (dir / "r.json").string() + "\" run", dir);
    EXPECT_EQ(s.status, 1);
    EXPECT_EQ(json::parse(s.err)["stage"], "config");
    EXPECT_FALSE(fs::exists(dir / "r.json"));
}

TEST(Cli, SeedFlagChangesNoisyInput) {
    const auto dir = fixtures::scratch_dir("seed");
    write_json(dir / "c.json", small_config());
    const std::string cfg = "--config \"" + (dir / "c.json").string() + "\" ";
    ASSERT_EQ(run_cli(cfg + "--out \"" + (dir / "a.json").string() + "\" phantom", dir).status, 0);
    ASSERT_EQ(run_cli(cfg + "--seed 3 --out \"" + (dir / "b.json").string() + "\" phantom", dir).status, 0);
    ASSERT_EQ(run_cli(cfg + "--seed 4 --out \"" + (dir / "c4.json").string() + "\" phantom", dir).status, 0);
    EXPECT_EQ(read_scalar_volume(dir / "a.json"), read_scalar_volume(dir / "b.json"));
    EXPECT_NE(read_scalar_volume(dir / "a.json"), read_scalar_volume(dir / "c4.json"));
}
