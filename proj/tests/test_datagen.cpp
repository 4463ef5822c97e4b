#include "oracles.hpp"

#include <sdn/datagen.hpp>
#include <sdn/error.hpp>
#include <sdn/losses.hpp>
#include <sdn/mesh_io.hpp>

#include <doctest.h>

#include <cmath>
#include <set>

using namespace sdn;
namespace fs = std::filesystem;

namespace {

double pairwise_spread(const Points& a, const Points& b)
{
    double worst = 0.0;
    for (int i = 0; i < a.rows(); i += 7) {
        for (int j = 0; j < a.rows(); j += 5) {
            const double d0 = (a.row(i) - a.row(j)).norm();
            const double d1 = (b.row(i) - b.row(j)).norm();
            worst = std::max(worst, std::abs(d0 - d1));
        }
    }
    return worst;
}

} // namespace

TEST_SUITE("datagen")
{
    TEST_CASE("templates are closed, rigged and deterministic")
    {
        for (auto kind : {TemplateKind::biped, TemplateKind::quadruped, TemplateKind::tube}) {
            INFO(to_string(kind));
            const auto t = make_template(kind, 0);
            CHECK(euler_characteristic(t.mesh) == 2);
            CHECK_NOTHROW(validate_rig(t));
            CHECK(t.mesh.vertices().cwiseAbs().maxCoeff() <= 0.9);
            CHECK(static_cast<int>(t.weights.size()) == t.mesh.num_vertices());
            const auto again = make_template(kind, 0);
            CHECK(again.mesh.vertices() == t.mesh.vertices());
            CHECK(again.mesh.faces() == t.mesh.faces());
            CHECK(parse_template_kind(to_string(kind)) == kind);
        }
        const auto biped = make_template(TemplateKind::biped, 0);
        CHECK(biped.mesh.num_vertices() >= 200);
        CHECK(biped.mesh.num_vertices() <= 800);
        CHECK(biped.skeleton.size() >= 5);
        CHECK(!biped.key_joints.empty());
        CHECK(make_template(TemplateKind::biped, 1).mesh.num_vertices() > biped.mesh.num_vertices());
        CHECK_THROWS_AS(make_template(TemplateKind::biped, 5), PreconditionError);
        CHECK_THROWS_AS(parse_template_kind("snake"), PreconditionError);
    }

    TEST_CASE("tube is a single chain with at most two influences")
    {
        const auto t = make_template(TemplateKind::tube, 0);
        for (std::size_t j = 1; j < t.skeleton.size(); ++j) CHECK(t.skeleton[j].parent == static_cast<int>(j) - 1);
        for (const auto& w : t.weights) {
            CHECK(w.size() <= 2);
            double s = 0.0;
            for (const auto& [joint, weight] : w) s += weight;
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }

    TEST_CASE("rig validation catches malformed weights")
    {
        auto t = make_template(TemplateKind::tube, 0);
        t.weights[3] = {{0, 0.5}, {1, 0.4}};
        CHECK_THROWS_AS(validate_rig(t), PreconditionError);
        t = make_template(TemplateKind::tube, 0);
        t.skeleton[2].parent = 4;
        CHECK_THROWS_AS(validate_rig(t), PreconditionError);
    }

    TEST_CASE("identity and root-only poses")
    {
        const auto t = make_template(TemplateKind::biped, 0);
        const Mesh same = pose_shape(t, identity_pose(t));
        CHECK((same.vertices() - t.mesh.vertices()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(same.faces() == t.mesh.faces());

        PoseSample root = identity_pose(t);
        root.rotations[0] = Vec3(0.3, 0.0, -0.2);
        const Mesh tilted = pose_shape(t, root);
        CHECK(pairwise_spread(t.mesh.vertices(), tilted.vertices()) < 1e-9);
        CHECK((tilted.vertices() - t.mesh.vertices()).cwiseAbs().maxCoeff() > 0.01);

        PoseSample bad = identity_pose(t);
        bad.rotations.pop_back();
        CHECK_THROWS_AS(pose_shape(t, bad), PreconditionError);
    }

    TEST_CASE("random poses respect their bounds")
    {
        const auto t = make_template(TemplateKind::biped, 0);
        PoseBounds hard;
        hard.hard = true;
        double key_max = 0.0;
        for (std::uint64_t s = 0; s < 40; ++s) {
            const auto pose = sample_pose(t, PoseBounds{}, s);
            CHECK(pose.scale >= 0.8);
            CHECK(pose.scale <= 1.2);
            CHECK(pose.rotations[0].norm() <= 0.2);
            CHECK(pose.rotations[0].y() == 0.0);
            for (std::size_t j = 1; j < pose.rotations.size(); ++j) CHECK(pose.rotations[j].norm() <= 0.5);

            const Mesh posed = pose_shape(t, pose);
            CHECK(edge_loss(t.mesh, posed.vertices()) > 0.0);
            const auto [centered, shift] = normalize_shape(posed.vertex_cloud());
            CHECK(centered.points().cwiseAbs().maxCoeff() <= 1.0);

            const auto hp = sample_pose(t, hard, s);
            for (std::size_t j = 1; j < hp.rotations.size(); ++j) {
                const bool key = std::find(t.key_joints.begin(), t.key_joints.end(), static_cast<int>(j)) !=
                                 t.key_joints.end();
                CHECK(hp.rotations[j].norm() <= (key ? 1.4 : 0.5));
                if (key) key_max = std::max(key_max, hp.rotations[j].norm());
            }
        }
        CHECK(key_max > 0.5);
        PoseBounds wrong;
        wrong.scale_max = 1.5;
        CHECK_THROWS_AS(sample_pose(t, wrong, 1), PreconditionError);
    }

    TEST_CASE("dataset files, manifest and determinism")
    {
        const auto dir = oracle::scratch_dir("dataset");
        const auto t = make_template(TemplateKind::biped, 0);
        const Manifest m = generate_dataset(t, 3, PoseBounds{}, 7, dir / "a");
        generate_dataset(t, 3, PoseBounds{}, 7, dir / "b");
        REQUIRE(m.shapes.size() == 3);
        int shape_files = 0;
        for (const auto& e : fs::directory_iterator(dir / "a")) {
            const std::string name = e.path().filename().string();
            shape_files += name.starts_with("shape_");
            CHECK(oracle::read_file(e.path()) == oracle::read_file(dir / "b" / name));
        }
        CHECK(shape_files == 3);
        CHECK(fs::exists(dir / "a" / "manifest.json"));

        const Manifest back = read_manifest(dir / "a" / "manifest.json");
        REQUIRE(back.shapes.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back.shapes[i].seed == m.shapes[i].seed);
            CHECK(back.shapes[i].pose.scale == m.shapes[i].pose.scale);
            CHECK(back.shapes[i].pose.rotations == m.shapes[i].pose.rotations);
        }

        const Dataset d = load_dataset(dir / "a" / "manifest.json");
        CHECK(d.templ.vertices() == t.mesh.vertices());
        REQUIRE(d.shapes.size() == 3);
        for (const auto& s : d.shapes) {
            CHECK(s.faces() == t.mesh.faces());
            CHECK(s.vertices().cwiseAbs().maxCoeff() <= 0.95 + 1e-12);
        }

        // Correspondence by vertex index: re-posing reproduces the stored shape up to centering and scale.
        const Mesh reposed = pose_shape(t, back.shapes[1].pose);
        const Points centered = translate(reposed.vertices(), -bounding_box_center(reposed.vertices()));
        const double k = d.shapes[1].vertices().norm() / centered.norm();
        CHECK((centered * k - d.shapes[1].vertices()).cwiseAbs().maxCoeff() < 1e-9);

        const ArticulatedTemplate rig = load_rig(dir / "a" / "rig.json", dir / "a" / "template.ply");
        CHECK_NOTHROW(validate_rig(rig));
        CHECK(rig.skeleton.size() == t.skeleton.size());
        CHECK(rig.key_joints == t.key_joints);

        fs::remove(dir / "a" / "shape_00001.ply");
        CHECK_THROWS_AS(load_dataset(dir / "a" / "manifest.json"), IoError);
        CHECK_THROWS_AS(read_manifest(dir / "none.json"), IoError);
    }

    TEST_CASE("biped dataset statistics over 500 poses")
    {
        const auto t = make_template(TemplateKind::biped, 0);
        std::vector<Points> shapes;
        double chamfer_sum = 0.0;
        for (std::uint64_t i = 0; i < 500; ++i) {
            const Mesh posed = pose_shape(t, sample_pose(t, PoseBounds{}, derive_seed(3, Stream::dataset, i)));
            shapes.push_back(translate(posed.vertices(), -bounding_box_center(posed.vertices())));
            chamfer_sum += chamfer(shapes.back(), t.mesh.vertices(), ChamferMode::symmetric);
        }
        CHECK(chamfer_sum / 500.0 > 0.0);

        // Displacement vectors between consecutive shapes, all components pooled.
        double sum = 0.0, sum_sq = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i + 1 < shapes.size(); ++i) {
            const Points d = shapes[i + 1] - shapes[i];
            sum += d.sum();
            sum_sq += d.squaredNorm();
            n += static_cast<std::size_t>(d.size());
        }
        const double mean = sum / static_cast<double>(n);
        const double sd = std::sqrt(sum_sq / static_cast<double>(n) - mean * mean);
        MESSAGE("pairwise displacement std " << sd);
        CHECK(sd > 0.05);
    }
}
