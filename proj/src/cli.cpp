#include <sdn/cli.hpp>
#include <sdn/config.hpp>
#include <sdn/datagen.hpp>
#include <sdn/error.hpp>
#include <sdn/inference.hpp>
#include <sdn/mesh_io.hpp>
#include <sdn/network.hpp>
#include <sdn/training.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace sdn {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flag values; each one set on the command line overrides the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string config;

    std::optional<std::string> kind;
    std::optional<int> count, level;
    std::optional<bool> hard;
    std::optional<double> max_angle;

    std::optional<std::string> mode, laplacian;
    std::optional<int> epochs1, epochs2, batch, points;
    std::optional<double> lr1, lr2, lambda_lap, lambda_edges, jitter;

    std::optional<int> orientations, refine_iters, template_res, refine_samples;
    std::optional<double> refine_lr;
    std::optional<std::string> chamfer;

    std::optional<std::string> data, out, checkpoint, templ, ref, target, pred, truth, color_out;
    std::vector<int> pair;
};

template <typename T>
void set_if(const std::optional<T>& v, T& field)
{
    if (v) field = *v;
}

RunConfig resolve(const Overrides& o)
{
    RunConfig c;
    if (!o.config.empty()) c.load_file(o.config);
    set_if(o.seed, c.seed);
    set_if(o.threads, c.threads);
    if (o.kind) c.kind = parse_template_kind(*o.kind);
    set_if(o.count, c.count);
    set_if(o.level, c.template_level);
    set_if(o.hard, c.pose.hard);
    set_if(o.max_angle, c.pose.max_angle);
    if (o.mode) c.training.mode = parse_training_mode(*o.mode);
    if (o.laplacian) {
        if (*o.laplacian == "uniform") c.training.laplacian = LaplacianVariant::uniform;
        else if (*o.laplacian == "cotangent") c.training.laplacian = LaplacianVariant::cotangent;
        else throw PreconditionError("unknown laplacian '" + *o.laplacian + "' (uniform, cotangent)");
    }
    set_if(o.epochs1, c.training.epochs_phase1);
    set_if(o.epochs2, c.training.epochs_phase2);
    set_if(o.batch, c.training.batch_size);
    set_if(o.points, c.training.points_per_shape);
    set_if(o.lr1, c.training.lr_phase1);
    set_if(o.lr2, c.training.lr_phase2);
    set_if(o.lambda_lap, c.training.weights.lambda_lap);
    set_if(o.lambda_edges, c.training.weights.lambda_edges);
    set_if(o.jitter, c.training.translation_jitter);
    set_if(o.orientations, c.matching.orientations);
    set_if(o.refine_iters, c.matching.refinement.iterations);
    set_if(o.refine_lr, c.matching.refinement.lr);
    set_if(o.refine_samples, c.matching.refinement.template_sample_count);
    if (o.chamfer) c.matching.refinement.chamfer_mode = parse_chamfer_mode(*o.chamfer);
    set_if(o.template_res, c.matching.template_resolution);
    set_if(o.data, c.paths.data);
    set_if(o.out, c.paths.out);
    set_if(o.checkpoint, c.paths.checkpoint);
    set_if(o.templ, c.paths.templ);
    set_if(o.ref, c.paths.ref);
    set_if(o.target, c.paths.target);
    set_if(o.pred, c.paths.pred);
    set_if(o.truth, c.paths.truth);
    set_if(o.color_out, c.paths.color_out);
    c.finalize();
    return c;
}

void need(const std::string& value, const std::string& flag)
{
    if (value.empty()) throw UsageError(flag + " is required");
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

nlohmann::json mesh_json(const Mesh& m)
{
    std::vector<double> v(m.vertices().data(), m.vertices().data() + m.vertices().size());
    std::vector<int> f;
    for (const Face& face : m.faces()) f.insert(f.end(), face.begin(), face.end());
    return {{"vertices", v}, {"faces", f}};
}

Mesh json_mesh(const nlohmann::json& j)
{
    const auto v = j.at("vertices").get<std::vector<double>>();
    const auto f = j.at("faces").get<std::vector<int>>();
    if (v.size() % 3 != 0 || f.size() % 3 != 0) throw ParseError("embedded template is malformed");
    Points p(static_cast<Eigen::Index>(v.size() / 3), 3);
    std::copy(v.begin(), v.end(), p.data());
    std::vector<Face> faces;
    for (std::size_t i = 0; i < f.size(); i += 3) faces.push_back({f[i], f[i + 1], f[i + 2]});
    return Mesh(std::move(p), std::move(faces));
}

int cmd_gen_data(const RunConfig& c)
{
    need(c.paths.out, "--out");
    const std::filesystem::path out = c.paths.out;
    std::cerr << "building " << to_string(c.kind) << " template (level " << c.template_level << ")\n";
    const ArticulatedTemplate rig = make_template(c.kind, c.template_level);
    std::cerr << "template: " << rig.mesh.num_vertices() << " vertices, " << rig.skeleton.size() << " joints\n";
    generate_dataset(rig, c.count, c.pose, c.seed, out, c.threads);
    write_file(out / "config.toml", c.to_toml());
    std::cerr << "wrote " << c.count << " shapes to " << out.string() << "\n";
    return exit_ok;
}

int cmd_train(const RunConfig& c)
{
    need(c.paths.data, "--data");
    need(c.paths.out, "--out");
    const std::filesystem::path out = c.paths.out;
    const Dataset data = load_dataset(c.paths.data);
    std::vector<TrainingItem> items;
    items.reserve(data.shapes.size());
    for (const Mesh& s : data.shapes) {
        TrainingItem item{s.vertex_cloud(), std::nullopt};
        if (c.training.mode == TrainingMode::supervised) item.targets = s.vertices();
        items.push_back(std::move(item));
    }
    std::cerr << "training (" << to_string(c.training.mode) << ") on " << items.size() << " shapes, template "
              << data.templ.num_vertices() << " vertices\n";
    TrainingResult result = train(data.templ, items, c.training, init_params(c.seed), [](const EpochLoss& e) {
        std::cerr << "epoch " << e.epoch << " (phase " << e.phase << ") mean loss " << e.mean_loss << "\n";
    });
    result.params.metadata["template"] = mesh_json(data.templ);
    ensure_dir(out);
    save_checkpoint(result.params, out / "checkpoint.sdn");
    write_loss_csv(result.log, out / "loss.csv");
    write_file(out / "config.toml", c.to_toml());
    return exit_ok;
}

std::vector<Rgb> template_colors(const CorrespondenceSet& set, const Mesh& templ)
{
    const Points& v = templ.vertices();
    const Vec3 lo = v.colwise().minCoeff().transpose();
    const Vec3 span = (v.colwise().maxCoeff().transpose() - lo).cwiseMax(1e-12);
    std::vector<Rgb> colors;
    colors.reserve(set.pairs.size());
    for (const auto& pair : set.pairs) {
        Rgb rgb{};
        for (int k = 0; k < 3; ++k) {
            const double t = std::clamp((pair.template_point[k] - lo[k]) / span[k], 0.0, 1.0);
            rgb[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(std::lround(255.0 * t));
        }
        colors.push_back(rgb);
    }
    return colors;
}

int cmd_match(const RunConfig& c)
{
    need(c.paths.checkpoint, "--checkpoint");
    need(c.paths.ref, "--ref");
    need(c.paths.target, "--target");
    need(c.paths.out, "--out");
    const NetworkParams params = load_checkpoint(c.paths.checkpoint);
    Mesh templ;
    if (!c.paths.templ.empty()) {
        templ = load_mesh(c.paths.templ);
    } else if (params.metadata.contains("template")) {
        templ = json_mesh(params.metadata["template"]);
    } else {
        throw UsageError("--template is required: the checkpoint does not embed one");
    }
    validate_template(templ);
    const Mesh ref = load_mesh(c.paths.ref);
    const Mesh target = load_mesh(c.paths.target);

    std::cerr << "fitting reference\n";
    const ShapeFit ref_fit = fit_shape(params, templ, ref.vertex_cloud(), c.matching);
    std::cerr << "  angle " << ref_fit.angle << ", chamfer " << ref_fit.encoder_chamfer << " -> "
              << ref_fit.refined_chamfer << "\n";
    std::cerr << "fitting target\n";
    const ShapeFit target_fit = fit_shape(params, templ, target.vertex_cloud(), c.matching);
    std::cerr << "  angle " << target_fit.angle << ", chamfer " << target_fit.encoder_chamfer << " -> "
              << target_fit.refined_chamfer << "\n";

    const CorrespondenceSet set =
        match_fitted(params, templ, ref.vertex_cloud(), ref_fit, target.vertex_cloud(), target_fit, c.matching);
    const std::filesystem::path out = c.paths.out;
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_correspondences_csv(set, out);
    write_file(out.string() + ".config.toml", c.to_toml());

    if (!c.paths.color_out.empty()) {
        const std::filesystem::path dir = c.paths.color_out;
        ensure_dir(dir);
        save_mesh(ref, dir / "reference.ply", MeshFormat::ply_ascii, template_colors(set, templ));
        const CorrespondenceSet own = match_fitted(params, templ, target.vertex_cloud(), target_fit,
                                                   target.vertex_cloud(), target_fit, c.matching);
        save_mesh(target, dir / "target.ply", MeshFormat::ply_ascii, template_colors(own, templ));
    }
    return exit_ok;
}

std::vector<Vec3> load_truth(const RunConfig& c, const std::vector<int>& pair)
{
    const std::filesystem::path truth = c.paths.truth;
    std::vector<Vec3> gt;
    if (truth.extension() == ".json") {
        if (pair.size() != 2) throw UsageError("--pair REF TARGET is required with a manifest");
        const Dataset d = load_dataset(truth);
        const int n = static_cast<int>(d.shapes.size());
        for (int i : pair) {
            if (i < 0 || i >= n) throw UsageError("--pair index " + std::to_string(i) + " is out of range");
        }
        const Mesh& target = d.shapes[static_cast<std::size_t>(pair[1])];
        for (int i = 0; i < target.num_vertices(); ++i) gt.push_back(target.vertex(i));
    } else if (truth.extension() == ".csv") {
        for (const auto& p : read_correspondences_csv(truth).pairs) gt.push_back(p.target);
    } else {
        const Mesh target = load_mesh(truth);
        for (int i = 0; i < target.num_vertices(); ++i) gt.push_back(target.vertex(i));
    }
    return gt;
}

int cmd_eval(const RunConfig& c, const std::vector<int>& pair)
{
    need(c.paths.pred, "--pred");
    need(c.paths.truth, "--truth");
    const CorrespondenceSet pred = read_correspondences_csv(c.paths.pred);
    const CorrespondenceError err = correspondence_error(pred, load_truth(c, pair));
    char line[64];
    std::snprintf(line, sizeof line, "%.6f\n", err.mean);
    std::cout << line << std::flush;
    if (!c.paths.out.empty()) {
        std::string csv = "index,error\n";
        for (std::size_t i = 0; i < err.per_pair.size(); ++i) {
            csv += std::to_string(i) + "," + format_double(err.per_pair[i]) + "\n";
        }
        write_file(c.paths.out, csv);
    }
    return exit_ok;
}

void add_common(CLI::App* sub, Overrides& o)
{
    sub->add_option("--seed", o.seed, "Root seed for all randomness");
    sub->add_option("--threads", o.threads, "Worker cap (0 = all cores)");
    sub->add_option("--config", o.config, "TOML or JSON config file")->check(CLI::ExistingFile);
}

} // namespace

int run_cli(const std::vector<std::string>& args)
{
    CLI::App app{"Template deformation networks: data generation, training, matching and evaluation", "sdn"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    Overrides o;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate posed shapes with by-index correspondence");
    add_common(gen, o);
    gen->add_option("--kind", o.kind, "biped, quadruped or tube");
    gen->add_option("--count", o.count, "Number of shapes");
    gen->add_option("--resolution", o.level, "Template subdivision level in [0, 4]");
    gen->add_option("--max-angle", o.max_angle, "Per-joint rotation bound (radians)");
    gen->add_flag("--hard", o.hard, "Wider angle range on key joints");
    gen->add_option("--out", o.out, "Output directory");

    CLI::App* tr = app.add_subcommand("train", "Train the encoder and decoder");
    add_common(tr, o);
    tr->add_option("--data", o.data, "Dataset manifest");
    tr->add_option("--mode", o.mode, "supervised or unsupervised");
    tr->add_option("--out", o.out, "Output directory for checkpoint, loss CSV and config");
    tr->add_option("--epochs", o.epochs1, "Epochs at the first learning rate");
    tr->add_option("--epochs-phase2", o.epochs2, "Epochs at the second learning rate");
    tr->add_option("--lr", o.lr1, "First learning rate");
    tr->add_option("--lr-phase2", o.lr2, "Second learning rate");
    tr->add_option("--batch", o.batch, "Batch size");
    tr->add_option("--points", o.points, "Input points per shape");
    tr->add_option("--lambda-lap", o.lambda_lap, "Laplacian regularizer weight");
    tr->add_option("--lambda-edges", o.lambda_edges, "Edge regularizer weight");
    tr->add_option("--laplacian", o.laplacian, "uniform or cotangent");
    tr->add_option("--jitter", o.jitter, "Translation jitter half-width");

    CLI::App* ma = app.add_subcommand("match", "Find correspondences between two shapes");
    add_common(ma, o);
    ma->add_option("--checkpoint", o.checkpoint, "Trained network");
    ma->add_option("--template", o.templ, "Template mesh (default: the one embedded in the checkpoint)");
    ma->add_option("--ref", o.ref, "Reference shape (PLY or OBJ)");
    ma->add_option("--target", o.target, "Target shape (PLY or OBJ)");
    ma->add_option("--out", o.out, "Correspondence CSV");
    ma->add_option("--color-out", o.color_out, "Directory for vertex-colored reference.ply and target.ply");
    ma->add_option("--orientations", o.orientations, "Yaw candidates in the rotation search");
    ma->add_option("--refine-iters", o.refine_iters, "Latent refinement iterations");
    ma->add_option("--refine-lr", o.refine_lr, "Latent refinement learning rate");
    ma->add_option("--refine-samples", o.refine_samples, "Template samples during refinement (0 = vertices)");
    ma->add_option("--chamfer", o.chamfer, "symmetric, a_to_b or b_to_a");
    ma->add_option("--template-res", o.template_res, "Template samples for matching (0 = 20 x vertices)");

    CLI::App* ev = app.add_subcommand("eval", "Mean Euclidean correspondence error");
    add_common(ev, o);
    ev->add_option("--pred", o.pred, "Predicted correspondence CSV");
    ev->add_option("--truth", o.truth, "Ground truth: manifest (with --pair), mesh or correspondence CSV");
    ev->add_option("--pair", o.pair, "Reference and target indices in the manifest")->expected(2);
    ev->add_option("--out", o.out, "Per-pair error CSV");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage_error;
    }

    CLI::App* chosen = app.get_subcommands().front();
    try {
        RunConfig c;
        try {
            c = resolve(o);
        } catch (const PreconditionError& e) {
            throw UsageError(e.what());
        }
        if (chosen == gen) return cmd_gen_data(c);
        if (chosen == tr) return cmd_train(c);
        if (chosen == ma) return cmd_match(c);
        return cmd_eval(c, o.pair);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n\n" << chosen->help();
        return exit_usage_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime_error;
    }
}

} // namespace sdn
