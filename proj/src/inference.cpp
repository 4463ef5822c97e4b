#include <sdn/error.hpp>
#include <sdn/inference.hpp>
#include <sdn/mesh_io.hpp>
#include <sdn/nn_index.hpp>
#include <sdn/parallel.hpp>
#include <sdn/rng.hpp>
#include <sdn/training.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace sdn {

void RefinementConfig::validate() const
{
    require(iterations >= 0, "refinement iterations must be non-negative");
    require(lr > 0.0, "refinement learning rate must be positive");
    require(template_sample_count >= 0, "template_sample_count must be non-negative");
}

OrientationResult best_orientation(const NetworkParams& params, const Points& template_points,
                                   const PointCloud& shape, int n_orientations, int threads)
{
    require(n_orientations >= 1, "need at least one orientation");
    std::vector<LatentCode> codes(static_cast<std::size_t>(n_orientations));
    std::vector<double> losses(static_cast<std::size_t>(n_orientations));
    const FrozenDecoder decoder(params.decoder, template_points);
    parallel_for(n_orientations, threads, [&](int k) {
        const double angle = 2.0 * std::numbers::pi * k / n_orientations;
        const PointCloud rotated = k == 0 ? shape : rotate_y(shape, angle);
        LatentCode code = encode(params.encoder, rotated);
        losses[static_cast<std::size_t>(k)] = chamfer(decoder.decode(code), rotated.points(), ChamferMode::symmetric);
        codes[static_cast<std::size_t>(k)] = std::move(code);
    });
    int best = 0;
    for (int k = 1; k < n_orientations; ++k) {
        if (losses[static_cast<std::size_t>(k)] < losses[static_cast<std::size_t>(best)]) best = k;
    }
    OrientationResult out;
    out.index = best;
    out.angle = 2.0 * std::numbers::pi * best / n_orientations;
    out.code = std::move(codes[static_cast<std::size_t>(best)]);
    out.chamfer = losses[static_cast<std::size_t>(best)];
    out.chamfers = std::move(losses);
    return out;
}

RefinementResult refine_latent(const NetworkParams& params, const Points& template_points, const PointCloud& shape,
                               const LatentCode& init, const RefinementConfig& config)
{
    config.validate();
    if (init.numel() != latent_size) throw ShapeMismatch("latent code must have 1024 entries");
    if (!init.all_finite()) throw NonFiniteValue("initial latent code is not finite");

    const FrozenDecoder decoder(params.decoder, template_points);
    const Tensor target(Matrix(shape.points()));

    Tensor code = init;
    AdamState adam;
    adam.lr = config.lr;
    std::vector<Tensor*> slot{&code};

    RefinementResult result;
    result.code = init;
    result.chamfer = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= config.iterations; ++it) {
        ad::Tape tape;
        ad::Var x = tape.param(code, true);
        ad::Var loss = chamfer(decoder.decode(tape, x), tape.param(target, false), config.chamfer_mode);
        const double value = loss.value().item();
        if (it == 0) result.initial_chamfer = value;
        if (value < result.chamfer) {
            result.chamfer = value;
            result.code = code;
            result.best_iteration = it;
        }
        if (it == config.iterations) break;
        tape.backward(loss);
        std::vector<Matrix> grad{Matrix::Zero(code.rows(), code.cols())};
        tape.add_grad_to(x, grad[0]);
        adam_step(adam, slot, grad);
    }
    return result;
}

CorrespondenceSet extract_correspondences(const Deformer& deform, const Mesh& templ, const PointCloud& shape_r,
                                          const LatentCode& code_r, const PointCloud& shape_t,
                                          const LatentCode& code_t, int template_resolution, std::uint64_t seed)
{
    require(template_resolution >= templ.num_vertices(),
            "template_resolution must be at least the template vertex count");
    if (!code_r.all_finite() || !code_t.all_finite()) throw NonFiniteValue("latent codes must be finite");

    const SurfaceSamples samples =
        sample_surface(templ, template_resolution, SamplingMode::uniform_area, derive_seed(seed, Stream::template_samples));
    const Points& tpl = samples.cloud.points();
    const Points deformed_r = deform(tpl, code_r);
    const Points deformed_t = deform(tpl, code_t);

    const NearestNeighborIndex on_deformed_r(deformed_r);
    const NearestNeighborIndex on_target(shape_t);

    CorrespondenceSet out;
    out.pairs.resize(static_cast<std::size_t>(shape_r.size()));
    for (int i = 0; i < shape_r.size(); ++i) {
        const int p = on_deformed_r.query(shape_r[i]).index;
        const int q = on_target.query(deformed_t.row(p).transpose()).index;
        out.pairs[static_cast<std::size_t>(i)] = {shape_r[i], shape_t[q], tpl.row(p).transpose(), q};
    }
    return out;
}

CorrespondenceSet extract_correspondences(const NetworkParams& params, const Mesh& templ, const PointCloud& shape_r,
                                          const LatentCode& code_r, const PointCloud& shape_t,
                                          const LatentCode& code_t, int template_resolution, std::uint64_t seed)
{
    const Deformer deform = [&](const Points& tpl, const LatentCode& code) {
        return decode(params.decoder, tpl, code);
    };
    return extract_correspondences(deform, templ, shape_r, code_r, shape_t, code_t, template_resolution, seed);
}

CorrespondenceError correspondence_error(const CorrespondenceSet& pred, const std::vector<Vec3>& ground_truth)
{
    if (ground_truth.size() < pred.pairs.size()) {
        throw MissingGroundTruth("ground truth covers " + std::to_string(ground_truth.size()) + " of " +
                                 std::to_string(pred.pairs.size()) + " reference points");
    }
    CorrespondenceError out;
    out.per_pair.reserve(pred.pairs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pred.pairs.size(); ++i) {
        const double d = (pred.pairs[i].target - ground_truth[i]).norm();
        out.per_pair.push_back(d);
        total += d;
    }
    out.mean = pred.pairs.empty() ? 0.0 : total / static_cast<double>(pred.pairs.size());
    return out;
}

void write_correspondences_csv(const CorrespondenceSet& set, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "ref_x,ref_y,ref_z,tgt_x,tgt_y,tgt_z,tpl_x,tpl_y,tpl_z\n";
    for (const auto& c : set.pairs) {
        bool first = true;
        for (const Vec3* v : {&c.reference, &c.target, &c.template_point}) {
            for (int k = 0; k < 3; ++k) {
                if (!first) out << ',';
                out << format_double((*v)[k]);
                first = false;
            }
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

CorrespondenceSet read_correspondences_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("ref_x,", 0) != 0) {
        throw ParseError(path.string() + ": missing correspondence CSV header");
    }
    CorrespondenceSet set;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        double v[9];
        int k = 0;
        while (std::getline(row, cell, ',')) {
            if (k >= 9) break;
            try {
                std::size_t used = 0;
                v[k] = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
            }
            ++k;
        }
        if (k != 9) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 9 columns");
        set.pairs.push_back({Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]), Vec3(v[6], v[7], v[8]), -1});
    }
    return set;
}

Points refinement_template_points(const Mesh& templ, const RefinementConfig& config, std::uint64_t seed)
{
    if (config.template_sample_count == 0) return templ.vertices();
    return sample_surface(templ, config.template_sample_count, SamplingMode::uniform_area,
                          derive_seed(seed, Stream::template_samples, 1))
        .cloud.points();
}

ShapeFit fit_shape(const NetworkParams& params, const Mesh& templ, const PointCloud& shape, const MatchConfig& config)
{
    const Points tpl = refinement_template_points(templ, config.refinement, config.seed);
    auto [centered, translation] = normalize_shape(shape);
    const OrientationResult orient = best_orientation(params, tpl, centered, config.orientations, config.threads);

    ShapeFit fit;
    fit.translation = translation;
    fit.angle = orient.angle;
    fit.canonical = orient.index == 0 ? centered : rotate_y(centered, orient.angle);
    fit.encoder_code = orient.code;
    fit.encoder_chamfer = orient.chamfer;
    const RefinementResult refined = refine_latent(params, tpl, fit.canonical, orient.code, config.refinement);
    fit.code = refined.code;
    fit.refined_chamfer = refined.chamfer;
    return fit;
}

CorrespondenceSet match_fitted(const NetworkParams& params, const Mesh& templ, const PointCloud& reference,
                               const ShapeFit& ref_fit, const PointCloud& target, const ShapeFit& target_fit,
                               const MatchConfig& config)
{
    const int resolution = config.template_resolution > 0 ? config.template_resolution : 20 * templ.num_vertices();
    CorrespondenceSet set = extract_correspondences(params, templ, ref_fit.canonical, ref_fit.code,
                                                    target_fit.canonical, target_fit.code, resolution, config.seed);
    // Report the original coordinates; point order is preserved by centering and rotation.
    for (std::size_t i = 0; i < set.pairs.size(); ++i) {
        auto& c = set.pairs[i];
        c.reference = reference[static_cast<int>(i)];
        c.target = target[c.target_index];
    }
    return set;
}

CorrespondenceSet match_shapes(const NetworkParams& params, const Mesh& templ, const PointCloud& reference,
                               const PointCloud& target, const MatchConfig& config)
{
    const ShapeFit ref_fit = fit_shape(params, templ, reference, config);
    const ShapeFit target_fit = fit_shape(params, templ, target, config);
    return match_fitted(params, templ, reference, ref_fit, target, target_fit, config);
}

} // namespace sdn
