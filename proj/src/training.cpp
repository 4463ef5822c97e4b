#include <sdn/error.hpp>
#include <sdn/parallel.hpp>
#include <sdn/rng.hpp>
#include <sdn/training.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sdn {

void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Matrix> grads)
{
    if (params.size() != grads.size()) throw ShapeMismatch("adam_step: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].rows() != params[k]->rows() || grads[k].cols() != params[k]->cols()) {
            throw ShapeMismatch("adam_step: gradient " + std::to_string(k) + " does not match its parameter");
        }
        if (!grads[k].allFinite()) throw NonFiniteValue("adam_step: gradient " + std::to_string(k) + " is not finite");
    }
    if (state.m.empty()) {
        for (Tensor* p : params) {
            state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
            state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
    }
    if (state.m.size() != params.size()) throw ShapeMismatch("adam_step: state was built for other parameters");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto m = state.m[k].array();
        auto v = state.v[k].array();
        const auto g = grads[k].array();
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.square();
        params[k]->mat().array() -= state.lr * (m / c1) / ((v / c2).sqrt() + state.epsilon);
    }
}

TrainingMode parse_training_mode(const std::string& name)
{
    if (name == "supervised") return TrainingMode::supervised;
    if (name == "unsupervised") return TrainingMode::unsupervised;
    throw PreconditionError("unknown training mode '" + name + "' (supervised, unsupervised)");
}

std::string to_string(TrainingMode mode)
{
    return mode == TrainingMode::supervised ? "supervised" : "unsupervised";
}

void TrainingConfig::validate() const
{
    require(epochs_phase1 >= 0 && epochs_phase2 >= 0, "epoch counts must be non-negative");
    require(epochs_phase1 + epochs_phase2 > 0, "at least one epoch is needed");
    require(lr_phase1 > 0.0 && lr_phase2 > 0.0, "learning rates must be positive");
    require(batch_size > 0, "batch_size must be positive");
    require(points_per_shape > 0, "points_per_shape must be positive");
    require(weights.lambda_lap >= 0.0 && weights.lambda_edges >= 0.0, "loss weights must be non-negative");
    require(translation_jitter >= 0.0, "translation_jitter must be non-negative");
}

std::string TrainingConfig::describe() const
{
    std::ostringstream s;
    s.precision(17);
    s << "mode=" << to_string(mode) << ";epochs=" << epochs_phase1 << "+" << epochs_phase2 << ";lr=" << lr_phase1
      << "," << lr_phase2 << ";batch=" << batch_size << ";points=" << points_per_shape
      << ";lambda_lap=" << weights.lambda_lap << ";lambda_edges=" << weights.lambda_edges
      << ";laplacian=" << (laplacian == LaplacianVariant::uniform ? "uniform" : "cotangent")
      << ";jitter=" << translation_jitter << ";seed=" << seed;
    return s.str();
}

ShapeGradient shape_gradient(const NetworkParams& params, TrainingMode mode, const Mesh& templ,
                             const LaplacianOperator* laplacian, const LossWeights& weights, const Points& input,
                             const Points& template_points, const Points* targets)
{
    ad::Tape tape;
    const EncoderVars enc = bind(tape, params.encoder, true);
    const DecoderVars dec = bind(tape, params.decoder, true);
    ad::Var in = tape.constant(Tensor(Matrix(input)));
    ad::Var code = encode(tape, enc, in);
    ad::Var deformed = decode(tape, dec, tape.constant(Tensor(Matrix(template_points))), code);

    ad::Var loss;
    if (mode == TrainingMode::supervised) {
        loss = supervised_loss(deformed, tape.constant(Tensor(Matrix(*targets))));
    } else {
        loss = unsupervised_loss(templ, deformed, in, weights, *laplacian);
    }
    tape.backward(loss);

    ShapeGradient out;
    out.loss = loss.value().item();
    for (std::size_t i = 0; i < 4; ++i) {
        out.grads.push_back(tape.take_grad(enc.weight[i]));
        out.grads.push_back(tape.take_grad(enc.bias[i]));
    }
    for (std::size_t i = 0; i < 5; ++i) {
        out.grads.push_back(tape.take_grad(dec.weight[i]));
        out.grads.push_back(tape.take_grad(dec.bias[i]));
    }
    return out;
}

namespace {

std::vector<int> subsample(int n, int k, std::uint64_t seed)
{
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (n <= k) return idx;
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

Points take_rows(const Points& p, const std::vector<int>& rows)
{
    Points out(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = p.row(rows[i]);
    return out;
}

} // namespace

TrainingResult train(const Mesh& templ, std::span<const TrainingItem> items, const TrainingConfig& config,
                     NetworkParams init, const EpochCallback& on_epoch)
{
    config.validate();
    validate_template(templ);
    validate_params(init);
    require(!items.empty(), "training needs at least one shape");
    const int nv = templ.num_vertices();
    if (config.mode == TrainingMode::supervised) {
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!items[i].targets) throw DataError("supervised item " + std::to_string(i) + " has no targets");
            if (items[i].targets->rows() != nv) {
                throw DataError("supervised item " + std::to_string(i) + " has " +
                                std::to_string(items[i].targets->rows()) + " targets for a " + std::to_string(nv) +
                                "-vertex template");
            }
        }
    }
    std::optional<LaplacianOperator> laplacian;
    if (config.mode == TrainingMode::unsupervised) laplacian = build_laplacian(templ, config.laplacian);

    TrainingResult result{std::move(init), {}};
    NetworkParams& params = result.params;
    params.metadata["config"] = config.describe();
    params.metadata["config_hash"] = [&] {
        std::uint64_t h = 0;
        for (char c : config.describe()) h = mix64(h ^ static_cast<unsigned char>(c));
        std::ostringstream s;
        s << std::hex << h;
        return s.str();
    }();

    std::vector<Tensor*> slots;
    for (auto& [name, t] : params.named_tensors()) slots.push_back(t);

    AdamState adam;
    const int n_items = static_cast<int>(items.size());
    const int threads = resolve_threads(config.threads);
    const int total_epochs = config.epochs_phase1 + config.epochs_phase2;

    for (int epoch = 1; epoch <= total_epochs; ++epoch) {
        const int phase = epoch <= config.epochs_phase1 ? 1 : 2;
        adam.lr = phase == 1 ? config.lr_phase1 : config.lr_phase2;

        std::vector<int> order(static_cast<std::size_t>(n_items));
        std::iota(order.begin(), order.end(), 0);
        Rng(derive_seed(config.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch)))
            .shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        int batch_no = 0;
        for (int start = 0; start < n_items; start += config.batch_size, ++batch_no) {
            const int count = std::min(config.batch_size, n_items - start);
            std::vector<Matrix> batch_grad;
            for (Tensor* t : slots) batch_grad.push_back(Matrix::Zero(t->rows(), t->cols()));

            // Shapes are processed in waves of `threads`; reduction is in batch order.
            for (int wave = 0; wave < count; wave += threads) {
                const int wave_size = std::min(threads, count - wave);
                std::vector<ShapeGradient> results(static_cast<std::size_t>(wave_size));
                try {
                    parallel_for(wave_size, threads, [&](int w) {
                        const int item_id = order[static_cast<std::size_t>(start + wave + w)];
                        const TrainingItem& item = items[static_cast<std::size_t>(item_id)];
                        const auto e = static_cast<std::uint64_t>(epoch);
                        const auto id = static_cast<std::uint64_t>(item_id);

                        Rng jitter_rng(derive_seed(config.seed, Stream::jitter, e, id));
                        Vec3 jitter;
                        for (int k = 0; k < 3; ++k) {
                            jitter[k] = jitter_rng.uniform(-config.translation_jitter, config.translation_jitter);
                        }

                        const auto sub_seed = derive_seed(config.seed, Stream::subsample, e, id);
                        const Points& shape = item.shape.points();
                        const int n_shape = static_cast<int>(shape.rows());
                        if (config.mode == TrainingMode::supervised) {
                            const auto rows = subsample(nv, config.points_per_shape, sub_seed);
                            const auto in_rows =
                                n_shape == nv ? rows : subsample(n_shape, config.points_per_shape, sub_seed);
                            const Points input = translate(take_rows(shape, in_rows), jitter);
                            const Points targets = translate(take_rows(*item.targets, rows), jitter);
                            results[static_cast<std::size_t>(w)] =
                                shape_gradient(params, config.mode, templ, nullptr, config.weights, input,
                                               take_rows(templ.vertices(), rows), &targets);
                        } else {
                            const Points input =
                                translate(take_rows(shape, subsample(n_shape, config.points_per_shape, sub_seed)),
                                          jitter);
                            results[static_cast<std::size_t>(w)] =
                                shape_gradient(params, config.mode, templ, &*laplacian, config.weights, input,
                                               templ.vertices(), nullptr);
                        }
                    });
                } catch (const NonFiniteValue& err) {
                    throw NonFiniteValue("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_no) + ": " + err.what());
                }
                for (const auto& r : results) {
                    loss_sum += r.loss;
                    for (std::size_t k = 0; k < batch_grad.size(); ++k) batch_grad[k] += r.grads[k];
                }
            }
            for (auto& g : batch_grad) g /= static_cast<double>(count);
            try {
                adam_step(adam, slots, batch_grad);
            } catch (const NonFiniteValue& err) {
                throw NonFiniteValue("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_no) + ": " + err.what());
            }
        }
        const EpochLoss entry{epoch, phase, loss_sum / n_items};
        if (!std::isfinite(entry.mean_loss)) {
            throw NonFiniteValue("training diverged at epoch " + std::to_string(epoch));
        }
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return result;
}

void write_loss_csv(const std::vector<EpochLoss>& log, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "epoch,phase,mean_loss\n";
    out.precision(17);
    for (const auto& e : log) out << e.epoch << ',' << e.phase << ',' << e.mean_loss << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace sdn
