#pragma once

#include <sdn/geometry.hpp>
#include <sdn/laplacian.hpp>
#include <sdn/losses.hpp>
#include <sdn/network.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sdn {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::vector<Matrix> m, v;
};

/// One Adam update with bias correction:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
/// Moments are allocated on the first call. Throws NonFiniteValue on NaN/Inf
/// gradients (state and parameters are left untouched).
void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Matrix> grads);

enum class TrainingMode { supervised, unsupervised };

TrainingMode parse_training_mode(const std::string& name);
std::string to_string(TrainingMode mode);

struct TrainingConfig {
    TrainingMode mode = TrainingMode::supervised;
    int epochs_phase1 = 25;
    double lr_phase1 = 1e-3;
    int epochs_phase2 = 2;
    double lr_phase2 = 1e-4;
    int batch_size = 32;
    int points_per_shape = 6890;
    LossWeights weights;
    LaplacianVariant laplacian = LaplacianVariant::cotangent;
    /// Half-width (meters) of the uniform per-axis translation applied to inputs.
    double translation_jitter = 0.03;
    std::uint64_t seed = 0;
    /// Workers for per-shape forward/backward passes (0 = all cores).
    int threads = 0;

    void validate() const;
    /// Canonical text form; hashed into checkpoint metadata.
    std::string describe() const;
};

/// A training shape; supervised targets are ordered like the template vertices.
struct TrainingItem {
    PointCloud shape;
    std::optional<Points> targets;
};

struct EpochLoss {
    int epoch = 0; // 1-based, continuous across phases
    int phase = 1;
    double mean_loss = 0.0;
};

struct TrainingResult {
    NetworkParams params;
    std::vector<EpochLoss> log;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Two-phase Adam training. Each epoch reshuffles the items; each batch jitters
/// and subsamples every input, runs encode/decode/loss/backward per shape, averages
/// the per-shape gradients and takes one Adam step. Deterministic for a given
/// (seed, config, item order), independent of `threads`.
TrainingResult train(const Mesh& templ, std::span<const TrainingItem> items, const TrainingConfig& config,
                     NetworkParams init, const EpochCallback& on_epoch = {});

/// Per-shape loss and parameter gradients (same order as named_tensors()).
struct ShapeGradient {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

/// Training objective of one already-prepared shape. `input` feeds the encoder;
/// in supervised mode `template_points`/`targets` are aligned rows, in unsupervised
/// mode `template_points` are all template vertices and `input` is the Chamfer target.
ShapeGradient shape_gradient(const NetworkParams& params, TrainingMode mode, const Mesh& templ,
                             const LaplacianOperator* laplacian, const LossWeights& weights, const Points& input,
                             const Points& template_points, const Points* targets);

/// Writes `epoch,phase,mean_loss` rows.
void write_loss_csv(const std::vector<EpochLoss>& log, const std::filesystem::path& path);

} // namespace sdn
