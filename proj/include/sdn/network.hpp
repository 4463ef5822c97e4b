#pragma once

#include <sdn/autodiff.hpp>
#include <sdn/geometry.hpp>
#include <sdn/tensor.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sdn {

inline constexpr int latent_size = 1024;
inline constexpr std::array<int, 4> encoder_widths{3, 64, 128, 1024};
/// Widths after the decoder input [p ; x] of size 3 + latent_size.
inline constexpr std::array<int, 5> decoder_widths{1024, 512, 254, 128, 3};

/// Dense layer y = x W + b with W stored as (in x out).
struct Layer {
    Tensor weight;
    Tensor bias;
};

/// Per-point MLP 3 -> 64 -> 128 -> 1024 (ReLU), max-pool, then linear 1024 -> 1024.
struct EncoderParams {
    std::array<Layer, 4> layers;
};

/// MLP (3 + 1024) -> 1024 -> 512 -> 254 -> 128 (ReLU) -> 3 (tanh).
struct DecoderParams {
    std::array<Layer, 5> layers;
};

struct NetworkParams {
    EncoderParams encoder;
    DecoderParams decoder;
    /// creation_seed, config_hash and free-form entries (e.g. the template path).
    nlohmann::json metadata = nlohmann::json::object();

    /// Every tensor in a fixed order, with stable names ("encoder.0.weight", ...).
    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
    std::int64_t num_parameters() const;
};

/// LatentCode is a 1024-vector (shape {1024}).
using LatentCode = Tensor;

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Deterministic per seed.
NetworkParams init_params(std::uint64_t seed);

/// Throws ShapeMismatch if any tensor deviates from the architecture, NonFiniteValue
/// if any entry is NaN/Inf.
void validate_params(const NetworkParams& params);

/// Parameters bound to a tape (no copies).
struct EncoderVars {
    std::array<ad::Var, 4> weight, bias;
};
struct DecoderVars {
    std::array<ad::Var, 5> weight, bias;
};

EncoderVars bind(ad::Tape& tape, const EncoderParams& params, bool requires_grad);
DecoderVars bind(ad::Tape& tape, const DecoderParams& params, bool requires_grad);

/// Differentiable encoder; `points` is N x 3. Returns a {1024} node.
ad::Var encode(ad::Tape& tape, const EncoderVars& enc, ad::Var points);
/// Differentiable decoder; `template_points` is M x 3, `code` is {1024}. Returns M x 3.
ad::Var decode(ad::Tape& tape, const DecoderVars& dec, ad::Var template_points, ad::Var code);

LatentCode encode(const EncoderParams& params, const PointCloud& cloud);
Points decode(const DecoderParams& params, const Points& template_points, const LatentCode& code);

/// Decoder with frozen weights and a fixed set of template points: the point half
/// of the first layer is evaluated once. Outputs are bitwise identical to decode().
class FrozenDecoder {
public:
    FrozenDecoder(const DecoderParams& params, const Points& template_points);

    /// Differentiable in `code` only.
    ad::Var decode(ad::Tape& tape, ad::Var code) const;
    Points decode(const LatentCode& code) const;

    int num_points() const { return static_cast<int>(m_point_term.rows()); }

private:
    const DecoderParams* m_params;
    Tensor m_point_term; // P * W1[0:3]
};

// Checkpoint format, all integers little-endian:
//   "SDNCKPT\0" | u32 version | u64 n + n bytes JSON metadata | u32 tensor count |
//   per tensor: u32 name length, name, u32 rank, rank x i64 dims, float64 payload |
//   u32 CRC-32 of every preceding byte.
inline constexpr std::uint32_t checkpoint_version = 1;

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

} // namespace sdn
