#include <sdn/error.hpp>
#include <sdn/network.hpp>
#include <sdn/rng.hpp>

#include <zlib.h>

#include <bit>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sdn {

namespace {

Layer make_layer(int in, int out, std::uint64_t seed)
{
    using Shape = std::vector<std::int64_t>;
    Layer l{Tensor(Shape{in, out}), Tensor(Shape{out})};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Rng rng(seed);
    for (std::int64_t i = 0; i < l.weight.numel(); ++i) l.weight[i] = rng.uniform(-bound, bound);
    return l;
}

void check_layer(const Layer& l, std::int64_t in, std::int64_t out, const std::string& name)
{
    const std::vector<std::int64_t> ws{in, out}, bs{out};
    if (l.weight.shape() != ws || l.bias.shape() != bs) {
        throw ShapeMismatch(name + ": expected weight [" + std::to_string(in) + ", " + std::to_string(out) +
                            "] and bias [" + std::to_string(out) + "], got " + l.weight.shape_string() +
                            " and " + l.bias.shape_string());
    }
    if (!l.weight.all_finite() || !l.bias.all_finite()) throw NonFiniteValue(name + " has NaN/Inf");
}

template <typename Params>
void append_named(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix, Params& p)
{
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        out.emplace_back(prefix + "." + std::to_string(i) + ".weight", &p.layers[i].weight);
        out.emplace_back(prefix + "." + std::to_string(i) + ".bias", &p.layers[i].bias);
    }
}

} // namespace

std::vector<std::pair<std::string, Tensor*>> NetworkParams::named_tensors()
{
    std::vector<std::pair<std::string, Tensor*>> out;
    append_named(out, "encoder", encoder);
    append_named(out, "decoder", decoder);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> NetworkParams::named_tensors() const
{
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<NetworkParams*>(this)->named_tensors()) out.emplace_back(name, t);
    return out;
}

std::int64_t NetworkParams::num_parameters() const
{
    std::int64_t n = 0;
    for (const auto& [name, t] : named_tensors()) n += t->numel();
    return n;
}

NetworkParams init_params(std::uint64_t seed)
{
    NetworkParams p;
    std::uint64_t layer = 0;
    for (std::size_t i = 0; i < p.encoder.layers.size(); ++i) {
        const int in = i < 3 ? encoder_widths[i] : latent_size;
        const int out = i < 3 ? encoder_widths[i + 1] : latent_size;
        p.encoder.layers[i] = make_layer(in, out, derive_seed(seed, Stream::init, layer++));
    }
    int in = 3 + latent_size;
    for (std::size_t i = 0; i < p.decoder.layers.size(); ++i) {
        p.decoder.layers[i] = make_layer(in, decoder_widths[i], derive_seed(seed, Stream::init, layer++));
        in = decoder_widths[i];
    }
    p.metadata["creation_seed"] = seed;
    return p;
}

void validate_params(const NetworkParams& params)
{
    for (std::size_t i = 0; i < 4; ++i) {
        const int in = i < 3 ? encoder_widths[i] : latent_size;
        const int out = i < 3 ? encoder_widths[i + 1] : latent_size;
        check_layer(params.encoder.layers[i], in, out, "encoder." + std::to_string(i));
    }
    int in = 3 + latent_size;
    for (std::size_t i = 0; i < 5; ++i) {
        check_layer(params.decoder.layers[i], in, decoder_widths[i], "decoder." + std::to_string(i));
        in = decoder_widths[i];
    }
}

EncoderVars bind(ad::Tape& tape, const EncoderParams& params, bool requires_grad)
{
    EncoderVars v;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        v.weight[i] = tape.param(params.layers[i].weight, requires_grad);
        v.bias[i] = tape.param(params.layers[i].bias, requires_grad);
    }
    return v;
}

DecoderVars bind(ad::Tape& tape, const DecoderParams& params, bool requires_grad)
{
    DecoderVars v;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        v.weight[i] = tape.param(params.layers[i].weight, requires_grad);
        v.bias[i] = tape.param(params.layers[i].bias, requires_grad);
    }
    return v;
}

ad::Var encode(ad::Tape& tape, const EncoderVars& enc, ad::Var points)
{
    (void)tape;
    if (points.value().cols() != 3 || points.value().rows() == 0) {
        throw ShapeMismatch("encode expects a non-empty N x 3 input, got " + points.value().shape_string());
    }
    ad::Var h = points;
    for (std::size_t i = 0; i < 3; ++i) h = ad::relu(ad::add_row(ad::matmul(h, enc.weight[i]), enc.bias[i]));
    ad::Var pooled = ad::max_over_rows(h).values;
    return ad::reshape(ad::add(ad::matmul(pooled, enc.weight[3]), enc.bias[3]), {latent_size});
}

namespace {

// Layers 2..5 of the decoder applied to the first-layer pre-activation.
ad::Var decoder_tail(const DecoderVars& dec, ad::Var pre1)
{
    ad::Var h = ad::relu(pre1);
    for (std::size_t i = 1; i < 4; ++i) h = ad::relu(ad::add_row(ad::matmul(h, dec.weight[i]), dec.bias[i]));
    return ad::tanh(ad::add_row(ad::matmul(h, dec.weight[4]), dec.bias[4]));
}

} // namespace

ad::Var decode(ad::Tape& tape, const DecoderVars& dec, ad::Var template_points, ad::Var code)
{
    (void)tape;
    if (template_points.value().cols() != 3) throw ShapeMismatch("decode expects M x 3 template points");
    if (code.value().numel() != latent_size) throw ShapeMismatch("latent code must have 1024 entries");
    // [p ; x] W1 = p W1[0:3] + x W1[3:], so the code half is computed once per shape.
    ad::Var code_term = ad::add(ad::matmul_rows(code, dec.weight[0], 3, latent_size), dec.bias[0]);
    ad::Var pre1 = ad::add_row(ad::matmul_rows(template_points, dec.weight[0], 0, 3), code_term);
    return decoder_tail(dec, pre1);
}

LatentCode encode(const EncoderParams& params, const PointCloud& cloud)
{
    ad::Tape tape;
    auto vars = bind(tape, params, false);
    return encode(tape, vars, tape.constant(Tensor(Matrix(cloud.points())))).value();
}

Points decode(const DecoderParams& params, const Points& template_points, const LatentCode& code)
{
    ad::Tape tape;
    auto vars = bind(tape, params, false);
    ad::Var out = decode(tape, vars, tape.constant(Tensor(Matrix(template_points))), tape.param(code, false));
    return out.mat();
}

FrozenDecoder::FrozenDecoder(const DecoderParams& params, const Points& template_points)
    : m_params(&params)
{
    // Same expression as the point half of matmul_rows in decode().
    const Matrix& w = params.layers[0].weight.mat();
    const Matrix p = template_points;
    Matrix point_term(p.rows(), w.cols());
    point_term.noalias() = p * w.middleRows(0, 3);
    m_point_term = Tensor(std::move(point_term));
}

ad::Var FrozenDecoder::decode(ad::Tape& tape, ad::Var code) const
{
    if (code.value().numel() != latent_size) throw ShapeMismatch("latent code must have 1024 entries");
    auto vars = bind(tape, *m_params, false);
    ad::Var code_term = ad::add(ad::matmul_rows(code, vars.weight[0], 3, latent_size), vars.bias[0]);
    ad::Var pre1 = ad::add_row(tape.param(m_point_term, false), code_term);
    return decoder_tail(vars, pre1);
}

Points FrozenDecoder::decode(const LatentCode& code) const
{
    ad::Tape tape;
    return decode(tape, tape.param(code, false)).mat();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char checkpoint_magic[8] = {'S', 'D', 'N', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::string& out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T)); // host is little-endian (checked below)
    out.append(bytes, sizeof(T));
}

class Reader {
public:
    Reader(const std::string& data, std::size_t end)
        : m_data(data)
        , m_end(end)
    {}

    template <typename T>
    T get()
    {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }

    const char* take(std::size_t n)
    {
        if (n > m_end - m_pos) throw CorruptChecksum("checkpoint record overruns the payload");
        const char* p = m_data.data() + m_pos;
        m_pos += n;
        return p;
    }

    std::size_t pos() const { return m_pos; }
    void seek(std::size_t p) { m_pos = p; }

private:
    const std::string& m_data;
    std::size_t m_end;
    std::size_t m_pos = 0;
};

std::uint32_t crc32_of(const char* data, std::size_t n)
{
    return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

} // namespace

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path)
{
    validate_params(params);
    std::string out(checkpoint_magic, sizeof(checkpoint_magic));
    put<std::uint32_t>(out, checkpoint_version);
    const std::string meta = params.metadata.dump();
    put<std::uint64_t>(out, meta.size());
    out += meta;
    const auto tensors = params.named_tensors();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t->shape().size()));
        for (auto d : t->shape()) put<std::int64_t>(out, d);
        out.append(reinterpret_cast<const char*>(t->data()), static_cast<std::size_t>(t->numel()) * sizeof(double));
    }
    put<std::uint32_t>(out, crc32_of(out.data(), out.size()));

    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("write failed for " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string());
    const std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    constexpr std::size_t header = sizeof(checkpoint_magic) + sizeof(std::uint32_t);
    if (data.size() < header || std::memcmp(data.data(), checkpoint_magic, sizeof(checkpoint_magic)) != 0) {
        throw CorruptChecksum(path.string() + " is not a checkpoint (bad magic or too short)");
    }
    std::uint32_t version = 0;
    std::memcpy(&version, data.data() + sizeof(checkpoint_magic), sizeof(version));
    if (version != checkpoint_version) {
        throw VersionMismatch(path.string() + " has format version " + std::to_string(version) + ", expected " +
                              std::to_string(checkpoint_version));
    }
    if (data.size() < header + sizeof(std::uint32_t)) throw CorruptChecksum(path.string() + " is truncated");
    const std::size_t body = data.size() - sizeof(std::uint32_t);
    std::uint32_t stored = 0;
    std::memcpy(&stored, data.data() + body, sizeof(stored));
    if (stored != crc32_of(data.data(), body)) throw CorruptChecksum(path.string() + " failed its CRC-32 check");

    Reader in(data, body);
    in.seek(header);
    NetworkParams params;
    const auto meta_len = in.get<std::uint64_t>();
    const char* meta = in.take(meta_len);
    try {
        params.metadata = nlohmann::json::parse(meta, meta + meta_len);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptChecksum(std::string("checkpoint metadata: ") + e.what());
    }
    const auto count = in.get<std::uint32_t>();
    auto slots = params.named_tensors();
    if (count != slots.size()) throw ShapeMismatch("checkpoint holds " + std::to_string(count) + " tensors");
    for (auto& [name, slot] : slots) {
        const auto name_len = in.get<std::uint32_t>();
        const std::string stored_name(in.take(name_len), name_len);
        if (stored_name != name) throw ShapeMismatch("expected tensor '" + name + "', found '" + stored_name + "'");
        const auto rank = in.get<std::uint32_t>();
        std::vector<std::int64_t> shape(rank);
        std::int64_t numel = 1;
        for (auto& d : shape) {
            d = in.get<std::int64_t>();
            if (d < 0 || d > (std::int64_t{1} << 32)) throw CorruptChecksum("implausible dimension in " + name);
            numel *= d;
        }
        Tensor t(shape);
        std::memcpy(t.data(), in.take(static_cast<std::size_t>(numel) * sizeof(double)),
                    static_cast<std::size_t>(numel) * sizeof(double));
        *slot = std::move(t);
    }
    if (in.pos() != body) throw CorruptChecksum("trailing bytes in " + path.string());
    validate_params(params);
    return params;
}

} // namespace sdn
