#include <sdn/config.hpp>
#include <sdn/error.hpp>
#include <sdn/mesh_io.hpp>

#include <nlohmann/json.hpp>

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <type_traits>

namespace sdn {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool valid_key(const std::string& k)
{
    if (k.empty()) return false;
    for (char c : k) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    }
    return true;
}

ConfigValue parse_scalar(const std::string& raw, const std::string& where)
{
    if (raw.empty()) throw ParseError(where + ": missing value");
    if (raw.front() == '"') {
        std::string out;
        std::size_t i = 1;
        for (; i < raw.size() && raw[i] != '"'; ++i) {
            if (raw[i] == '\\' && i + 1 < raw.size()) {
                const char e = raw[++i];
                out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
            } else {
                out += raw[i];
            }
        }
        if (i >= raw.size()) throw ParseError(where + ": unterminated string");
        const std::string rest = trim(raw.substr(i + 1));
        if (!rest.empty() && rest.front() != '#') throw ParseError(where + ": trailing characters after string");
        return out;
    }
    std::string v = trim(raw.substr(0, raw.find('#')));
    if (v == "true") return true;
    if (v == "false") return false;
    std::string digits;
    for (char c : v) {
        if (c != '_') digits += c;
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
    const char* first = digits.data();
    const char* last = first + digits.size();
    if (!digits.empty() && *first == '+') ++first;
    if (is_float) {
        double d = 0.0;
        const auto [p, ec] = std::from_chars(first, last, d);
        if (ec != std::errc() || p != last) throw ParseError(where + ": bad float '" + v + "'");
        return d;
    }
    std::int64_t n = 0;
    const auto [p, ec] = std::from_chars(first, last, n);
    if (ec != std::errc() || p != last) throw ParseError(where + ": bad value '" + v + "'");
    return n;
}

std::string quote(const std::string& s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string toml_float(double v)
{
    std::string s = format_double(v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

} // namespace

ConfigTable parse_toml(const std::string& text, const std::string& origin)
{
    ConfigTable table;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (t.front() == '[') {
            const auto close = t.find(']');
            if (close == std::string::npos) throw ParseError(where + ": unterminated section header");
            const std::string rest = trim(t.substr(close + 1));
            if (!rest.empty() && rest.front() != '#') throw ParseError(where + ": trailing characters after header");
            section = trim(t.substr(1, close - 1));
            if (!valid_key(section)) throw ParseError(where + ": bad section name '" + section + "'");
            table[section];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        if (!valid_key(key)) throw ParseError(where + ": bad key '" + key + "'");
        auto& sec = table[section];
        if (sec.count(key)) throw ParseError(where + ": duplicate key '" + key + "'");
        sec[key] = parse_scalar(trim(t.substr(eq + 1)), where);
    }
    return table;
}

ConfigTable parse_json_config(const std::string& text, const std::string& origin)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(origin + ": top level must be an object");
    ConfigTable table;
    for (const auto& [section, body] : j.items()) {
        if (!body.is_object()) throw ParseError(origin + ": section '" + section + "' must be an object");
        for (const auto& [key, v] : body.items()) {
            ConfigValue value;
            if (v.is_boolean()) value = v.get<bool>();
            else if (v.is_number_integer()) value = v.get<std::int64_t>();
            else if (v.is_number_float()) value = v.get<double>();
            else if (v.is_string()) value = v.get<std::string>();
            else throw ParseError(origin + ": " + section + "." + key + " must be a scalar");
            table[section][key] = value;
        }
    }
    return table;
}

void RunConfig::apply(const ConfigTable& table, const std::string& origin)
{
    using Setter = std::function<void(const ConfigValue&, const std::string&)>;
    auto as_int = [](auto& field) -> Setter {
        return [&field](const ConfigValue& v, const std::string& name) {
            const auto* n = std::get_if<std::int64_t>(&v);
            if (!n) throw ParseError(name + " must be an integer");
            using T = std::remove_reference_t<decltype(field)>;
            if constexpr (std::is_same_v<T, std::uint64_t>) {
                if (*n < 0) throw ParseError(name + " must be non-negative");
            } else {
                if (*n < std::numeric_limits<T>::min() || *n > std::numeric_limits<T>::max()) {
                    throw ParseError(name + " is out of range");
                }
            }
            field = static_cast<T>(*n);
        };
    };
    auto as_double = [](double& field) -> Setter {
        return [&field](const ConfigValue& v, const std::string& name) {
            if (const auto* d = std::get_if<double>(&v)) field = *d;
            else if (const auto* n = std::get_if<std::int64_t>(&v)) field = static_cast<double>(*n);
            else throw ParseError(name + " must be a number");
        };
    };
    auto as_bool = [](bool& field) -> Setter {
        return [&field](const ConfigValue& v, const std::string& name) {
            const auto* b = std::get_if<bool>(&v);
            if (!b) throw ParseError(name + " must be true or false");
            field = *b;
        };
    };
    auto as_string = [](std::string& field) -> Setter {
        return [&field](const ConfigValue& v, const std::string& name) {
            const auto* s = std::get_if<std::string>(&v);
            if (!s) throw ParseError(name + " must be a string");
            field = *s;
        };
    };
    auto as_enum = [&](auto& field, auto parse) -> Setter {
        return [&field, parse](const ConfigValue& v, const std::string& name) {
            const auto* s = std::get_if<std::string>(&v);
            if (!s) throw ParseError(name + " must be a string");
            try {
                field = parse(*s);
            } catch (const PreconditionError& e) {
                throw ParseError(name + ": " + e.what());
            }
        };
    };
    auto laplacian_parse = [](const std::string& s) {
        if (s == "uniform") return LaplacianVariant::uniform;
        if (s == "cotangent") return LaplacianVariant::cotangent;
        throw PreconditionError("unknown laplacian '" + s + "' (uniform, cotangent)");
    };

    const std::map<std::string, std::map<std::string, Setter>> setters{
        {"run", {{"seed", as_int(seed)}, {"threads", as_int(threads)}}},
        {"data",
         {{"kind", as_enum(kind, parse_template_kind)},
          {"template_level", as_int(template_level)},
          {"count", as_int(count)},
          {"max_angle", as_double(pose.max_angle)},
          {"root_max_angle", as_double(pose.root_max_angle)},
          {"scale_min", as_double(pose.scale_min)},
          {"scale_max", as_double(pose.scale_max)},
          {"hard", as_bool(pose.hard)},
          {"hard_max_angle", as_double(pose.hard_max_angle)}}},
        {"training",
         {{"mode", as_enum(training.mode, parse_training_mode)},
          {"epochs_phase1", as_int(training.epochs_phase1)},
          {"lr_phase1", as_double(training.lr_phase1)},
          {"epochs_phase2", as_int(training.epochs_phase2)},
          {"lr_phase2", as_double(training.lr_phase2)},
          {"batch_size", as_int(training.batch_size)},
          {"points_per_shape", as_int(training.points_per_shape)},
          {"laplacian", as_enum(training.laplacian, laplacian_parse)},
          {"translation_jitter", as_double(training.translation_jitter)}}},
        {"loss", {{"lambda_lap", as_double(training.weights.lambda_lap)},
                  {"lambda_edges", as_double(training.weights.lambda_edges)}}},
        {"refinement",
         {{"iterations", as_int(matching.refinement.iterations)},
          {"lr", as_double(matching.refinement.lr)},
          {"chamfer_mode", as_enum(matching.refinement.chamfer_mode, parse_chamfer_mode)},
          {"template_sample_count", as_int(matching.refinement.template_sample_count)}}},
        {"matching", {{"orientations", as_int(matching.orientations)},
                      {"template_resolution", as_int(matching.template_resolution)}}},
        {"paths",
         {{"data", as_string(paths.data)},
          {"out", as_string(paths.out)},
          {"checkpoint", as_string(paths.checkpoint)},
          {"template", as_string(paths.templ)},
          {"ref", as_string(paths.ref)},
          {"target", as_string(paths.target)},
          {"pred", as_string(paths.pred)},
          {"truth", as_string(paths.truth)},
          {"color_out", as_string(paths.color_out)}}},
    };
    for (const auto& [section, entries] : table) {
        const auto sec = setters.find(section);
        if (sec == setters.end()) throw ParseError(origin + ": unknown section [" + section + "]");
        for (const auto& [key, value] : entries) {
            const auto it = sec->second.find(key);
            if (it == sec->second.end()) throw ParseError(origin + ": unknown key " + section + "." + key);
            try {
                it->second(value, section + "." + key);
            } catch (const ParseError& e) {
                throw ParseError(origin + ": " + e.what());
            }
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string origin = path.string();
    apply(path.extension() == ".json" ? parse_json_config(buf.str(), origin) : parse_toml(buf.str(), origin), origin);
}

void RunConfig::finalize()
{
    require(threads >= 0, "threads must be non-negative");
    require(template_level >= 0 && template_level <= 4, "template_level must lie in [0, 4]");
    require(count >= 1, "count must be at least 1");
    pose.validate();
    training.seed = seed;
    training.threads = threads;
    training.validate();
    matching.seed = seed;
    matching.threads = threads;
    require(matching.orientations >= 1, "orientations must be at least 1");
    require(matching.template_resolution >= 0, "template_resolution must be non-negative");
    matching.refinement.validate();
}

std::string RunConfig::to_toml() const
{
    std::ostringstream s;
    const auto lap = training.laplacian == LaplacianVariant::uniform ? "uniform" : "cotangent";
    s << "[run]\n"
      << "seed = " << seed << "\n"
      << "threads = " << threads << "\n\n"
      << "[data]\n"
      << "kind = " << quote(to_string(kind)) << "\n"
      << "template_level = " << template_level << "\n"
      << "count = " << count << "\n"
      << "max_angle = " << toml_float(pose.max_angle) << "\n"
      << "root_max_angle = " << toml_float(pose.root_max_angle) << "\n"
      << "scale_min = " << toml_float(pose.scale_min) << "\n"
      << "scale_max = " << toml_float(pose.scale_max) << "\n"
      << "hard = " << (pose.hard ? "true" : "false") << "\n"
      << "hard_max_angle = " << toml_float(pose.hard_max_angle) << "\n\n"
      << "[training]\n"
      << "mode = " << quote(to_string(training.mode)) << "\n"
      << "epochs_phase1 = " << training.epochs_phase1 << "\n"
      << "lr_phase1 = " << toml_float(training.lr_phase1) << "\n"
      << "epochs_phase2 = " << training.epochs_phase2 << "\n"
      << "lr_phase2 = " << toml_float(training.lr_phase2) << "\n"
      << "batch_size = " << training.batch_size << "\n"
      << "points_per_shape = " << training.points_per_shape << "\n"
      << "laplacian = " << quote(lap) << "\n"
      << "translation_jitter = " << toml_float(training.translation_jitter) << "\n\n"
      << "[loss]\n"
      << "lambda_lap = " << toml_float(training.weights.lambda_lap) << "\n"
      << "lambda_edges = " << toml_float(training.weights.lambda_edges) << "\n\n"
      << "[refinement]\n"
      << "iterations = " << matching.refinement.iterations << "\n"
      << "lr = " << toml_float(matching.refinement.lr) << "\n"
      << "chamfer_mode = " << quote(to_string(matching.refinement.chamfer_mode)) << "\n"
      << "template_sample_count = " << matching.refinement.template_sample_count << "\n\n"
      << "[matching]\n"
      << "orientations = " << matching.orientations << "\n"
      << "template_resolution = " << matching.template_resolution << "\n\n"
      << "[paths]\n"
      << "data = " << quote(paths.data) << "\n"
      << "out = " << quote(paths.out) << "\n"
      << "checkpoint = " << quote(paths.checkpoint) << "\n"
      << "template = " << quote(paths.templ) << "\n"
      << "ref = " << quote(paths.ref) << "\n"
      << "target = " << quote(paths.target) << "\n"
      << "pred = " << quote(paths.pred) << "\n"
      << "truth = " << quote(paths.truth) << "\n"
      << "color_out = " << quote(paths.color_out) << "\n";
    return s.str();
}

} // namespace sdn
