#pragma once

#include <sdn/datagen.hpp>
#include <sdn/inference.hpp>
#include <sdn/training.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>

namespace sdn {

using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;
/// section -> key -> value; keys outside any section live under "".
using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

/// Flat TOML subset: [section] headers, `key = value` with strings, integers,
/// floats and booleans, `#` comments. Throws ParseError with the line number.
ConfigTable parse_toml(const std::string& text, const std::string& origin = "<config>");
/// JSON object of objects holding scalars.
ConfigTable parse_json_config(const std::string& text, const std::string& origin = "<config>");

/// Settings for every subcommand. Defaults, then a config file, then flags.
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 0;

    TemplateKind kind = TemplateKind::biped;
    int template_level = 0;
    int count = 100;
    PoseBounds pose;

    TrainingConfig training;
    MatchConfig matching;

    struct Paths {
        std::string data, out, checkpoint, templ, ref, target, pred, truth, color_out;
    } paths;

    /// Merges a table; unknown sections or keys and mistyped values throw ParseError.
    void apply(const ConfigTable& table, const std::string& origin);
    /// Reads a .toml or .json file and applies it.
    void load_file(const std::filesystem::path& path);
    /// Propagates run-wide seed and threads and validates every part.
    void finalize();
    /// TOML text that, loaded into a default RunConfig, reproduces this one.
    std::string to_toml() const;
};

} // namespace sdn
