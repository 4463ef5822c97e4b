#pragma once

#include <sdn/geometry.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace sdn {

enum class MeshFormat { obj, ply_ascii };

using Rgb = std::array<std::uint8_t, 3>;

/// Picks the format from the extension (.obj / .ply); throws ParseError otherwise.
MeshFormat format_from_extension(const std::filesystem::path& path);

/// Reads triangle meshes. Normals, texture coordinates and materials are
/// ignored; non-triangular faces, binary PLY and zero-area faces are rejected.
Mesh load_mesh(const std::filesystem::path& path, MeshFormat format);
Mesh load_mesh(const std::filesystem::path& path);

/// Writes positions with round-trip precision. Colors, if given, become PLY
/// uchar red/green/blue vertex properties or trailing OBJ `v x y z r g b` floats.
void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format,
               const std::optional<std::vector<Rgb>>& vertex_colors = std::nullopt);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path,
               const std::optional<std::vector<Rgb>>& vertex_colors = std::nullopt);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

} // namespace sdn
