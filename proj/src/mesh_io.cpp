#include <sdn/error.hpp>
#include <sdn/mesh_io.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace sdn {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

template <typename T>
T parse_number(std::string_view token, const std::string& where)
{
    T value{};
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (!token.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ParseError(where + ": cannot parse number '" + std::string(token) + "'");
    }
    return value;
}

std::string location(const fs::path& path, std::size_t line_no)
{
    return path.string() + ":" + std::to_string(line_no);
}

std::ifstream open_in(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

void check_areas(const Mesh& mesh, const fs::path& path)
{
    for (int f = 0; f < mesh.num_faces(); ++f) {
        if (!(mesh.face_area(f) > 0.0)) {
            throw InvalidTopology(path.string() + ": face " + std::to_string(f) + " has zero area");
        }
    }
}

Points to_points(const std::vector<Vec3>& verts, const fs::path& path)
{
    if (verts.empty()) throw ParseError(path.string() + ": no vertices");
    Points pts(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = verts[i];
    if (!pts.allFinite()) throw ParseError(path.string() + ": non-finite vertex coordinate");
    return pts;
}

Mesh load_obj(const fs::path& path)
{
    auto in = open_in(path);
    std::vector<Vec3> verts;
    std::vector<Face> faces;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = split_ws(line);
        if (tokens.empty() || tokens[0].front() == '#') continue;
        if (tokens[0] == "v") {
            if (tokens.size() < 4) throw ParseError(location(path, line_no) + ": vertex needs 3 coordinates");
            Vec3 p;
            for (int k = 0; k < 3; ++k) p[k] = parse_number<double>(tokens[1 + k], location(path, line_no));
            verts.push_back(p);
        } else if (tokens[0] == "f") {
            if (tokens.size() != 4) {
                throw ParseError(location(path, line_no) + ": only triangular faces are supported");
            }
            Face face{};
            for (int k = 0; k < 3; ++k) {
                auto tok = tokens[1 + k];
                tok = tok.substr(0, tok.find('/'));
                const long idx = parse_number<long>(tok, location(path, line_no));
                if (idx == 0) throw ParseError(location(path, line_no) + ": OBJ indices are 1-based");
                // Negative indices count back from the most recent vertex.
                const long resolved = idx > 0 ? idx - 1 : static_cast<long>(verts.size()) + idx;
                face[static_cast<std::size_t>(k)] = static_cast<int>(resolved);
            }
            faces.push_back(face);
        }
        // vn, vt, usemtl, mtllib, o, g, s: ignored
    }
    Mesh mesh(to_points(verts, path), std::move(faces));
    check_areas(mesh, path);
    return mesh;
}

Mesh load_ply(const fs::path& path)
{
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    if (!next_line() || line != "ply") throw ParseError(path.string() + ": missing 'ply' magic");

    struct Element {
        std::string name;
        long count = 0;
        std::vector<std::string> properties; // "list" properties recorded as "list:<name>"
    };
    std::vector<Element> elements;
    bool ascii = false;
    for (;;) {
        if (!next_line()) throw ParseError(path.string() + ": unterminated header");
        const auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        if (tokens[0] == "end_header") break;
        if (tokens[0] == "format") {
            if (tokens.size() < 2 || tokens[1] != "ascii") {
                throw ParseError(location(path, line_no) + ": only ascii PLY is supported");
            }
            ascii = true;
        } else if (tokens[0] == "element") {
            if (tokens.size() != 3) throw ParseError(location(path, line_no) + ": malformed element");
            elements.push_back({std::string(tokens[1]), parse_number<long>(tokens[2], location(path, line_no)), {}});
        } else if (tokens[0] == "property") {
            if (elements.empty()) throw ParseError(location(path, line_no) + ": property before element");
            if (tokens.size() >= 5 && tokens[1] == "list") {
                elements.back().properties.push_back("list:" + std::string(tokens[4]));
            } else if (tokens.size() == 3) {
                elements.back().properties.emplace_back(tokens[2]);
            } else {
                throw ParseError(location(path, line_no) + ": malformed property");
            }
        }
        // comment / obj_info: ignored
    }
    if (!ascii) throw ParseError(path.string() + ": missing format line");

    std::vector<Vec3> verts;
    std::vector<Face> faces;
    for (const auto& el : elements) {
        if (el.count < 0) throw ParseError(path.string() + ": negative element count");
        for (long r = 0; r < el.count; ++r) {
            if (!next_line()) throw ParseError(path.string() + ": unexpected end of data in " + el.name);
            const auto tokens = split_ws(line);
            const std::string where = location(path, line_no);
            if (el.name == "vertex") {
                Vec3 p = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
                if (tokens.size() < el.properties.size()) throw ParseError(where + ": short vertex row");
                for (std::size_t k = 0; k < el.properties.size(); ++k) {
                    const auto& prop = el.properties[k];
                    if (prop == "x") p[0] = parse_number<double>(tokens[k], where);
                    if (prop == "y") p[1] = parse_number<double>(tokens[k], where);
                    if (prop == "z") p[2] = parse_number<double>(tokens[k], where);
                }
                if (!p.allFinite()) throw ParseError(where + ": vertex lacks finite x/y/z");
                verts.push_back(p);
            } else if (el.name == "face") {
                if (tokens.empty()) throw ParseError(where + ": empty face row");
                const long n = parse_number<long>(tokens[0], where);
                if (n != 3) throw ParseError(where + ": only triangular faces are supported");
                if (tokens.size() < 4) throw ParseError(where + ": short face row");
                Face face{};
                for (int k = 0; k < 3; ++k) face[static_cast<std::size_t>(k)] = parse_number<int>(tokens[1 + static_cast<std::size_t>(k)], where);
                faces.push_back(face);
            }
        }
    }
    Mesh mesh(to_points(verts, path), std::move(faces));
    check_areas(mesh, path);
    return mesh;
}

} // namespace

std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

MeshFormat format_from_extension(const fs::path& path)
{
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return MeshFormat::obj;
    if (ext == ".ply") return MeshFormat::ply_ascii;
    throw ParseError("unknown mesh extension '" + ext + "' for " + path.string());
}

Mesh load_mesh(const fs::path& path, MeshFormat format)
{
    return format == MeshFormat::obj ? load_obj(path) : load_ply(path);
}

Mesh load_mesh(const fs::path& path)
{
    return load_mesh(path, format_from_extension(path));
}

void save_mesh(const Mesh& mesh, const fs::path& path, MeshFormat format,
               const std::optional<std::vector<Rgb>>& vertex_colors)
{
    if (vertex_colors) {
        require(static_cast<int>(vertex_colors->size()) == mesh.num_vertices(),
                "need one color per vertex (" + std::to_string(vertex_colors->size()) + " colors for " +
                    std::to_string(mesh.num_vertices()) + " vertices)");
    }
    std::ostringstream out;
    const auto& v = mesh.vertices();
    if (format == MeshFormat::ply_ascii) {
        out << "ply\nformat ascii 1.0\n";
        out << "element vertex " << mesh.num_vertices() << "\n";
        out << "property double x\nproperty double y\nproperty double z\n";
        if (vertex_colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
        out << "element face " << mesh.num_faces() << "\n";
        out << "property list uchar int vertex_indices\nend_header\n";
        for (int i = 0; i < mesh.num_vertices(); ++i) {
            out << format_double(v(i, 0)) << ' ' << format_double(v(i, 1)) << ' ' << format_double(v(i, 2));
            if (vertex_colors) {
                const auto& c = (*vertex_colors)[static_cast<std::size_t>(i)];
                out << ' ' << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2]);
            }
            out << '\n';
        }
        for (const auto& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    } else {
        for (int i = 0; i < mesh.num_vertices(); ++i) {
            out << "v " << format_double(v(i, 0)) << ' ' << format_double(v(i, 1)) << ' '
                << format_double(v(i, 2));
            if (vertex_colors) {
                const auto& c = (*vertex_colors)[static_cast<std::size_t>(i)];
                for (int k = 0; k < 3; ++k) out << ' ' << format_double(c[static_cast<std::size_t>(k)] / 255.0);
            }
            out << '\n';
        }
        for (const auto& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }

    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    const std::string text = out.str();
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) throw IoError("write failed for " + path.string());
}

void save_mesh(const Mesh& mesh, const fs::path& path, const std::optional<std::vector<Rgb>>& vertex_colors)
{
    save_mesh(mesh, path, format_from_extension(path), vertex_colors);
}

} // namespace sdn
