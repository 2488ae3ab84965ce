#include "mdfrac/meshio.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace mdfrac {

int element_dim(ElementType t) {
    switch (t) {
        case ElementType::point: return 0;
        case ElementType::line: return 1;
        case ElementType::triangle: return 2;
        case ElementType::tetrahedron: return 3;
    }
    return -1;
}

int RawMesh::ambient_dim() const {
    for (const auto& e : elements)
        if (e.type == ElementType::tetrahedron) return 3;
    return 2;
}

namespace {

constexpr int gmsh_type_code(ElementType t) {
    switch (t) {
        case ElementType::point: return 15;
        case ElementType::line: return 1;
        case ElementType::triangle: return 2;
        case ElementType::tetrahedron: return 4;
    }
    return 0;
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++number_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") != std::string::npos) return true;
        }
        return false;
    }
    std::string expect(const char* what) {
        std::string line;
        if (!next(line)) throw ParseError(fmt::format("unexpected end of file, expected {}", what), number_);
        return line;
    }
    std::size_t line() const noexcept { return number_; }

private:
    std::istream& in_;
    std::size_t number_ = 0;
};

class Tokens {
public:
    Tokens(std::string line, std::size_t lineno) : line_(std::move(line)), lineno_(lineno) {}

    template <class T>
    T next(const char* what) {
        skip_space();
        if (pos_ >= line_.size()) throw ParseError(fmt::format("missing {}", what), lineno_);
        T value{};
        const char* first = line_.data() + pos_;
        const char* last = line_.data() + line_.size();
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || (ptr != last && *ptr != ' ' && *ptr != '\t')) {
            throw ParseError(fmt::format("malformed {}: '{}'", what, token_at(first)), lineno_);
        }
        pos_ = static_cast<std::size_t>(ptr - line_.data());
        return value;
    }
    std::string rest() {
        skip_space();
        return line_.substr(pos_);
    }
    bool done() {
        skip_space();
        return pos_ >= line_.size();
    }

private:
    void skip_space() {
        while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t')) ++pos_;
    }
    std::string token_at(const char* p) const {
        std::string t;
        while (p < line_.data() + line_.size() && *p != ' ' && *p != '\t') t.push_back(*p++);
        return t;
    }
    std::string line_;
    std::size_t lineno_;
    std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

void expect_end(LineReader& reader, const std::string& section) {
    const std::string line = trim(reader.expect(("$End" + section).c_str()));
    if (line != "$End" + section) {
        throw ParseError(fmt::format("expected $End{}, found '{}'", section, line), reader.line());
    }
}

}  // namespace

RawMesh parse_gmsh(std::istream& in) {
    RawMesh mesh;
    LineReader reader(in);
    std::string line;
    bool have_format = false, have_nodes = false, have_elements = false;
    std::unordered_map<long, Index> node_index;

    while (reader.next(line)) {
        const std::string head = trim(line);
        if (head.empty() || head[0] != '$') {
            throw ParseError(fmt::format("expected a section header, found '{}'", head), reader.line());
        }
        const std::string section = head.substr(1);
        if (section == "MeshFormat") {
            const std::string fmt_line = reader.expect("format line");
            Tokens tok(fmt_line, reader.line());
            const std::string rest = tok.rest();
            const auto space = rest.find_first_of(" \t");
            const std::string version = rest.substr(0, space);
            if (version != "2.2") {
                throw ParseError(fmt::format("unsupported MSH version '{}' (only 2.2 ASCII)", version), reader.line());
            }
            Tokens tail(rest.substr(space == std::string::npos ? rest.size() : space), reader.line());
            const int file_type = tail.next<int>("file type");
            const int data_size = tail.next<int>("data size");
            if (file_type != 0) throw ParseError("binary MSH files are not supported", reader.line());
            if (data_size != 8) throw ParseError(fmt::format("unsupported data size {}", data_size), reader.line());
            expect_end(reader, section);
            have_format = true;
        } else if (section == "PhysicalNames") {
            std::string ct_line = reader.expect("physical name count");
            Tokens ct(ct_line, reader.line());
            const long count = ct.next<long>("physical name count");
            if (count < 0) throw ParseError("negative physical name count", reader.line());
            for (long i = 0; i < count; ++i) {
                const std::string entry = reader.expect("physical name");
                Tokens tok(entry, reader.line());
                const int dim = tok.next<int>("physical dimension");
                const int tag = tok.next<int>("physical tag");
                std::string name = tok.rest();
                if (name.size() >= 2 && name.front() == '"' && name.back() == '"') name = name.substr(1, name.size() - 2);
                mesh.physical_names[tag] = name;
                mesh.physical_dims[tag] = dim;
            }
            expect_end(reader, section);
        } else if (section == "Nodes") {
            if (!have_format) throw ParseError("$Nodes before $MeshFormat", reader.line());
            std::string ct_line = reader.expect("node count");
            Tokens ct(ct_line, reader.line());
            const long count = ct.next<long>("node count");
            if (count < 0 || !ct.done()) throw ParseError("malformed node count", reader.line());
            mesh.nodes.reserve(static_cast<std::size_t>(count));
            for (long i = 0; i < count; ++i) {
                const std::string entry = reader.expect("node");
                if (trim(entry).rfind("$End", 0) == 0) {
                    throw ParseError(fmt::format("node count {} exceeds the {} nodes present", count, i), reader.line());
                }
                Tokens tok(entry, reader.line());
                const long id = tok.next<long>("node id");
                Vec3 p;
                p.x() = tok.next<double>("x coordinate");
                p.y() = tok.next<double>("y coordinate");
                p.z() = tok.next<double>("z coordinate");
                if (!tok.done()) throw ParseError("trailing data after node coordinates", reader.line());
                if (!node_index.emplace(id, static_cast<Index>(mesh.nodes.size())).second) {
                    throw ParseError(fmt::format("duplicate node id {}", id), reader.line());
                }
                mesh.nodes.push_back(p);
                mesh.node_ids.push_back(id);
            }
            expect_end(reader, section);
            have_nodes = true;
        } else if (section == "Elements") {
            if (!have_nodes) throw ParseError("$Elements before $Nodes", reader.line());
            std::string ct_line = reader.expect("element count");
            Tokens ct(ct_line, reader.line());
            const long count = ct.next<long>("element count");
            if (count < 0 || !ct.done()) throw ParseError("malformed element count", reader.line());
            mesh.elements.reserve(static_cast<std::size_t>(count));
            for (long i = 0; i < count; ++i) {
                const std::string entry = reader.expect("element");
                if (trim(entry).rfind("$End", 0) == 0) {
                    throw ParseError(fmt::format("element count {} exceeds the {} elements present", count, i),
                                     reader.line());
                }
                Tokens tok(entry, reader.line());
                tok.next<long>("element id");
                const int code = tok.next<int>("element type");
                RawElement e;
                int n_nodes = 0;
                switch (code) {
                    case 15: e.type = ElementType::point; n_nodes = 1; break;
                    case 1: e.type = ElementType::line; n_nodes = 2; break;
                    case 2: e.type = ElementType::triangle; n_nodes = 3; break;
                    case 4: e.type = ElementType::tetrahedron; n_nodes = 4; break;
                    default:
                        throw ParseError(fmt::format("unsupported element type {} (only simplices: 15, 1, 2, 4)", code),
                                         reader.line());
                }
                const int ntags = tok.next<int>("tag count");
                if (ntags < 0) throw ParseError("negative tag count", reader.line());
                for (int t = 0; t < ntags; ++t) {
                    const int tag = tok.next<int>("element tag");
                    if (t == 0) e.physical_tag = tag;
                    if (t == 1) e.entity_tag = tag;
                }
                for (int k = 0; k < n_nodes; ++k) {
                    const long id = tok.next<long>("element node");
                    auto it = node_index.find(id);
                    if (it == node_index.end()) throw ParseError(fmt::format("unknown node id {}", id), reader.line());
                    e.nodes.push_back(it->second);
                }
                if (!tok.done()) throw ParseError("trailing data after element nodes", reader.line());
                mesh.elements.push_back(std::move(e));
            }
            expect_end(reader, section);
            have_elements = true;
        } else {
            // Unknown sections ($NodeData, $Periodic, ...) are skipped.
            std::string skip;
            bool closed = false;
            while (reader.next(skip)) {
                if (trim(skip) == "$End" + section) {
                    closed = true;
                    break;
                }
            }
            if (!closed) throw ParseError(fmt::format("section ${} is not closed", section), reader.line());
        }
    }
    if (!have_format) throw ParseError("missing $MeshFormat section", reader.line());
    if (!have_nodes) throw ParseError("missing $Nodes section", reader.line());
    if (!have_elements) throw ParseError("missing $Elements section", reader.line());
    return mesh;
}

RawMesh parse_gmsh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open mesh file '{}'", path.string()));
    return parse_gmsh(in);
}

void write_gmsh(std::ostream& out, const RawMesh& mesh) {
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
    if (!mesh.physical_names.empty()) {
        out << "$PhysicalNames\n" << mesh.physical_names.size() << '\n';
        for (const auto& [tag, name] : mesh.physical_names) {
            auto it = mesh.physical_dims.find(tag);
            out << (it == mesh.physical_dims.end() ? 0 : it->second) << ' ' << tag << " \"" << name << "\"\n";
        }
        out << "$EndPhysicalNames\n";
    }
    out << "$Nodes\n" << mesh.nodes.size() << '\n';
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        const long id = i < mesh.node_ids.size() ? mesh.node_ids[i] : static_cast<long>(i + 1);
        const auto& p = mesh.nodes[i];
        out << fmt::format("{} {:.17g} {:.17g} {:.17g}\n", id, p.x(), p.y(), p.z());
    }
    out << "$EndNodes\n$Elements\n" << mesh.elements.size() << '\n';
    for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
        const auto& e = mesh.elements[i];
        out << (i + 1) << ' ' << gmsh_type_code(e.type) << " 2 " << e.physical_tag << ' ' << e.entity_tag;
        for (Index v : e.nodes) out << ' ' << (static_cast<std::size_t>(v) < mesh.node_ids.size() ? mesh.node_ids[v] : v + 1);
        out << '\n';
    }
    out << "$EndElements\n";
}

void write_gmsh(const std::filesystem::path& path, const RawMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot write mesh file '{}'", path.string()));
    write_gmsh(out, mesh);
    if (!out) throw Error(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace mdfrac
