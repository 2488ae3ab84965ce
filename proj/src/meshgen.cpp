#include "mdfrac/meshgen.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <sstream>

namespace mdfrac {

namespace {

std::vector<double> read_numbers(std::istringstream& in, std::size_t lineno) {
    std::vector<double> v;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ParseError(fmt::format("malformed number '{}'", tok), lineno);
        }
    }
    return v;
}

int normal_axis(const FractureSpec& f, int dim) {
    int axis = -1;
    for (int k = 0; k < dim; ++k) {
        if (f.lo[k] == f.hi[k]) {
            if (axis >= 0) return -1;
            axis = k;
        }
    }
    return axis;
}

}  // namespace

FractureNetwork parse_fracture_file(std::istream& in) {
    FractureNetwork net;
    bool have_domain = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kw;
        if (!(ls >> kw)) continue;
        const auto v = read_numbers(ls, lineno);
        if (kw == "domain") {
            if (v.size() != 4 && v.size() != 6) throw ParseError("domain needs 4 (2d) or 6 (3d) numbers", lineno);
            net.dim = v.size() == 4 ? 2 : 3;
            const int d = net.dim;
            net.domain_lo = Vec3::Zero();
            net.domain_hi = Vec3::Zero();
            for (int k = 0; k < d; ++k) {
                net.domain_lo[k] = v[k];
                net.domain_hi[k] = v[d + k];
                if (!(net.domain_hi[k] > net.domain_lo[k])) throw ParseError("empty domain extent", lineno);
            }
            have_domain = true;
        } else if (kw == "fracture") {
            if (!have_domain) throw ParseError("fracture before domain", lineno);
            const auto d = static_cast<std::size_t>(net.dim);
            if (v.size() != 2 * d && v.size() != 2 * d + 1) {
                throw ParseError(fmt::format("fracture needs {} numbers and an optional tag", 2 * d), lineno);
            }
            FractureSpec f;
            for (std::size_t k = 0; k < d; ++k) {
                f.lo[k] = std::min(v[k], v[d + k]);
                f.hi[k] = std::max(v[k], v[d + k]);
            }
            if (v.size() == 2 * d + 1) f.tag = static_cast<int>(v.back());
            net.fractures.push_back(f);
        } else {
            throw ParseError(fmt::format("unknown keyword '{}'", kw), lineno);
        }
    }
    if (!have_domain) throw ParseError("missing domain line", lineno);
    return net;
}

FractureNetwork read_fracture_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open fracture file '{}'", path.string()));
    return parse_fracture_file(in);
}

std::vector<double> axis_coordinates(std::vector<double> breaks, double h, double grading, double h_min) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    std::vector<double> x{breaks.front()};
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i], b = breaks[i + 1];
        double rem = b - a;
        std::vector<double> left, right;
        double s = std::min(h_min, h);
        if (grading > 1.0) {
            while (s < h && rem - 2.0 * s >= std::min(s * grading, h)) {
                left.push_back(s);
                right.push_back(s);
                rem -= 2.0 * s;
                s = std::min(s * grading, h);
            }
        } else {
            s = h;
        }
        const long n = std::max(1L, std::lround(rem / s));
        std::vector<double> sizes = left;
        for (long k = 0; k < n; ++k) sizes.push_back(rem / static_cast<double>(n));
        sizes.insert(sizes.end(), right.rbegin(), right.rend());
        double pos = a;
        for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
            pos += sizes[k];
            x.push_back(pos);
        }
        x.push_back(b);
    }
    return x;
}

RawMesh structured_mesh(const FractureNetwork& net, const StructuredOptions& opt) {
    const int dim = net.dim;
    if (dim != 2 && dim != 3) throw Error(fmt::format("network dimension must be 2 or 3, got {}", dim));
    if (opt.resolution < 1) throw Error("resolution must be positive");
    double longest = 0.0;
    for (int k = 0; k < dim; ++k) longest = std::max(longest, net.domain_hi[k] - net.domain_lo[k]);
    const double h = longest / opt.resolution;

    std::array<std::vector<double>, 3> breaks;
    for (int k = 0; k < dim; ++k) breaks[k] = {net.domain_lo[k], net.domain_hi[k]};
    std::vector<int> normals;
    for (std::size_t i = 0; i < net.fractures.size(); ++i) {
        const auto& f = net.fractures[i];
        const int a = normal_axis(f, dim);
        if (a < 0) throw Error(fmt::format("fracture {} is not axis-parallel with one zero extent", i + 1));
        for (int k = 0; k < dim; ++k) {
            if (f.lo[k] < net.domain_lo[k] || f.hi[k] > net.domain_hi[k]) {
                throw Error(fmt::format("fracture {} leaves the domain", i + 1));
            }
            breaks[k].push_back(f.lo[k]);
            breaks[k].push_back(f.hi[k]);
        }
        normals.push_back(a);
    }

    std::array<std::vector<double>, 3> axes;
    std::array<std::vector<bool>, 3> is_break;
    std::array<Index, 3> n{1, 1, 1};
    for (int k = 0; k < dim; ++k) {
        axes[k] = axis_coordinates(breaks[k], h, opt.grading, h * opt.min_size_fraction);
        n[k] = static_cast<Index>(axes[k].size());
        is_break[k].resize(axes[k].size());
        for (std::size_t i = 0; i < axes[k].size(); ++i)
            is_break[k][i] = std::find(breaks[k].begin(), breaks[k].end(), axes[k][i]) != breaks[k].end();
    }

    RawMesh mesh;
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<std::array<Index, 3>> node_ijk;
    for (Index kk = 0; kk < n[2]; ++kk)
        for (Index j = 0; j < n[1]; ++j)
            for (Index i = 0; i < n[0]; ++i) {
                const std::array<Index, 3> ijk{i, j, kk};
                Vec3 p = Vec3::Zero();
                for (int k = 0; k < dim; ++k) {
                    const auto idx = static_cast<std::size_t>(ijk[k]);
                    p[k] = axes[k][idx];
                    if (opt.jitter > 0.0 && !is_break[k][idx]) {
                        const double gap = std::min(axes[k][idx] - axes[k][idx - 1], axes[k][idx + 1] - axes[k][idx]);
                        p[k] += opt.jitter * gap * unif(rng);
                    }
                }
                mesh.nodes.push_back(p);
                mesh.node_ids.push_back(static_cast<long>(mesh.nodes.size()));
                node_ijk.push_back(ijk);
            }
    auto node = [&](Index i, Index j, Index k) { return i + n[0] * (j + n[1] * k); };

    std::vector<std::vector<Index>> cells;
    if (dim == 2) {
        for (Index j = 0; j + 1 < n[1]; ++j)
            for (Index i = 0; i + 1 < n[0]; ++i) {
                const Index v00 = node(i, j, 0), v10 = node(i + 1, j, 0);
                const Index v01 = node(i, j + 1, 0), v11 = node(i + 1, j + 1, 0);
                cells.push_back({v00, v10, v11});
                cells.push_back({v00, v11, v01});
            }
    } else {
        static constexpr std::array<std::array<int, 3>, 6> perms{
            {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
        for (Index k = 0; k + 1 < n[2]; ++k)
            for (Index j = 0; j + 1 < n[1]; ++j)
                for (Index i = 0; i + 1 < n[0]; ++i)
                    for (const auto& p : perms) {
                        std::array<Index, 3> c{i, j, k};
                        std::vector<Index> tet{node(c[0], c[1], c[2])};
                        for (int step : p) {
                            ++c[step];
                            tet.push_back(node(c[0], c[1], c[2]));
                        }
                        cells.push_back(tet);
                    }
    }
    const auto element_type = dim == 2 ? ElementType::triangle : ElementType::tetrahedron;
    for (const auto& c : cells) mesh.elements.push_back({element_type, c, 1, 1});
    mesh.physical_names[1] = "matrix";
    mesh.physical_dims[1] = dim;

    auto on_fracture = [&](Index v, std::size_t f) {
        const auto& fr = net.fractures[f];
        for (int k = 0; k < dim; ++k) {
            const double x = axes[k][static_cast<std::size_t>(node_ijk[v][k])];
            if (k == normals[f] ? x != fr.lo[k] : (x < fr.lo[k] || x > fr.hi[k])) return false;
        }
        return true;
    };
    std::set<FaceKey> emitted;
    const auto face_type = dim == 2 ? ElementType::line : ElementType::triangle;
    for (std::size_t f = 0; f < net.fractures.size(); ++f) {
        const int tag = net.fractures[f].tag;
        for (const auto& c : cells) {
            for (std::size_t skip = 0; skip < c.size(); ++skip) {
                std::vector<Index> face;
                for (std::size_t q = 0; q < c.size(); ++q)
                    if (q != skip) face.push_back(c[q]);
                if (!std::all_of(face.begin(), face.end(), [&](Index v) { return on_fracture(v, f); })) continue;
                if (!emitted.insert(make_face_key(face)).second) continue;
                mesh.elements.push_back({face_type, face, tag, static_cast<int>(f + 1)});
            }
        }
        if (!mesh.physical_names.contains(tag)) {
            mesh.physical_names[tag] = tag == 2 ? "fracture" : fmt::format("fracture_{}", tag);
            mesh.physical_dims[tag] = dim - 1;
        }
    }
    return mesh;
}

}  // namespace mdfrac
