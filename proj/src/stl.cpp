#include <array>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include <fmt/format.h>

#include "fvx/errors.hpp"
#include "fvx/geometry.hpp"

namespace fvx {

namespace {

class Tokens {
public:
    explicit Tokens(std::string_view s) : s_(s) {}

    // Returns an empty view at end of input.
    std::string_view next() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            if (s_[pos_] == '\n') ++line_;
            ++pos_;
        }
        const std::size_t start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        tok_line_ = line_;
        return s_.substr(start, pos_ - start);
    }

    void skip_line() {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
    }

    int line() const { return tok_line_; }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int tok_line_ = 1;
};

struct Welder {
    double tol;
    std::vector<Vec3>& verts;
    std::unordered_map<std::uint64_t, std::vector<int>> cells;

    static std::uint64_t key(long long i, long long j, long long k) {
        const auto h = [](long long v) { return static_cast<std::uint64_t>(v) * 0x9E3779B97F4A7C15ull; };
        return h(i) ^ (h(j) >> 1) ^ (h(k) << 1) ^ static_cast<std::uint64_t>(k * 31 + j * 17);
    }

    int insert(const Vec3& p) {
        const long long ci = std::llround(std::floor(p.x / tol));
        const long long cj = std::llround(std::floor(p.y / tol));
        const long long ck = std::llround(std::floor(p.z / tol));
        for (long long a = -1; a <= 1; ++a)
            for (long long b = -1; b <= 1; ++b)
                for (long long c = -1; c <= 1; ++c) {
                    auto it = cells.find(key(ci + a, cj + b, ck + c));
                    if (it == cells.end()) continue;
                    for (int id : it->second) {
                        const Vec3 d = verts[id] - p;
                        if (std::fabs(d.x) <= tol && std::fabs(d.y) <= tol && std::fabs(d.z) <= tol) return id;
                    }
                }
        verts.push_back(p);
        const int id = static_cast<int>(verts.size()) - 1;
        cells[key(ci, cj, ck)].push_back(id);
        return id;
    }
};

double to_double(std::string_view tok, int line, std::size_t facet) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ParseError(fmt::format("line {}: facet {}: expected a number, got '{}'", line, facet, tok));
    return v;
}

// 80-byte header, uint32 facet count, then 50 bytes per facet (normal, 3 vertices as float32, attribute word).
// Some binary files start with "solid", so the size decides.
bool is_binary_stl(std::string_view s) {
    if (s.size() < 84) return false;
    std::uint32_t n = 0;
    std::memcpy(&n, s.data() + 80, 4);
    return s.size() == 84 + 50 * static_cast<std::size_t>(n);
}

TriangleMesh parse_binary_stl(std::string_view s, double domain_length) {
    std::uint32_t n = 0;
    std::memcpy(&n, s.data() + 80, 4);
    if (n == 0) throw EmptyMeshError("STL input contains no facets");
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    Welder weld{1e-12 * domain_length, verts, {}};
    for (std::uint32_t i = 0; i < n; ++i) {
        const char* rec = s.data() + 84 + 50 * static_cast<std::size_t>(i) + 12;
        std::array<int, 3> f{};
        for (int k = 0; k < 3; ++k) {
            float xyz[3];
            std::memcpy(xyz, rec + 12 * k, 12);
            for (float c : xyz)
                if (!std::isfinite(c)) throw ParseError(fmt::format("facet {}: non-finite coordinate", i));
            f[k] = weld.insert({xyz[0], xyz[1], xyz[2]});
        }
        faces.push_back(f);
    }
    return make_mesh(3, std::move(verts), std::move(faces));
}

} // namespace

TriangleMesh parse_stl(std::string_view text, double domain_length) {
    if (is_binary_stl(text)) return parse_binary_stl(text, domain_length);
    Tokens tk(text);
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    Welder weld{1e-12 * domain_length, verts, {}};

    std::string_view t = tk.next();
    if (t != "solid") throw ParseError(fmt::format("line {}: expected 'solid'", tk.line()));
    tk.skip_line();

    auto expect = [&](std::string_view want, std::size_t facet) {
        const std::string_view got = tk.next();
        if (got != want) {
            if (got.empty())
                throw ParseError(fmt::format("line {}: facet {}: unexpected end of input, expected '{}'", tk.line(),
                                             facet, want));
            throw ParseError(
                fmt::format("line {}: facet {}: expected '{}', got '{}'", tk.line(), facet, want, got));
        }
    };

    for (;;) {
        t = tk.next();
        if (t == "endsolid") break;
        if (t.empty()) throw ParseError(fmt::format("line {}: unexpected end of input, expected 'endsolid'", tk.line()));
        const std::size_t facet = faces.size();
        if (t != "facet")
            throw ParseError(fmt::format("line {}: facet {}: expected 'facet', got '{}'", tk.line(), facet, t));
        expect("normal", facet);
        for (int i = 0; i < 3; ++i) to_double(tk.next(), tk.line(), facet);
        expect("outer", facet);
        expect("loop", facet);
        std::array<int, 3> f{};
        for (int k = 0; k < 3; ++k) {
            expect("vertex", facet);
            Vec3 p;
            for (int d = 0; d < 3; ++d) p[d] = to_double(tk.next(), tk.line(), facet);
            f[k] = weld.insert(p);
        }
        expect("endloop", facet);
        expect("endfacet", facet);
        faces.push_back(f);
    }
    if (faces.empty()) throw EmptyMeshError("STL input contains no facets");
    return make_mesh(3, std::move(verts), std::move(faces));
}

TriangleMesh load_stl(const std::string& path, double domain_length) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_stl(ss.str(), domain_length);
}

} // namespace fvx
