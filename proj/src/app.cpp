#include "fvx/app.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fvx/errors.hpp"
#include "fvx/parallel.hpp"

namespace fvx {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

struct Bad {
    std::string why;
};

double to_double(const std::string& v) {
    // accepts a plain number or a ratio such as 1/64
    const auto slash = v.find('/');
    if (slash != std::string::npos) {
        const double den = to_double(trim(v.substr(slash + 1)));
        if (den == 0.0) throw Bad{"division by zero"};
        return to_double(trim(v.substr(0, slash))) / den;
    }
    double x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty()) throw Bad{"expected a number"};
    return x;
}

long to_long(const std::string& v) {
    long x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty()) throw Bad{"expected an integer"};
    return x;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw Bad{"expected true or false"};
}

Vec3 to_vec3(const std::string& v) {
    Vec3 r;
    std::stringstream ss(v);
    std::string part;
    int n = 0;
    while (std::getline(ss, part, ',')) {
        if (n == 3) throw Bad{"expected at most three comma-separated numbers"};
        r[n++] = to_double(trim(part));
    }
    if (n == 0) throw Bad{"expected comma-separated numbers"};
    return r;
}

template <class E>
E to_enum(const std::string& v, const std::map<std::string, E>& names) {
    const auto it = names.find(v);
    if (it == names.end()) {
        std::string opts;
        for (const auto& [k, e] : names) opts += (opts.empty() ? "" : "|") + k;
        throw Bad{"expected one of " + opts};
    }
    return it->second;
}

const std::map<std::string, FaceBC> kFaceNames{
    {"wall", FaceBC::Wall}, {"velocity", FaceBC::Velocity}, {"outlet", FaceBC::Outlet}, {"periodic", FaceBC::Periodic}};
const char* const kFaceKeys[6] = {"face_xmin", "face_xmax", "face_ymin", "face_ymax", "face_zmin", "face_zmax"};

bool power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

} // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    double d_s = -1.0;
    std::map<std::string, int> seen; // key -> line
    using Setter = std::function<void(const std::string&)>;
    const std::map<std::string, Setter> keys{
        {"dim", [&](const std::string& v) { c.dim = static_cast<int>(to_long(v)); }},
        {"N_x", [&](const std::string& v) { c.nx = static_cast<int>(to_long(v)); }},
        {"length", [&](const std::string& v) { c.length = to_double(v); }},
        {"L_max", [&](const std::string& v) { c.voxel.l_max = static_cast<int>(to_long(v)); }},
        {"geometry", [&](const std::string& v) {
             c.geometry = to_enum<GeometryKind>(v, {{"none", GeometryKind::None},
                                                    {"circle", GeometryKind::Circle},
                                                    {"square", GeometryKind::Square},
                                                    {"sphere", GeometryKind::Sphere},
                                                    {"box", GeometryKind::Box},
                                                    {"stl", GeometryKind::Stl}});
         }},
        {"center", [&](const std::string& v) { c.center = to_vec3(v); }},
        {"size", [&](const std::string& v) { c.size = to_vec3(v); }},
        {"segments", [&](const std::string& v) { c.segments = static_cast<int>(to_long(v)); }},
        {"stl_path", [&](const std::string& v) { c.stl_path = v; }},
        {"stl_fit", [&](const std::string& v) { c.stl_fit = to_double(v); }},
        {"D_s", [&](const std::string& v) { d_s = to_double(v); }},
        {"d_spec", [&](const std::string& v) { c.voxel.d_spec = to_double(v); }},
        {"bin_density", [&](const std::string& v) { c.voxel.bins.bin_density = static_cast<int>(to_long(v)); }},
        {"n_spec", [&](const std::string& v) { c.voxel.bins.n_spec = static_cast<int>(to_long(v)); }},
        {"face_filter", [&](const std::string& v) { c.voxel.bins.filter = to_bool(v); }},
        {"eps_slab", [&](const std::string& v) { c.voxel.bins.eps_slab = to_double(v); }},
        {"capacity_multiplier", [&](const std::string& v) { c.voxel.capacity_multiplier = static_cast<int>(to_long(v)); }},
        {"refine_mesh", [&](const std::string& v) { c.voxel.refine_mesh = to_bool(v); }},
        {"Re", [&](const std::string& v) { c.flow.re = to_double(v); }},
        {"u_in", [&](const std::string& v) { c.flow.u_in = to_double(v); }},
        {"u_lattice", [&](const std::string& v) { c.flow.u_lattice = to_double(v); }},
        {"nu_lattice", [&](const std::string& v) { c.flow.nu_lattice = to_double(v); }},
        {"rho_phys", [&](const std::string& v) { c.flow.rho_phys = to_double(v); }},
        {"bc", [&](const std::string& v) { c.flow.bc = to_enum<WallScheme>(v, {{"sbb", WallScheme::SBB}, {"ibb", WallScheme::IBB}}); }},
        {"interp", [&](const std::string& v) {
             c.flow.interp = to_enum<InterpOrder>(v, {{"linear", InterpOrder::Linear}, {"cubic", InterpOrder::Cubic}});
         }},
        {"collision", [&](const std::string& v) {
             c.flow.collision = to_enum<Collision>(v, {{"bgk", Collision::BGK}, {"regularized", Collision::Regularized}});
         }},
        {"iters_total", [&](const std::string& v) { c.flow.iters_total = to_long(v); }},
        {"sample_start", [&](const std::string& v) { c.flow.sample_start = to_long(v); }},
        {"sample_stride", [&](const std::string& v) { c.flow.sample_stride = to_long(v); }},
        {"body_accel", [&](const std::string& v) { c.flow.body_accel = to_vec3(v); }},
        {kFaceKeys[0], [&](const std::string& v) { c.flow.faces[0] = to_enum(v, kFaceNames); }},
        {kFaceKeys[1], [&](const std::string& v) { c.flow.faces[1] = to_enum(v, kFaceNames); }},
        {kFaceKeys[2], [&](const std::string& v) { c.flow.faces[2] = to_enum(v, kFaceNames); }},
        {kFaceKeys[3], [&](const std::string& v) { c.flow.faces[3] = to_enum(v, kFaceNames); }},
        {kFaceKeys[4], [&](const std::string& v) { c.flow.faces[4] = to_enum(v, kFaceNames); }},
        {kFaceKeys[5], [&](const std::string& v) { c.flow.faces[5] = to_enum(v, kFaceNames); }},
        {"out_dir", [&](const std::string& v) { c.out_dir = v; }},
        {"snapshot_stride", [&](const std::string& v) { c.snapshot_stride = to_long(v); }},
        {"precision", [&](const std::string& v) {
             c.precision = to_enum<Precision>(v, {{"single", Precision::Single}, {"double", Precision::Double}});
         }},
        {"repeat", [&](const std::string& v) { c.repeat = static_cast<int>(to_long(v)); }},
    };

    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string s = trim(std::string_view(raw).substr(0, hash));
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key=value", line));
        const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        const auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError(fmt::format("line {}: unknown key '{}'", line, key));
        if (seen.count(key)) throw ConfigError(fmt::format("line {}: key '{}' repeats line {}", line, key, seen[key]));
        seen[key] = line;
        try {
            it->second(value);
        } catch (const Bad& b) {
            throw ConfigError(fmt::format("line {}: key '{}': {} (got '{}')", line, key, b.why, value));
        }
    }

    for (const char* k : {"dim", "N_x", "geometry"})
        if (!seen.count(k)) throw ConfigError(fmt::format("missing mandatory key '{}'", k));

    auto fail = [&](const std::string& key, const std::string& why) {
        const auto it = seen.find(key);
        const std::string where = it == seen.end() ? "default" : fmt::format("line {}", it->second);
        throw ConfigError(fmt::format("{}: key '{}': {}", where, key, why));
    };
    if (c.dim != 2 && c.dim != 3) fail("dim", "must be 2 or 3");
    if (c.nx < 4 || c.nx % 4 != 0 || !power_of_two(c.nx / 4)) fail("N_x", "must be a power-of-two multiple of 4");
    if (!(c.length > 0)) fail("length", "must be positive");
    if (c.voxel.l_max < 1) fail("L_max", "must be at least 1");
    if (c.voxel.capacity_multiplier < 1) fail("capacity_multiplier", "must be at least 1");
    if (c.voxel.bins.n_spec < 1) fail("n_spec", "must be at least 1");
    if (c.voxel.bins.bin_density < 0) fail("bin_density", "must not be negative");
    if (c.voxel.d_spec < 0) fail("d_spec", "must not be negative");
    if (!(c.flow.re > 0)) fail("Re", "must be positive");
    if (c.flow.u_in < 0) fail("u_in", "must not be negative");
    if (!(c.flow.u_lattice > 0) || c.flow.u_lattice >= std::sqrt(1.0 / 3.0)) fail("u_lattice", "must lie in (0, 1/sqrt(3))");
    if (c.geometry == GeometryKind::Stl && c.stl_path.empty()) fail("stl_path", "required for geometry=stl");
    if ((c.geometry == GeometryKind::Circle || c.geometry == GeometryKind::Square) && c.dim != 2)
        fail("geometry", "circle and square are 2D shapes");
    if ((c.geometry == GeometryKind::Sphere || c.geometry == GeometryKind::Box) && c.dim != 3)
        fail("geometry", "sphere and box are 3D shapes");

    c.flow.d_s = d_s > 0 ? d_s : c.length / 64.0;
    if (d_s <= 0 && seen.count("D_s")) fail("D_s", "must be positive");
    if (!seen.count("iters_total")) c.flow.iters_total = (c.dim == 2 ? 200L : 100L) * c.nx;
    if (!seen.count("sample_start")) c.flow.sample_start = (c.dim == 2 ? 175L : 75L) * c.nx;
    if (c.flow.iters_total < 1) fail("iters_total", "must be positive");
    if (c.flow.sample_start < 0 || c.flow.sample_start >= c.flow.iters_total)
        fail("sample_start", "must lie in [0, iters_total)");
    if (c.flow.sample_stride < 1) fail("sample_stride", "must be positive");
    if (c.snapshot_stride < 0) fail("snapshot_stride", "must not be negative");
    if (c.repeat < 1) fail("repeat", "must be at least 1");
    for (int d = 0; d < 3; ++d) {
        const bool a = c.flow.faces[2 * d] == FaceBC::Periodic, b = c.flow.faces[2 * d + 1] == FaceBC::Periodic;
        if (a != b) fail(kFaceKeys[2 * d], "periodic faces come in pairs");
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open config '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", path, e.what()));
    }
}

TriangleMesh build_geometry(const RunConfig& cfg) {
    const double d = cfg.flow.d_s;
    const double dx_fine = cfg.length / (cfg.nx * std::ldexp(1.0, cfg.voxel.l_max - 1));
    PrimitiveSpec p;
    p.center = cfg.center;
    if (cfg.dim == 2) p.center.z = 0.0;
    switch (cfg.geometry) {
    case GeometryKind::None: {
        TriangleMesh empty;
        empty.dim = cfg.dim;
        return empty;
    }
    case GeometryKind::Circle:
        p.kind = PrimitiveSpec::Kind::Circle;
        p.size = {d, d, 0};
        // about two segments per finest cell along the perimeter
        p.count = cfg.segments > 0 ? cfg.segments : std::max(32, static_cast<int>(std::ceil(2 * M_PI * d / dx_fine)));
        return make_primitive(p);
    case GeometryKind::Square:
        p.kind = PrimitiveSpec::Kind::Square;
        p.size = {cfg.size.x > 0 ? cfg.size.x : d, cfg.size.y > 0 ? cfg.size.y : d, 0};
        return make_primitive(p);
    case GeometryKind::Sphere:
        p.kind = PrimitiveSpec::Kind::Sphere;
        p.size = {d, d, d};
        p.count = cfg.segments > 0 ? cfg.segments
                                   : std::clamp(static_cast<int>(std::ceil(std::log2(0.6 * d / dx_fine))), 2, 6);
        return make_primitive(p);
    case GeometryKind::Box:
        p.kind = PrimitiveSpec::Kind::Box;
        p.size = {cfg.size.x > 0 ? cfg.size.x : d, cfg.size.y > 0 ? cfg.size.y : d, cfg.size.z > 0 ? cfg.size.z : d};
        return make_primitive(p);
    case GeometryKind::Stl: {
        TriangleMesh m = load_stl(cfg.stl_path, cfg.length);
        if (cfg.stl_fit > 0) {
            const Aabb box = mesh_aabb(m);
            const Vec3 ext = box.hi - box.lo;
            const double s = cfg.stl_fit / std::max({ext.x, ext.y, ext.z});
            const Vec3 mid = (box.lo + box.hi) * 0.5;
            for (Vec3& v : m.vertices) v = cfg.center + (v - mid) * s;
            m.sync_coords();
        }
        return m;
    }
    }
    return {};
}

ForestGrid make_grid(const RunConfig& cfg) {
    std::array<bool, 3> periodic{};
    for (int d = 0; d < cfg.dim; ++d) periodic[d] = cfg.flow.faces[2 * d] == FaceBC::Periodic;
    return init_forest({cfg.dim, cfg.length, cfg.nx}, cfg.voxel.capacity_multiplier, periodic);
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(fmt::format("cannot write '{}'", path));
    return os;
}

void close_out(std::ofstream& os, const std::string& path) {
    os.close();
    if (!os) throw IoError(fmt::format("write failed for '{}'", path));
}

// Points, cells and types for every cell of the level's active blocks, in id order.
void write_geometry(std::ostream& os, const ForestGrid& g, int level, const std::string& title) {
    const int dim = g.dom.dim;
    const int npc = dim == 2 ? 4 : 8;
    const auto& ids = g.id_sets[level];
    const long nc = static_cast<long>(ids.size()) * g.mb;
    const double h = 0.5 * g.dom.dx(level);
    fmt::print(os, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {} double\n", title,
               nc * npc);
    for (int b : ids)
        for (int t = 0; t < g.mb; ++t) {
            const Vec3 c = g.cell_center(b, t);
            for (int k = 0; k < npc; ++k)
                fmt::print(os, "{} {} {}\n", c.x + ((k & 1) ? h : -h), c.y + ((k & 2) ? h : -h),
                           dim == 3 ? c.z + ((k & 4) ? h : -h) : 0.0);
        }
    fmt::print(os, "CELLS {} {}\n", nc, nc * (npc + 1));
    for (long i = 0; i < nc; ++i) {
        fmt::print(os, "{}", npc);
        for (int k = 0; k < npc; ++k) fmt::print(os, " {}", i * npc + k);
        os << '\n';
    }
    fmt::print(os, "CELL_TYPES {}\n", nc);
    for (long i = 0; i < nc; ++i) os << (dim == 2 ? "8\n" : "11\n");
    fmt::print(os, "CELL_DATA {}\nSCALARS mask int 1\nLOOKUP_TABLE default\n", nc);
    for (int b : ids)
        for (int t = 0; t < g.mb; ++t) fmt::print(os, "{}\n", static_cast<int>(g.mask(b, t)));
}

} // namespace

void write_voxels_vtk(const ForestGrid& g, int level, const std::string& path) {
    std::ofstream os = open_out(path);
    write_geometry(os, g, level, fmt::format("voxels level {}", level));
    close_out(os, path);
}

template <class Real>
void write_fields_vtk(const Solver<Real>& s, int level, const std::string& path) {
    const ForestGrid& g = s.grid();
    const int dim = g.dom.dim;
    std::ofstream os = open_out(path);
    write_geometry(os, g, level, fmt::format("fields level {} iteration {}", level, s.iteration()));
    const auto& ids = g.id_sets[level];
    auto vel = [&](int b, int t) {
        return cell::type(g.mask(b, t)) == cell::Solid ? Vec3{} : s.velocity(b, t);
    };
    os << "SCALARS rho double 1\nLOOKUP_TABLE default\n";
    for (int b : ids)
        for (int t = 0; t < g.mb; ++t) fmt::print(os, "{}\n", s.rho(b, t));
    os << "VECTORS velocity double\n";
    for (int b : ids)
        for (int t = 0; t < g.mb; ++t) {
            const Vec3 u = vel(b, t);
            fmt::print(os, "{} {} {}\n", u.x, u.y, u.z);
        }
    // central differences through neighbor_cell; a missing or solid side falls back to the cell itself
    os << (dim == 2 ? "SCALARS vorticity double 1\nLOOKUP_TABLE default\n" : "VECTORS vorticity double\n");
    for (int b : ids)
        for (int t = 0; t < g.mb; ++t) {
            const Vec3 x0 = g.cell_center(b, t);
            Vec3 grad[3]; // grad[d] = du/dx_d
            for (int d = 0; d < dim; ++d) {
                Vec3 side[2];
                double pos[2];
                for (int s2 = 0; s2 < 2; ++s2) {
                    Vec3i c{0, 0, 0};
                    c[d] = s2 == 0 ? -1 : 1;
                    const CellRef r = neighbor_cell(g, b, t, c);
                    if (r.valid() && cell::type(g.mask(r.block, r.t)) != cell::Solid) {
                        side[s2] = vel(r.block, r.t);
                        pos[s2] = g.cell_center(r.block, r.t)[d];
                    } else {
                        side[s2] = vel(b, t);
                        pos[s2] = x0[d];
                    }
                }
                grad[d] = pos[1] > pos[0] ? (side[1] - side[0]) / (pos[1] - pos[0]) : Vec3{};
            }
            const Vec3 w{grad[1].z - grad[2].y, grad[2].x - grad[0].z, grad[0].y - grad[1].x};
            if (dim == 2) fmt::print(os, "{}\n", w.z);
            else fmt::print(os, "{} {} {}\n", w.x, w.y, w.z);
        }
    close_out(os, path);
}

template void write_fields_vtk(const Solver<float>&, int, const std::string&);
template void write_fields_vtk(const Solver<double>&, int, const std::string&);

void write_forces_csv(const std::vector<ForceSample>& series, const std::string& path) {
    std::ofstream os = open_out(path);
    os << "iter,time,Fx,Fh\n";
    for (const auto& s : series) fmt::print(os, "{},{},{},{}\n", s.iter, s.time, s.fx, s.fh);
    close_out(os, path);
}

TimingReport summarize_timings(const std::vector<EmbedTimes>& runs) {
    TimingReport r;
    r.repetitions = static_cast<int>(runs.size());
    r.stages = {{"refinement/balancing", {}}, {"spatial binning", {}}, {"voxelization", {}}};
    for (const auto& t : runs) {
        r.stages[0].samples.push_back(t.refine);
        r.stages[1].samples.push_back(t.binning);
        r.stages[2].samples.push_back(t.voxelize);
    }
    for (auto& st : r.stages) {
        const double n = static_cast<double>(st.samples.size());
        if (n == 0) continue;
        for (double v : st.samples) st.mean += v;
        st.mean /= n;
        if (n < 2) continue;
        double var = 0.0;
        for (double v : st.samples) var += (v - st.mean) * (v - st.mean);
        var /= n - 1;
        const boost::math::students_t dist(n - 1);
        st.halfwidth = boost::math::quantile(dist, 0.975) * std::sqrt(var / n);
    }
    return r;
}

void write_timing_report(const TimingReport& r, std::ostream& os) {
    fmt::print(os, "repetitions {}\n", r.repetitions);
    for (const auto& st : r.stages) fmt::print(os, "{:<22} {:.6e} s +- {:.3e} s\n", st.name, st.mean, st.halfwidth);
}

LinkStats link_stats(const LinkTable& t) {
    LinkStats s;
    s.tables = t.num_blocks;
    bool first = true;
    for (double q : t.lengths) {
        if (q < 0) continue;
        ++s.links;
        s.q_min = first ? q : std::min(s.q_min, q);
        s.q_max = first ? q : std::max(s.q_max, q);
        first = false;
    }
    return s;
}

namespace {

struct CliOptions {
    std::string config, out;
    std::string precision;
    int threads = 0;
    int repeat = 0;
};

RunConfig resolve(const CliOptions& o) {
    RunConfig c = load_config(o.config);
    if (!o.out.empty()) c.out_dir = o.out;
    if (!o.precision.empty()) c.precision = o.precision == "single" ? Precision::Single : Precision::Double;
    if (o.repeat > 0) c.repeat = o.repeat;
    std::error_code ec;
    std::filesystem::create_directories(c.out_dir, ec);
    if (ec) throw IoError(fmt::format("cannot create '{}': {}", c.out_dir, ec.message()));
    return c;
}

std::string out_path(const RunConfig& c, const std::string& name) {
    return (std::filesystem::path(c.out_dir) / name).string();
}

EmbedResult embed(ForestGrid& g, const RunConfig& c) {
    const TriangleMesh mesh = build_geometry(c);
    if (mesh.faces.empty()) {
        if (c.voxel.l_max > 1) throw ConfigError("refinement levels need a geometry");
        EmbedResult r;
        r.links.q = c.dim == 2 ? 9 : 27;
        r.links.mb = g.mb;
        r.links.contraction_map.assign(g.capacity, -1);
        return r;
    }
    return embed_geometry(g, mesh, c.voxel);
}

void report_links(const ForestGrid& g, const LinkTable& links, std::ostream& out) {
    const LinkStats s = link_stats(links);
    fmt::print(out, "levels {} blocks {} boundary tables {} links {} q_min {} q_max {}\n", g.num_levels(),
               g.num_active(), s.tables, s.links, s.q_min, s.q_max);
}

int cmd_voxelize(const RunConfig& c, std::ostream& out) {
    ForestGrid g = make_grid(c);
    const EmbedResult r = embed(g, c);
    for (int L = 0; L < g.num_levels(); ++L) write_voxels_vtk(g, L, out_path(c, fmt::format("voxels_L{}.vtk", L)));
    report_links(g, r.links, out);
    return 0;
}

template <class Real>
int simulate(const RunConfig& c, std::ostream& out) {
    ForestGrid g = make_grid(c);
    const EmbedResult r = embed(g, c);
    for (int L = 0; L < g.num_levels(); ++L) write_voxels_vtk(g, L, out_path(c, fmt::format("voxels_L{}.vtk", L)));
    report_links(g, r.links, out);
    FlowConfig flow = c.flow;
    Solver<Real> s(g, r.links, flow);
    s.initialize(1.0, {c.flow.u_in > 0 ? c.flow.u_lattice : 0.0, 0, 0});
    const auto series = s.run([&](const Solver<Real>& sv) {
        if (c.snapshot_stride > 0 && sv.iteration() % c.snapshot_stride == 0)
            for (int L = 0; L < g.num_levels(); ++L)
                write_fields_vtk(sv, L, out_path(c, fmt::format("fields_L{}_{:08d}.vtk", L, sv.iteration())));
    });
    for (int L = 0; L < g.num_levels(); ++L) write_fields_vtk(s, L, out_path(c, fmt::format("fields_L{}_final.vtk", L)));
    write_forces_csv(series, out_path(c, "forces.csv"));
    const Metrics m = compute_metrics(series, flow, c.dim);
    const std::string line =
        fmt::format("C_D {:.6f} C_L_amplitude {:.6f} C_L_rms {:.6f} St {}\n", m.cd_mean, m.cl_amplitude, m.cl_rms,
                    m.strouhal ? fmt::format("{:.6f}", *m.strouhal) : std::string("absent"));
    out << line;
    std::ofstream ms = open_out(out_path(c, "metrics.txt"));
    ms << line;
    close_out(ms, out_path(c, "metrics.txt"));
    return 0;
}

int cmd_bench(const RunConfig& c, std::ostream& out) {
    std::vector<EmbedTimes> runs;
    for (int i = 0; i < c.repeat; ++i) {
        ForestGrid g = make_grid(c);
        runs.push_back(embed(g, c).times);
    }
    const TimingReport r = summarize_timings(runs);
    write_timing_report(r, out);
    std::ofstream os = open_out(out_path(c, "timing.txt"));
    write_timing_report(r, os);
    close_out(os, out_path(c, "timing.txt"));
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Forest-of-octrees geometry embedding and lattice Boltzmann runs", "fvx"};
    app.require_subcommand(1, 1);
    CliOptions o;
    auto common = [&](CLI::App* s) {
        s->add_option("--config", o.config, "key=value run description")->required();
        s->add_option("--out", o.out, "output directory (overrides out_dir)");
        s->add_option("--threads", o.threads, "worker threads, 0 for all")->check(CLI::NonNegativeNumber);
        s->add_option("--precision", o.precision, "single or double")->check(CLI::IsMember({"single", "double"}));
    };
    CLI::App* vox = app.add_subcommand("voxelize", "embed the geometry and write per-level voxel files");
    CLI::App* sim = app.add_subcommand("simulate", "embed, run the flow solver, write forces, metrics and fields");
    CLI::App* bench = app.add_subcommand("bench", "repeat the embedding and report stage timings");
    common(vox);
    common(sim);
    common(bench);
    bench->add_option("--repeat", o.repeat, "repetitions")->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n" << app.help();
        return 2;
    }
    try {
        ThreadScope threads(o.threads);
        const RunConfig c = resolve(o);
        if (vox->parsed()) return cmd_voxelize(c, out);
        if (bench->parsed()) return cmd_bench(c, out);
        return c.precision == Precision::Single ? simulate<float>(c, out) : simulate<double>(c, out);
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << " at iteration " << e.iteration << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return 1;
}

} // namespace fvx
