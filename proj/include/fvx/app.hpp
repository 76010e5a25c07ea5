#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fvx/lbm.hpp"
#include "fvx/voxelizer.hpp"

namespace fvx {

enum class Precision { Single, Double };
enum class GeometryKind { None, Circle, Square, Sphere, Box, Stl };

// Flat key=value run description. Keys and defaults are listed in the README.
struct RunConfig {
    int dim = 2;
    int nx = 0;
    double length = 1.0;

    GeometryKind geometry = GeometryKind::None;
    Vec3 center{0.5, 0.5, 0.5};
    Vec3 size{0, 0, 0};       // box edges; zero entries fall back to d_s
    int segments = 0;         // circle segments / sphere subdivisions, 0 picks from the finest spacing
    std::string stl_path;
    double stl_fit = 0.0;     // longest bounding-box edge after placement, 0 keeps the file scale

    VoxelConfig voxel;
    FlowConfig flow;

    std::string out_dir = "out";
    long snapshot_stride = 0; // 0 writes only the final fields
    Precision precision = Precision::Double;
    int repeat = 1;
};

// Throws ConfigError naming the key and line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// The embedded surface for a config, or an empty mesh for geometry=none.
TriangleMesh build_geometry(const RunConfig& cfg);
ForestGrid make_grid(const RunConfig& cfg);

// Legacy ASCII VTK unstructured grid of all active blocks of one level.
void write_voxels_vtk(const ForestGrid& g, int level, const std::string& path);
template <class Real>
void write_fields_vtk(const Solver<Real>& s, int level, const std::string& path);
void write_forces_csv(const std::vector<ForceSample>& series, const std::string& path);

struct StageTiming {
    std::string name;
    std::vector<double> samples; // seconds
    double mean = 0.0;
    double halfwidth = 0.0;      // 95% Student-t
};

struct TimingReport {
    std::vector<StageTiming> stages;
    int repetitions = 0;
};

TimingReport summarize_timings(const std::vector<EmbedTimes>& runs);
void write_timing_report(const TimingReport& r, std::ostream& os);

struct LinkStats {
    long tables = 0;
    long links = 0;
    double q_min = 0.0, q_max = 0.0;
};
LinkStats link_stats(const LinkTable& t);

// Subcommands voxelize, simulate, bench. Returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace fvx
