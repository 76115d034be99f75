#pragma once

// Output formats. Every CSV starts with a header row; column orders are fixed.
//
//   effective_tensors.csv   quantity,value
//   micro_series.csv        t,mass_u,mass_v,mass_total,boundary_outflow,min_u,max_u,min_v,max_v,dq_norm
//   macro_series.csv        same columns as micro_series.csv
//   faces_final.csv         face,k1,k2,ref,y1,y2,x1,x2,v,w
//   convergence_report.csv  eps,err_u_L2,err_v_unfolded_L2,err_r_L2,order_u,order_v
//   *.grid                  structured-grid text dump (see write_grid)

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "perfhom/cell_problems.hpp"
#include "perfhom/config.hpp"
#include "perfhom/error.hpp"
#include "perfhom/homogenize.hpp"
#include "perfhom/macro_sim.hpp"
#include "perfhom/micro_sim.hpp"

namespace perfhom {

inline std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

namespace detail {

inline double to_number(const std::string& s, const std::string& where)
{
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size())
        fail(ErrorKind::io, where + ": '" + s + "' is not a number");
    return x;
}

inline void expect_header(const std::vector<std::vector<std::string>>& rows, const std::vector<std::string>& header,
                          const std::string& where)
{
    if (rows.empty() || rows.front() != header)
        fail(ErrorKind::io, where + ": unexpected header");
}

} // namespace detail

// ---------------------------------------------------------------- tensors

inline void write_effective_tensors(const std::filesystem::path& path, const EffectiveTensors& t)
{
    std::ofstream out = open_output(path);
    auto row = [&](const char* name, double v) { out << name << "," << format_number(v) << "\n"; };
    out << "quantity,value\n";
    row("resolution", t.resolution);
    row("D", t.D);
    row("S11", t.S[0][0]);
    row("S12", t.S[0][1]);
    row("S21", t.S[1][0]);
    row("S22", t.S[1][1]);
    row("K11", t.K[0][0]);
    row("K12", t.K[0][1]);
    row("K21", t.K[1][0]);
    row("K22", t.K[1][1]);
    row("alpha_S", t.alpha_S);
    row("porosity", t.porosity);
    row("surface_density", t.surface_density);
    row("S_asymmetry", t.S_asymmetry);
    row("K_asymmetry", t.K_asymmetry);
    row("S_spd", t.S_spd ? 1.0 : 0.0);
    row("K_spd", t.K_spd ? 1.0 : 0.0);
    row("linear_tolerance", t.linear_tolerance);
    row("diffusion_residual_1", t.diffusion_residual[0]);
    row("diffusion_residual_2", t.diffusion_residual[1]);
    row("stokes_momentum_residual_1", t.stokes_momentum_residual[0]);
    row("stokes_momentum_residual_2", t.stokes_momentum_residual[1]);
    row("stokes_divergence_1", t.stokes_divergence[0]);
    row("stokes_divergence_2", t.stokes_divergence[1]);
}

inline EffectiveTensors read_effective_tensors(const std::filesystem::path& path)
{
    const auto rows = read_csv(path);
    const std::string where = path.string();
    detail::expect_header(rows, {"quantity", "value"}, where);
    std::map<std::string, double> v;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2)
            fail(ErrorKind::io, where + ": malformed row " + std::to_string(i + 1));
        v[rows[i][0]] = detail::to_number(rows[i][1], where);
    }
    auto get = [&](const char* name) {
        const auto it = v.find(name);
        if (it == v.end())
            fail(ErrorKind::io, where + ": missing quantity '" + name + "'");
        return it->second;
    };
    EffectiveTensors t;
    t.resolution = static_cast<int>(get("resolution"));
    t.D = get("D");
    t.S = {{{get("S11"), get("S12")}, {get("S21"), get("S22")}}};
    t.K = {{{get("K11"), get("K12")}, {get("K21"), get("K22")}}};
    t.alpha_S = get("alpha_S");
    t.porosity = get("porosity");
    t.surface_density = get("surface_density");
    t.S_asymmetry = get("S_asymmetry");
    t.K_asymmetry = get("K_asymmetry");
    t.S_spd = get("S_spd") != 0.0;
    t.K_spd = get("K_spd") != 0.0;
    t.linear_tolerance = get("linear_tolerance");
    return t;
}

// ---------------------------------------------------------------- grids

/// Header lines "nx", "ny", "dx", "dy", "origin" followed by ny rows of nx
/// values (row j = 0 first). Cells outside the fluid are written as nan.
inline void write_grid(const std::filesystem::path& path, int nx, int ny, double dx, double dy,
                       std::span<const double> values)
{
    if (static_cast<int>(values.size()) != nx * ny)
        fail(ErrorKind::mismatch, "grid dump size mismatch");
    std::ofstream out = open_output(path);
    out << "# perfhom grid\n";
    out << "nx " << nx << "\nny " << ny << "\n";
    out << "dx " << format_number(dx) << "\ndy " << format_number(dy) << "\n";
    out << "origin 0 0\n";
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i)
            out << (i ? " " : "") << format_number(values[static_cast<std::size_t>(j) * nx + i]);
        out << "\n";
    }
}

struct GridDump {
    int nx = 0;
    int ny = 0;
    double dx = 0.0;
    double dy = 0.0;
    std::vector<double> values;
};

inline GridDump read_grid(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "# perfhom grid")
        fail(ErrorKind::io, path.string() + ": not a grid dump");
    GridDump g;
    std::string key;
    double ox = 0.0, oy = 0.0;
    in >> key >> g.nx >> key >> g.ny >> key >> g.dx >> key >> g.dy >> key >> ox >> oy;
    if (!in || g.nx <= 0 || g.ny <= 0)
        fail(ErrorKind::io, path.string() + ": malformed grid header");
    g.values.reserve(static_cast<std::size_t>(g.nx) * g.ny);
    std::string tok;
    while (in >> tok)
        g.values.push_back(detail::to_number(tok, path.string()));
    if (static_cast<int>(g.values.size()) != g.nx * g.ny)
        fail(ErrorKind::io, path.string() + ": grid body has the wrong number of values");
    return g;
}

/// Fluid field scattered onto the full micro grid with nan in the grains.
inline std::vector<double> scatter_fluid(std::span<const double> u, const PerforatedGrid& grid)
{
    std::vector<double> out(grid.cell_count(), std::numeric_limits<double>::quiet_NaN());
    for (int f = 0; f < grid.fluid_count(); ++f)
        out[grid.fluid_cells()[f]] = u[f];
    return out;
}

// ---------------------------------------------------------------- series

struct SeriesRow {
    double t = 0.0;
    double mass_u = 0.0;
    double mass_v = 0.0;
    double outflow = 0.0;
    double min_u = 0.0, max_u = 0.0, min_v = 0.0, max_v = 0.0;
    double dq_norm = 0.0;
};

namespace detail {

template <class State>
std::vector<SeriesRow> series_rows(const Trajectory<State>& traj, std::span<const double> dq)
{
    std::vector<SeriesRow> rows;
    std::size_t m = 0;
    for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
        const State& st = traj.snapshots[s];
        while (m + 1 < traj.mass.size() && traj.mass[m].t < st.t - 1e-12)
            ++m;
        SeriesRow r;
        r.t = st.t;
        r.mass_u = traj.mass[m].mass_u;
        r.mass_v = traj.mass[m].mass_v;
        r.outflow = traj.mass[m].outflow;
        const auto [umin, umax] = std::minmax_element(st.u.begin(), st.u.end());
        r.min_u = st.u.empty() ? 0.0 : *umin;
        r.max_u = st.u.empty() ? 0.0 : *umax;
        const auto [vmin, vmax] = std::minmax_element(st.v.begin(), st.v.end());
        r.min_v = st.v.empty() ? 0.0 : *vmin;
        r.max_v = st.v.empty() ? 0.0 : *vmax;
        r.dq_norm = s < dq.size() ? dq[s] : 0.0;
        rows.push_back(r);
    }
    return rows;
}

inline double snapshot_spacing(const auto& snaps) { return snaps.size() > 1 ? snaps[1].t - snaps[0].t : 0.0; }

} // namespace detail

inline std::vector<SeriesRow> micro_series(const MicroTrajectory& traj, const PerforatedGrid& grid)
{
    std::vector<double> dq;
    const double lag = detail::snapshot_spacing(traj.snapshots);
    // The final snapshot may be off the cadence; quotients need uniform spacing.
    if (lag > 0.0) {
        MicroTrajectory uniform = traj;
        while (uniform.snapshots.size() > 2 &&
               std::abs((uniform.snapshots.back().t - uniform.snapshots[uniform.snapshots.size() - 2].t) - lag) >
                   1e-9 * std::max(1.0, lag))
            uniform.snapshots.pop_back();
        dq = difference_quotient_norm(uniform, lag, grid);
    }
    return detail::series_rows(traj, dq);
}

/// sum |u_a - u_b| h^2 + (|Gamma_G|/|Y|) sum |v_a - v_b| h^2
inline double macro_l1_distance(const MacroState& a, const MacroState& b, const MacroConfig& cfg)
{
    if (a.u.size() != b.u.size() || a.v.size() != b.v.size())
        fail(ErrorKind::mismatch, "states do not live on the same grid");
    double d = 0.0;
    for (std::size_t i = 0; i < a.u.size(); ++i)
        d += std::abs(a.u[i] - b.u[i]) + cfg.storage() * std::abs(a.v[i] - b.v[i]);
    return d * cfg.grid.h() * cfg.grid.h();
}

inline std::vector<SeriesRow> macro_series(const MacroTrajectory& traj, const MacroConfig& cfg)
{
    std::vector<double> dq;
    const double lag = detail::snapshot_spacing(traj.snapshots);
    if (lag > 0.0) {
        std::vector<MacroState> snaps = traj.snapshots;
        while (snaps.size() > 2 &&
               std::abs((snaps.back().t - snaps[snaps.size() - 2].t) - lag) > 1e-9 * std::max(1.0, lag))
            snaps.pop_back();
        dq = detail::difference_quotients(snaps, lag, [&cfg](const MacroState& a, const MacroState& b) {
            return macro_l1_distance(a, b, cfg);
        });
    }
    return detail::series_rows(traj, dq);
}

inline void write_series(const std::filesystem::path& path, std::span<const SeriesRow> rows)
{
    std::ofstream out = open_output(path);
    out << "t,mass_u,mass_v,mass_total,boundary_outflow,min_u,max_u,min_v,max_v,dq_norm\n";
    for (const auto& r : rows)
        out << format_number(r.t) << "," << format_number(r.mass_u) << "," << format_number(r.mass_v) << ","
            << format_number(r.mass_u + r.mass_v + r.outflow) << "," << format_number(r.outflow) << ","
            << format_number(r.min_u) << "," << format_number(r.max_u) << "," << format_number(r.min_v) << ","
            << format_number(r.max_v) << "," << format_number(r.dq_norm) << "\n";
}

// ---------------------------------------------------------------- faces

inline void write_faces(const std::filesystem::path& path, const MicroState& s, const PerforatedGrid& grid)
{
    std::ofstream out = open_output(path);
    out << "face,k1,k2,ref,y1,y2,x1,x2,v,w\n";
    const auto& faces = grid.boundary_faces();
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const auto& f = faces[i];
        out << i << "," << f.eps_cell[0] << "," << f.eps_cell[1] << "," << f.reference << "," << format_number(f.y[0])
            << "," << format_number(f.y[1]) << "," << format_number(f.center[0]) << ","
            << format_number(f.center[1]) << "," << format_number(s.v[i]) << "," << format_number(s.w[i]) << "\n";
    }
}

struct FaceRecord {
    double t = 0.0;
    std::vector<double> v;
    std::vector<double> w;
};

/// Reads faces_final.csv and checks it against the grid's face numbering.
inline FaceRecord read_faces(const std::filesystem::path& path, const PerforatedGrid& grid)
{
    const auto rows = read_csv(path);
    const std::string where = path.string();
    detail::expect_header(rows, {"face", "k1", "k2", "ref", "y1", "y2", "x1", "x2", "v", "w"}, where);
    const auto& faces = grid.boundary_faces();
    if (rows.size() - 1 != faces.size())
        fail(ErrorKind::mismatch, where + ": face count does not match the configured geometry");
    FaceRecord rec;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 10)
            fail(ErrorKind::io, where + ": malformed row " + std::to_string(i + 1));
        const auto& f = faces[i - 1];
        if (detail::to_number(r[1], where) != f.eps_cell[0] || detail::to_number(r[2], where) != f.eps_cell[1] ||
            detail::to_number(r[3], where) != f.reference)
            fail(ErrorKind::mismatch, where + ": face " + r[0] + " does not match the configured geometry");
        rec.v.push_back(detail::to_number(r[8], where));
        rec.w.push_back(detail::to_number(r[9], where));
    }
    return rec;
}

inline void write_unfolded(const std::filesystem::path& path, const UnfoldedTrace& tr, const UnitCell& cell)
{
    std::ofstream out = open_output(path);
    out << "k1,k2,ref,y1,y2,value\n";
    const auto& refs = cell.reference_faces();
    for (int k = 0; k < tr.cells_per_side * tr.cells_per_side; ++k)
        for (int r = 0; r < tr.reference_faces; ++r)
            out << k % tr.cells_per_side << "," << k / tr.cells_per_side << "," << r << ","
                << format_number(refs[r].y[0]) << "," << format_number(refs[r].y[1]) << ","
                << format_number(tr.at(k, r)) << "\n";
}

// ---------------------------------------------------------------- reports

inline void write_convergence_report(const std::filesystem::path& path, const ConvergenceReport& rep)
{
    std::ofstream out = open_output(path);
    out << "eps,err_u_L2,err_v_unfolded_L2,err_r_L2,order_u,order_v\n";
    for (const auto& r : rep.rows)
        out << format_number(r.errors.eps) << "," << format_number(r.errors.err_u) << ","
            << format_number(r.errors.err_v) << "," << format_number(r.errors.err_r) << ","
            << format_number(r.order_u) << "," << format_number(r.order_v) << "\n";
}

inline void write_oscillation_table(const std::filesystem::path& path, std::span<const OscillationRow> rows)
{
    std::ofstream out = open_output(path);
    out << "eps,oscillating,product,error\n";
    for (const auto& r : rows)
        out << format_number(r.eps) << "," << format_number(r.oscillating) << "," << format_number(r.product) << ","
            << format_number(r.error) << "\n";
}

} // namespace perfhom
