// perfhom: command-line driver.
//
//   perfhom cell     --config run.ini --out dir
//   perfhom micro    --config run.ini --out dir
//   perfhom macro    --config run.ini --out dir
//   perfhom converge --config run.ini --out dir
//   perfhom unfold   --config run.ini --out dir [--faces faces_final.csv]
//
// PERFHOM_NUM_THREADS is recorded in the manifest; runs are single-threaded.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "perfhom/perfhom.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace perfhom;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Context {
    std::string subcommand;
    std::string config_path;
    fs::path out = "out";
    fs::path faces;
    bool quiet = false;
    int threads = 1;
    RunConfig cfg;
    json manifest;
    std::vector<std::string> outputs;
    std::vector<std::string> warnings;

    fs::path file(const std::string& name)
    {
        outputs.push_back(name);
        return out / name;
    }
    void log(const std::string& line) const
    {
        if (!quiet)
            std::cout << line << "\n";
    }
};

int thread_count()
{
    const char* env = std::getenv("PERFHOM_NUM_THREADS");
    if (!env || !*env)
        return 1;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1)
        fail(ErrorKind::config, std::string("PERFHOM_NUM_THREADS must be a positive integer (got '") + env + "')");
    return static_cast<int>(n);
}

std::string utc_now()
{
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

std::string snapshot_tag(std::size_t s)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", s);
    return buf;
}

json tensor_json(const Tensor& t) { return json::array({{t[0][0], t[0][1]}, {t[1][0], t[1][1]}}); }

EffectiveTensors tensors_for(Context& ctx)
{
    if (!ctx.cfg.tensors_path.empty()) {
        ctx.log("reading effective tensors from " + ctx.cfg.tensors_path);
        EffectiveTensors t = read_effective_tensors(ctx.cfg.tensors_path);
        const UnitCell cell = ctx.cfg.unit_cell();
        if (std::abs(t.porosity - cell.porosity()) > 1e-12 ||
            std::abs(t.surface_density - cell.surface_measure()) > 1e-12)
            fail(ErrorKind::mismatch, "effective tensors were computed for a different unit cell");
        return t;
    }
    ctx.log("solving cell problems (n = " + std::to_string(ctx.cfg.resolution) + ")");
    return compute_effective_tensors(ctx.cfg.unit_cell(), ctx.cfg.D, ctx.cfg.cell_options()).tensors;
}

void run_cell(Context& ctx)
{
    const UnitCell cell = ctx.cfg.unit_cell();
    const CellProblemSet set = compute_effective_tensors(cell, ctx.cfg.D, ctx.cfg.cell_options());
    const EffectiveTensors& t = set.tensors;
    write_effective_tensors(ctx.file("effective_tensors.csv"), t);
    if (ctx.cfg.dump_fields) {
        const int n = cell.resolution();
        for (int i = 0; i < kDim; ++i) {
            std::vector<double> xi = set.diffusion[i].values;
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    if (cell.is_solid(k, j))
                        xi[j * n + k] = std::numeric_limits<double>::quiet_NaN();
            write_grid(ctx.file("xi_" + std::to_string(i + 1) + ".grid"), n, n, 1.0 / n, 1.0 / n, xi);
        }
    }
    ctx.manifest["diagnostics"] = {{"S", tensor_json(t.S)},       {"K", tensor_json(t.K)},
                                   {"alpha_S", t.alpha_S},        {"S_spd", t.S_spd},
                                   {"K_spd", t.K_spd},            {"porosity", t.porosity},
                                   {"surface_density", t.surface_density}};
    ctx.log("S = [" + format_number(t.S[0][0]) + ", " + format_number(t.S[0][1]) + "; " + format_number(t.S[1][0]) +
            ", " + format_number(t.S[1][1]) + "]");
    ctx.log("K = [" + format_number(t.K[0][0]) + ", " + format_number(t.K[0][1]) + "; " + format_number(t.K[1][0]) +
            ", " + format_number(t.K[1][1]) + "]");
}

void run_micro_cmd(Context& ctx)
{
    const UnitCell cell = ctx.cfg.unit_cell();
    const PerforatedGrid grid = PerforatedGrid::tile(cell, ctx.cfg.eps, ctx.cfg.dirichlet);
    const MicroConfig mc = ctx.cfg.micro();
    FaceVelocity q = FaceVelocity::zero(grid.cells_per_side());
    if (mc.velocity_mode == VelocityMode::reconstructed) {
        ctx.log("solving Stokes cell problems for the velocity field");
        std::array<StokesCellSolution, kDim> stokes;
        for (int j = 0; j < kDim; ++j)
            stokes[j] = solve_stokes_cell(cell, j, ctx.cfg.cell_options());
        q = reconstruct_velocity(grid, stokes, mc.pressure_gradient);
    }
    const MicroSimulation sim(grid, mc, std::move(q));
    ctx.log("micro run: " + std::to_string(grid.cells_per_side()) + "^2 cells, " + std::to_string(sim.steps()) +
            " steps of dt = " + format_number(sim.dt()));
    const MicroTrajectory traj = sim.run();
    for (const auto& w : traj.warnings) {
        ctx.warnings.push_back(w);
        std::cerr << "warning: " << w << "\n";
    }
    write_series(ctx.file("micro_series.csv"), micro_series(traj, grid));
    const MicroState& last = traj.snapshots.back();
    write_faces(ctx.file("faces_final.csv"), last, grid);
    if (ctx.cfg.dump_fields) {
        const int n = grid.cells_per_side();
        std::vector<double> fluid(grid.cell_count());
        for (int c = 0; c < grid.cell_count(); ++c)
            fluid[c] = grid.is_fluid(c) ? 1.0 : 0.0;
        write_grid(ctx.file("micro_fluid.grid"), n, n, grid.h(), grid.h(), fluid);
        for (std::size_t s = 0; s < traj.snapshots.size(); ++s)
            write_grid(ctx.file("micro_u_" + snapshot_tag(s) + ".grid"), n, n, grid.h(), grid.h(),
                       scatter_fluid(traj.snapshots[s].u, grid));
        write_grid(ctx.file("micro_u_extended_final.grid"), n, n, grid.h(), grid.h(), extend(last.u, grid).values);
    }
    const MassRecord& m0 = traj.mass.front();
    const MassRecord& m1 = traj.mass.back();
    ctx.manifest["diagnostics"] = {{"steps", sim.steps()},
                                   {"dt", sim.dt()},
                                   {"fluid_cells", grid.fluid_count()},
                                   {"grain_faces", grid.boundary_faces().size()},
                                   {"mass_initial", m0.total()},
                                   {"mass_final", m1.total()},
                                   {"bound_u", traj.bound_u},
                                   {"bound_v", traj.bound_v}};
}

void run_macro_cmd(Context& ctx)
{
    const EffectiveTensors t = tensors_for(ctx);
    MacroConfig mc = ctx.cfg.macro(t);
    const MacroSimulation sim(mc);
    ctx.log("macro run: " + std::to_string(mc.grid.size) + "^2 cells, " + std::to_string(sim.steps()) + " steps");
    const MacroTrajectory traj = sim.run();
    write_series(ctx.file("macro_series.csv"), macro_series(traj, mc));
    const int n = mc.grid.size;
    if (ctx.cfg.dump_fields)
        for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
            write_grid(ctx.file("macro_u_" + snapshot_tag(s) + ".grid"), n, n, mc.grid.h(), mc.grid.h(),
                       traj.snapshots[s].u);
            write_grid(ctx.file("macro_v_" + snapshot_tag(s) + ".grid"), n, n, mc.grid.h(), mc.grid.h(),
                       traj.snapshots[s].v);
        }
    json diag = {{"steps", sim.steps()},
                 {"dt", sim.dt()},
                 {"storage", mc.storage()},
                 {"mass_initial", traj.mass.front().total()},
                 {"mass_final", traj.mass.back().total()}};
    if (mc.with_flow) {
        const DarcySolution d = darcy_solve(mc.K, mc.grid, mc.pressure);
        if (ctx.cfg.dump_fields)
            write_grid(ctx.file("darcy_pressure.grid"), n, n, mc.grid.h(), mc.grid.h(), d.pressure);
        diag["darcy_max_divergence"] = d.max_divergence;
        diag["darcy_max_velocity"] = d.q.max_abs();
    }
    if (ctx.cfg.perturbation != 0.0) {
        MacroConfig pc = mc;
        const InitialData& u = mc.u_init;
        pc.u_init = InitialData::sine(u.base, (u.kind == InitialData::Kind::sine ? u.amplitude : 0.0) +
                                                  ctx.cfg.perturbation);
        const MacroTrajectory other = MacroSimulation(pc).run();
        const StabilityGap gap = stability_gap(traj, other, std::abs(ctx.cfg.perturbation), mc.grid);
        std::ofstream out = open_output(ctx.file("stability_gap.csv"));
        out << "t,gap_u_L2,gap_v_L2\n";
        for (std::size_t i = 0; i < gap.t.size(); ++i)
            out << format_number(gap.t[i]) << "," << format_number(gap.gap_u[i]) << ","
                << format_number(gap.gap_v[i]) << "\n";
        diag["stability_lambda"] = gap.lambda;
        ctx.log("stability envelope rate lambda = " + format_number(gap.lambda));
    }
    ctx.manifest["diagnostics"] = diag;
}

void run_converge(Context& ctx)
{
    const SweepConfig sc = ctx.cfg.sweep();
    ctx.log("sweep over " + std::to_string(sc.eps_list.size()) + " values of eps");
    const ConvergenceReport rep = sweep(sc);
    write_effective_tensors(ctx.file("effective_tensors.csv"), rep.tensors);
    write_convergence_report(ctx.file("convergence_report.csv"), rep);
    json rows = json::array();
    for (const auto& r : rep.rows) {
        for (const auto& w : r.warnings)
            ctx.warnings.push_back(w);
        rows.push_back({{"eps", r.errors.eps},
                        {"err_u", r.errors.err_u},
                        {"err_v", r.errors.err_v},
                        {"max_difference_quotient", r.max_difference_quotient}});
        ctx.log("eps = " + format_number(r.errors.eps) + "  err_u = " + format_number(r.errors.err_u) +
                "  err_v = " + format_number(r.errors.err_v));
    }
    ctx.manifest["diagnostics"] = {{"rows", rows}};
}

void run_unfold(Context& ctx)
{
    const UnitCell cell = ctx.cfg.unit_cell();
    const PerforatedGrid grid = PerforatedGrid::tile(cell, ctx.cfg.eps, ctx.cfg.dirichlet);
    const fs::path faces = ctx.faces.empty() ? ctx.out / "faces_final.csv" : ctx.faces;
    const FaceRecord rec = read_faces(faces, grid);
    const UnfoldedTrace tr = unfold(rec.v, grid);
    write_unfolded(ctx.file("unfolded_trace.csv"), tr, cell);
    {
        std::ofstream out = open_output(ctx.file("unfold_isometry.csv"));
        out << "eps,unfolded_norm2,scaled_surface_norm2\n";
        out << format_number(tr.eps) << "," << format_number(tr.lhs) << "," << format_number(tr.rhs) << "\n";
    }
    const auto rows = oscillation_check([](Vec2 x, Vec2) { return x[0]; }, cell, ctx.cfg.eps_list);
    write_oscillation_table(ctx.file("oscillation_x1.csv"), rows);
    ctx.manifest["diagnostics"] = {{"faces", rec.v.size()}, {"isometry_lhs", tr.lhs}, {"isometry_rhs", tr.rhs}};
    ctx.log("unfolding isometry: " + format_number(tr.lhs) + " = " + format_number(tr.rhs));
}

void write_error(const Context& ctx, const std::string& kind, const std::string& message)
{
    std::cerr << "error (" << kind << "): " << message << "\n";
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    std::ofstream out(ctx.out / "error.json");
    if (out)
        out << json{{"subcommand", ctx.subcommand}, {"kind", kind}, {"message", message}}.dump(2) << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Periodic homogenization of reactive transport in perforated domains"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1, 1);
    Context ctx;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"cell", "solve the unit-cell problems and write effective tensors"},
        {"micro", "run the pore-scale simulation"},
        {"macro", "run the upscaled Darcy-scale simulation"},
        {"converge", "eps-sweep comparing micro and macro solutions"},
        {"unfold", "unfold stored grain-boundary data and check the oscillation quadrature"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", ctx.config_path, "run configuration (INI sections)")->required();
        sub->add_option("--out", ctx.out, "output directory")->capture_default_str();
        sub->add_flag("--quiet", ctx.quiet, "suppress progress output");
        if (name == "unfold")
            sub->add_option("--faces", ctx.faces, "faces_final.csv to unfold (default: <out>/faces_final.csv)");
        sub->callback([&ctx, name = name] { ctx.subcommand = name; });
    }
    CLI11_PARSE(app, argc, argv);

    const auto start = std::chrono::steady_clock::now();
    try {
        ctx.threads = thread_count();
        ctx.cfg = parse_config(ctx.config_path);
        fs::create_directories(ctx.out);
        fs::remove(ctx.out / "error.json");
        {
            std::ofstream out = open_output(ctx.file("resolved_config.ini"));
            out << resolved_config_text(ctx.cfg);
        }
        if (ctx.subcommand == "cell")
            run_cell(ctx);
        else if (ctx.subcommand == "micro")
            run_micro_cmd(ctx);
        else if (ctx.subcommand == "macro")
            run_macro_cmd(ctx);
        else if (ctx.subcommand == "converge")
            run_converge(ctx);
        else
            run_unfold(ctx);
    } catch (const Error& e) {
        write_error(ctx, std::string(to_string(e.kind())), e.what());
        return 2;
    } catch (const std::exception& e) {
        write_error(ctx, "internal", e.what());
        return 3;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"program", "perfhom"},
                     {"version", kVersion},
                     {"subcommand", ctx.subcommand},
                     {"config", ctx.config_path},
                     {"resolved_config", "resolved_config.ini"},
                     {"threads", ctx.threads},
                     {"finished_utc", utc_now()},
                     {"wall_seconds", wall},
                     {"outputs", ctx.outputs},
                     {"warnings", ctx.warnings}};
    if (ctx.manifest.contains("diagnostics"))
        manifest["diagnostics"] = ctx.manifest["diagnostics"];
    std::ofstream(ctx.out / "manifest.json") << manifest.dump(2) << "\n";
    return 0;
}
