#pragma once

// Sectioned key = value run configuration.
//
//   [geometry]   dim, eps, n, hole_side, hole_center, dirichlet_edges
//   [kinetics]   u_star, u_solubility, exponent, k, resolution_mode, delta
//   [micro]      D, velocity, pressure_gradient_x, pressure_gradient_y, velocity_bound,
//                dt, T, output_every, u_init, u_base, u_amplitude, v_init, v_base, v_amplitude
//   [macro]      resolution, flow, pressure_left, pressure_right, tensors,
//                perturbation
//   [sweep]      eps_list, error_floor
//   [tolerances] linear, time_step, invariant_slack, spd, symmetry, divergence, augmentation
//   [output]     dump_fields
//
// Time stepping and initial data in [micro] are shared by the macro runs.

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "perfhom/cell_problems.hpp"
#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/homogenize.hpp"
#include "perfhom/kinetics.hpp"
#include "perfhom/macro_sim.hpp"
#include "perfhom/micro_sim.hpp"

namespace perfhom {

/// Shortest text that reads back to the same double.
inline std::string format_number(double x)
{
    if (std::isnan(x))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct KeySpec {
    const char* section;
    const char* key;
    const char* fallback;
};

inline const std::vector<KeySpec>& config_keys()
{
    static const std::vector<KeySpec> keys{
        {"geometry", "dim", "2"},
        {"geometry", "eps", "0.25"},
        {"geometry", "n", "8"},
        {"geometry", "hole_side", "0.5"},
        {"geometry", "hole_center", "0.5, 0.5"},
        {"geometry", "dirichlet_edges", "left"},
        {"kinetics", "u_star", "0"},
        {"kinetics", "u_solubility", "1"},
        {"kinetics", "exponent", "2"},
        {"kinetics", "k", "1"},
        {"kinetics", "resolution_mode", "exact"},
        {"kinetics", "delta", "0.01"},
        {"micro", "D", "1"},
        {"micro", "velocity", "zero"},
        {"micro", "pressure_gradient_x", "-1"},
        {"micro", "pressure_gradient_y", "0"},
        {"micro", "velocity_bound", "1"},
        {"micro", "dt", "0.001"},
        {"micro", "T", "0.1"},
        {"micro", "output_every", "10"},
        {"micro", "u_init", "constant"},
        {"micro", "u_base", "0"},
        {"micro", "u_amplitude", "0"},
        {"micro", "v_init", "constant"},
        {"micro", "v_base", "0.2"},
        {"micro", "v_amplitude", "0"},
        {"macro", "resolution", "64"},
        {"macro", "flow", "false"},
        {"macro", "pressure_left", "1"},
        {"macro", "pressure_right", "0"},
        {"macro", "tensors", ""},
        {"macro", "perturbation", "0"},
        {"sweep", "eps_list", "0.25, 0.125, 0.0625"},
        {"sweep", "error_floor", "1e-12"},
        {"tolerances", "linear", "1e-10"},
        {"tolerances", "time_step", "1e-12"},
        {"tolerances", "invariant_slack", "1e-08"},
        {"tolerances", "spd", "1e-08"},
        {"tolerances", "symmetry", "1e-08"},
        {"tolerances", "divergence", "1e-11"},
        {"tolerances", "augmentation", "50"},
        {"output", "dump_fields", "true"},
    };
    return keys;
}

struct RunConfig {
    // geometry
    double hole_side = 0.5;
    Vec2 hole_center{0.5, 0.5};
    int resolution = 8;
    double eps = 0.25;
    EdgeSet dirichlet = EdgeSet::left_only();
    // kinetics
    RateLaw law;
    DissolutionResolution dissolution;
    // micro
    double D = 1.0;
    VelocityMode velocity = VelocityMode::zero;
    Vec2 pressure_gradient{-1.0, 0.0};
    double velocity_bound = 1.0;
    double dt = 1e-3;
    double T = 0.1;
    int output_every = 10;
    InitialData u_init = InitialData::constant(0.0);
    InitialData v_init = InitialData::constant(0.2);
    // macro
    int macro_resolution = 64;
    bool flow = false;
    double pressure_left = 1.0;
    double pressure_right = 0.0;
    std::string tensors_path;
    double perturbation = 0.0;
    // sweep
    std::vector<double> eps_list{0.25, 0.125, 0.0625};
    double error_floor = 1e-12;
    // tolerances
    double linear_tolerance = 1e-10;
    double time_step_tolerance = 1e-12;
    double invariant_slack = 1e-8;
    double spd_tolerance = 1e-8;
    double symmetry_tolerance = 1e-8;
    double divergence_tolerance = 1e-11;
    double augmentation = 50.0;
    // output
    bool dump_fields = true;

    /// Resolved values in canonical text form, in documented key order.
    std::vector<std::array<std::string, 3>> resolved;

    UnitCell unit_cell() const
    {
        return hole_side == 0.0 ? UnitCell::unperforated(resolution)
                                : UnitCell::build(hole_side, hole_center, resolution);
    }

    CellSolveOptions cell_options() const
    {
        CellSolveOptions o;
        o.linear.relative_tolerance = linear_tolerance;
        o.augmentation = augmentation;
        o.divergence_tolerance = divergence_tolerance;
        o.symmetry_tolerance = symmetry_tolerance;
        o.spd_tolerance = spd_tolerance;
        return o;
    }

    MicroConfig micro() const
    {
        MicroConfig m;
        m.D = D;
        m.law = law;
        m.resolution = dissolution;
        m.velocity_mode = velocity;
        m.pressure_gradient = pressure_gradient;
        m.velocity_bound = velocity_bound;
        m.dt = dt;
        m.T = T;
        m.u_init = u_init;
        m.v_init = v_init;
        m.output_every = output_every;
        m.invariant_slack = invariant_slack;
        m.linear = {time_step_tolerance, 20000, false};
        return m;
    }

    MacroConfig macro(const EffectiveTensors& t) const
    {
        MacroConfig m;
        m.S = t.S;
        m.K = t.K;
        m.porosity = t.porosity;
        m.surface_density = t.surface_density;
        m.law = law;
        m.resolution = dissolution;
        m.grid.size = macro_resolution;
        m.grid.dirichlet = dirichlet;
        m.with_flow = flow;
        m.pressure.edges = EdgeSet{{true, true, false, false}};
        m.pressure.values = {pressure_left, pressure_right, 0.0, 0.0};
        m.dt = dt;
        m.T = T;
        m.u_init = u_init;
        m.v_init = v_init;
        m.output_every = output_every;
        m.invariant_slack = invariant_slack;
        m.linear = {time_step_tolerance, 20000, false};
        return m;
    }

    SweepConfig sweep() const
    {
        SweepConfig s;
        s.cell = unit_cell();
        s.D = D;
        s.law = law;
        s.resolution = dissolution;
        s.eps_list = eps_list;
        s.dirichlet = dirichlet;
        s.with_flow = flow;
        s.pressure_gradient = {-(pressure_left - pressure_right), 0.0};
        s.macro_resolution = macro_resolution;
        s.dt = dt;
        s.T = T;
        s.u_init = u_init;
        s.v_init = v_init;
        s.output_every = output_every;
        s.cell_options = cell_options();
        s.linear = {time_step_tolerance, 20000, false};
        s.error_floor = error_floor;
        return s;
    }
};

namespace detail {

class KeyTable {
public:
    KeyTable()
    {
        for (const auto& k : config_keys())
            values_[key(k.section, k.key)] = k.fallback;
    }

    void set(const std::string& section, const std::string& name, const std::string& value)
    {
        const auto it = values_.find(key(section, name));
        if (it == values_.end()) {
            std::ostringstream msg;
            bool known_section = false;
            for (const auto& k : config_keys())
                known_section = known_section || section == k.section;
            if (!known_section) {
                msg << "unknown config section [" << section << "]; valid sections:";
                std::string last;
                for (const auto& k : config_keys())
                    if (last != k.section) {
                        msg << " [" << k.section << "]";
                        last = k.section;
                    }
            } else {
                msg << "unknown config key '" << name << "' in [" << section << "]; valid keys:";
                for (const auto& k : config_keys())
                    if (section == k.section)
                        msg << " " << k.key;
            }
            fail(ErrorKind::config, msg.str());
        }
        it->second = value;
    }

    const std::string& raw(const char* section, const char* name) const { return values_.at(key(section, name)); }

    double number(const char* section, const char* name)
    {
        const std::string& s = raw(section, name);
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || s.find_first_not_of(" \t", used) != std::string::npos)
            bad(section, name, "a number");
        store(section, name, format_number(x));
        return x;
    }

    int integer(const char* section, const char* name)
    {
        const std::string& s = raw(section, name);
        std::size_t used = 0;
        long x = 0;
        try {
            x = std::stol(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || s.find_first_not_of(" \t", used) != std::string::npos)
            bad(section, name, "an integer");
        store(section, name, std::to_string(x));
        return static_cast<int>(x);
    }

    bool boolean(const char* section, const char* name)
    {
        const std::string& s = raw(section, name);
        if (s == "true" || s == "1" || s == "yes")
            return store(section, name, "true"), true;
        if (s == "false" || s == "0" || s == "no")
            return store(section, name, "false"), false;
        bad(section, name, "true or false");
    }

    std::string choice(const char* section, const char* name, std::initializer_list<const char*> options)
    {
        const std::string& s = raw(section, name);
        for (const char* o : options)
            if (s == o)
                return s;
        std::string list;
        for (const char* o : options)
            list += list.empty() ? std::string(o) : std::string(" | ") + o;
        bad(section, name, list.c_str());
    }

    std::vector<double> numbers(const char* section, const char* name)
    {
        std::vector<double> out;
        std::string canon;
        std::stringstream ss(raw(section, name));
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t used = 0;
            try {
                out.push_back(std::stod(item, &used));
            } catch (const std::exception&) {
                bad(section, name, "a comma-separated list of numbers");
            }
            if (item.find_first_not_of(" \t", used) != std::string::npos)
                bad(section, name, "a comma-separated list of numbers");
            canon += (canon.empty() ? "" : ", ") + format_number(out.back());
        }
        store(section, name, canon);
        return out;
    }

    std::vector<std::array<std::string, 3>> resolved() const
    {
        std::vector<std::array<std::string, 3>> out;
        for (const auto& k : config_keys())
            out.push_back({k.section, k.key, raw(k.section, k.key)});
        return out;
    }

private:
    static std::string key(const std::string& s, const std::string& k) { return s + "." + k; }
    void store(const char* section, const char* name, std::string v) { values_[key(section, name)] = std::move(v); }
    [[noreturn]] void bad(const char* section, const char* name, const char* expected) const
    {
        std::ostringstream msg;
        msg << "[" << section << "] " << name << " = '" << raw(section, name) << "' is not " << expected;
        fail(ErrorKind::config, msg.str());
    }

    std::map<std::string, std::string> values_;
};

inline EdgeSet parse_edges(const std::string& text)
{
    EdgeSet e = EdgeSet::none();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item == "none" || item.empty())
            continue;
        bool found = false;
        for (int i = 0; i < 4; ++i)
            if (item == to_string(static_cast<Edge>(i))) {
                e.dirichlet[i] = true;
                found = true;
            }
        if (!found)
            fail(ErrorKind::config, "[geometry] dirichlet_edges: unknown edge '" + item + "' (left, right, bottom, top, none)");
    }
    return e;
}

inline std::string edges_text(const EdgeSet& e)
{
    std::string s;
    for (int i = 0; i < 4; ++i)
        if (e.dirichlet[i])
            s += (s.empty() ? "" : ", ") + to_string(static_cast<Edge>(i));
    return s.empty() ? "none" : s;
}

inline InitialData initial_data(KeyTable& t, const char* kind, const char* base, const char* amplitude)
{
    const std::string k = t.choice("micro", kind, {"constant", "sine"});
    const double b = t.number("micro", base);
    const double a = t.number("micro", amplitude);
    return k == "constant" ? InitialData::constant(b) : InitialData::sine(b, a);
}

} // namespace detail

/// Cross-field checks: alignment, tiling, time step bounds.
inline void validate(const RunConfig& c)
{
    const UnitCell cell = c.unit_cell();
    const PerforatedGrid grid = PerforatedGrid::tile(cell, c.eps, c.dirichlet);
    for (double e : c.eps_list)
        PerforatedGrid::tile(cell, e, c.dirichlet);
    validate_eps_list(c.eps_list);
    if (!(c.D > 0.0))
        fail(ErrorKind::config, "[micro] D must be > 0");
    if (!(c.dt > 0.0) || !(c.T >= 0.0))
        fail(ErrorKind::config, "[micro] dt must be > 0 and T >= 0");
    if (c.output_every < 1)
        fail(ErrorKind::config, "[micro] output_every must be >= 1");
    if (c.u_init.lower_bound() < 0.0 || c.v_init.lower_bound() < 0.0)
        fail(ErrorKind::config, "[micro] initial data must be nonnegative");
    if (c.macro_resolution < 2)
        fail(ErrorKind::config, "[macro] resolution must be >= 2");
    if (c.macro_resolution < grid.eps_cells_per_side())
        fail(ErrorKind::config, "[macro] resolution must be at least 1/eps");
    c.dissolution.validate();

    const double bound_u = std::max(c.u_init.upper_bound() + std::abs(c.perturbation), c.law.solubility());
    const double lr = c.law.lipschitz(bound_u);
    const double micro_ratio = static_cast<double>(cell.resolution()) * std::max(1, grid.max_faces_per_cell());
    if (cell.perforated() && c.dt * c.law.k() * lr * micro_ratio > 1.0 + 1e-12) {
        std::ostringstream msg;
        msg << "[micro] dt = " << c.dt << " violates the positivity bound dt * k * L_r * (eps/h) * faces_per_cell <= 1"
            << " (largest admissible dt = " << 1.0 / (c.law.k() * lr * micro_ratio) << ")";
        fail(ErrorKind::config, msg.str());
    }
    const double gamma = cell.surface_measure() / cell.porosity();
    if (c.dt * c.law.k() * lr * gamma > 1.0 + 1e-12) {
        std::ostringstream msg;
        msg << "[micro] dt = " << c.dt << " violates the macro positivity bound dt * k * L_r * |Gamma_G|/|Y| <= 1"
            << " (largest admissible dt = " << 1.0 / (c.law.k() * lr * gamma) << ")";
        fail(ErrorKind::config, msg.str());
    }
}

/// Parses INI-style text; every key not given takes its documented default.
inline RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>")
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorKind::config, origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    detail::KeyTable t;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            fail(ErrorKind::config, origin + ": key '" + section + "' outside of a [section]");
        for (const auto& [name, value] : body)
            t.set(section, name, value.data());
    }

    RunConfig c;
    if (t.integer("geometry", "dim") != kDim)
        fail(ErrorKind::config, "[geometry] dim: only dim = 2 is supported");
    c.eps = t.number("geometry", "eps");
    c.resolution = t.integer("geometry", "n");
    c.hole_side = t.number("geometry", "hole_side");
    const std::vector<double> center = t.numbers("geometry", "hole_center");
    if (center.size() != kDim)
        fail(ErrorKind::config, "[geometry] hole_center needs two comma-separated coordinates");
    c.hole_center = {center[0], center[1]};
    c.dirichlet = detail::parse_edges(t.raw("geometry", "dirichlet_edges"));
    t.set("geometry", "dirichlet_edges", detail::edges_text(c.dirichlet));

    const double onset = t.number("kinetics", "u_star");
    const double sol = t.number("kinetics", "u_solubility");
    const double p = t.number("kinetics", "exponent");
    const double k = t.number("kinetics", "k");
    c.law = RateLaw::make(onset, sol, p, k);
    c.dissolution.mode = t.choice("kinetics", "resolution_mode", {"exact", "regularized"}) == "exact"
                             ? ResolutionMode::exact
                             : ResolutionMode::regularized;
    c.dissolution.delta = t.number("kinetics", "delta");

    c.D = t.number("micro", "D");
    c.velocity = t.choice("micro", "velocity", {"zero", "reconstructed"}) == "zero" ? VelocityMode::zero
                                                                                  : VelocityMode::reconstructed;
    c.pressure_gradient = {t.number("micro", "pressure_gradient_x"), t.number("micro", "pressure_gradient_y")};
    c.velocity_bound = t.number("micro", "velocity_bound");
    c.dt = t.number("micro", "dt");
    c.T = t.number("micro", "T");
    c.output_every = t.integer("micro", "output_every");
    c.u_init = detail::initial_data(t, "u_init", "u_base", "u_amplitude");
    c.v_init = detail::initial_data(t, "v_init", "v_base", "v_amplitude");

    c.macro_resolution = t.integer("macro", "resolution");
    c.flow = t.boolean("macro", "flow");
    c.pressure_left = t.number("macro", "pressure_left");
    c.pressure_right = t.number("macro", "pressure_right");
    c.tensors_path = t.raw("macro", "tensors");
    c.perturbation = t.number("macro", "perturbation");

    c.eps_list = t.numbers("sweep", "eps_list");
    c.error_floor = t.number("sweep", "error_floor");

    c.linear_tolerance = t.number("tolerances", "linear");
    c.time_step_tolerance = t.number("tolerances", "time_step");
    c.invariant_slack = t.number("tolerances", "invariant_slack");
    c.spd_tolerance = t.number("tolerances", "spd");
    c.symmetry_tolerance = t.number("tolerances", "symmetry");
    c.divergence_tolerance = t.number("tolerances", "divergence");
    c.augmentation = t.number("tolerances", "augmentation");

    c.dump_fields = t.boolean("output", "dump_fields");
    c.resolved = t.resolved();
    validate(c);
    return c;
}

inline RunConfig parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorKind::io, "cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

/// Resolved config as INI text; parsing it yields the same RunConfig.
inline std::string resolved_config_text(const RunConfig& c)
{
    std::ostringstream out;
    std::string section;
    for (const auto& [s, k, v] : c.resolved) {
        if (s != section) {
            out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
            section = s;
        }
        out << k << " = " << v << "\n";
    }
    return out.str();
}

} // namespace perfhom
