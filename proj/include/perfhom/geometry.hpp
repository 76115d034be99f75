#pragma once

// Periodic perforated geometry on a structured Cartesian grid.
//
// The unit cell Z = (0,1)^2 carries an axis-aligned square perforation Y0
// whose edges coincide with grid lines, so the grain boundary is exactly a
// union of grid faces. Tiling the unit cell with scale eps (1/eps integer)
// yields the perforated domain over (0,1)^2.

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "perfhom/error.hpp"

namespace perfhom {

inline constexpr int kDim = 2;

using Vec2 = std::array<double, kDim>;

enum class Direction : std::uint8_t { west, east, south, north };

inline constexpr std::array<Direction, 4> kDirections{Direction::west, Direction::east,
                                                      Direction::south, Direction::north};

constexpr int axis_of(Direction d) { return (d == Direction::west || d == Direction::east) ? 0 : 1; }
constexpr int sign_of(Direction d) { return (d == Direction::west || d == Direction::south) ? -1 : 1; }

/// Unit normal of a face seen from the owning cell.
constexpr Vec2 normal_of(Direction d)
{
    Vec2 v{0.0, 0.0};
    v[axis_of(d)] = static_cast<double>(sign_of(d));
    return v;
}

enum class Edge : std::uint8_t { left, right, bottom, top };

inline std::string to_string(Edge e)
{
    switch (e) {
    case Edge::left: return "left";
    case Edge::right: return "right";
    case Edge::bottom: return "bottom";
    case Edge::top: return "top";
    }
    return "?";
}

/// Which outer edges carry the homogeneous Dirichlet condition; the rest are
/// zero-flux.
struct EdgeSet {
    std::array<bool, 4> dirichlet{true, false, false, false};

    static EdgeSet none() { return EdgeSet{{false, false, false, false}}; }
    static EdgeSet left_only() { return EdgeSet{}; }

    bool contains(Edge e) const { return dirichlet[static_cast<int>(e)]; }
    bool empty() const { return !(dirichlet[0] || dirichlet[1] || dirichlet[2] || dirichlet[3]); }
    bool operator==(const EdgeSet&) const = default;
};

namespace detail {

inline bool near_integer(double x, long& out)
{
    const double r = std::round(x);
    if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x)))
        return false;
    out = static_cast<long>(r);
    return true;
}

inline int wrap(int i, int n)
{
    const int r = i % n;
    return r < 0 ? r + n : r;
}

} // namespace detail

/// A grain face of the unit cell: the fluid cell that owns it and the
/// direction pointing into the perforation.
struct ReferenceFace {
    int i = 0;
    int j = 0;
    Direction normal = Direction::east;
    Vec2 y{};
};

class UnitCell {
public:
    /// Validates containment (closure of the hole inside Z) and grid alignment.
    static UnitCell build(double hole_side, Vec2 hole_center, int n)
    {
        if (n < 2)
            fail(ErrorKind::parameter, "unit cell resolution n must be >= 2");
        if (!(hole_side > 0.0))
            fail(ErrorKind::containment, "hole side must be strictly positive");
        for (int d = 0; d < kDim; ++d) {
            const double lo = hole_center[d] - 0.5 * hole_side;
            const double hi = hole_center[d] + 0.5 * hole_side;
            if (!(lo > 0.0) || !(hi < 1.0)) {
                std::ostringstream msg;
                msg << "perforation must lie strictly inside the unit cell (axis " << d
                    << ": [" << lo << ", " << hi << "])";
                fail(ErrorKind::containment, msg.str());
            }
        }
        long width = 0;
        if (!detail::near_integer(n * hole_side, width)) {
            std::ostringstream msg;
            msg << "hole side " << hole_side << " is not aligned with the grid: n*a = "
                << n * hole_side << " is not an integer";
            fail(ErrorKind::alignment, msg.str());
        }
        std::array<int, kDim> begin{};
        for (int d = 0; d < kDim; ++d) {
            long b = 0;
            const double corner = n * (hole_center[d] - 0.5 * hole_side);
            if (!detail::near_integer(corner, b)) {
                std::ostringstream msg;
                msg << "hole corner is off-grid on axis " << d << ": n*(c - a/2) = " << corner;
                fail(ErrorKind::alignment, msg.str());
            }
            begin[d] = static_cast<int>(b);
        }
        return UnitCell(n, hole_side, hole_center, static_cast<int>(width), begin);
    }

    /// Degenerate cell without a perforation (a -> 0 limit).
    static UnitCell unperforated(int n)
    {
        if (n < 2)
            fail(ErrorKind::parameter, "unit cell resolution n must be >= 2");
        return UnitCell(n, 0.0, Vec2{0.5, 0.5}, 0, {0, 0});
    }

    int resolution() const { return n_; }
    double mesh_width() const { return 1.0 / n_; }
    double hole_side() const { return side_; }
    Vec2 hole_center() const { return center_; }
    bool perforated() const { return width_ > 0; }
    int hole_cells() const { return width_; }
    int hole_begin(int axis) const { return begin_[axis]; }

    bool is_solid(int i, int j) const
    {
        i = detail::wrap(i, n_);
        j = detail::wrap(j, n_);
        return width_ > 0 && i >= begin_[0] && i < begin_[0] + width_ && j >= begin_[1] &&
               j < begin_[1] + width_;
    }

    /// |Y|
    double porosity() const { return 1.0 - side_ * side_; }
    /// |Gamma_G|
    double surface_measure() const { return 4.0 * side_; }

    const std::vector<ReferenceFace>& reference_faces() const { return faces_; }

    /// Index into reference_faces(), or -1 when (i, j, d) is not a grain face.
    int reference_index(int i, int j, Direction d) const
    {
        return face_lookup_[(static_cast<std::size_t>(j) * n_ + i) * 4 + static_cast<int>(d)];
    }

    bool same_geometry(const UnitCell& other) const
    {
        return n_ == other.n_ && width_ == other.width_ && begin_ == other.begin_;
    }

private:
    UnitCell(int n, double side, Vec2 center, int width, std::array<int, kDim> begin)
        : n_(n), side_(side), center_(center), width_(width), begin_(begin),
          face_lookup_(static_cast<std::size_t>(n) * n * 4, -1)
    {
        const double h = 1.0 / n;
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                if (is_solid(i, j))
                    continue;
                for (Direction d : kDirections) {
                    const int ax = axis_of(d);
                    const int s = sign_of(d);
                    const int ni = i + (ax == 0 ? s : 0);
                    const int nj = j + (ax == 1 ? s : 0);
                    if (!is_solid(ni, nj))
                        continue;
                    ReferenceFace f;
                    f.i = i;
                    f.j = j;
                    f.normal = d;
                    f.y = {(i + 0.5 + 0.5 * (ax == 0 ? s : 0)) * h,
                           (j + 0.5 + 0.5 * (ax == 1 ? s : 0)) * h};
                    face_lookup_[(static_cast<std::size_t>(j) * n + i) * 4 + static_cast<int>(d)] =
                        static_cast<int>(faces_.size());
                    faces_.push_back(f);
                }
            }
        }
    }

    int n_;
    double side_;
    Vec2 center_;
    int width_;
    std::array<int, kDim> begin_;
    std::vector<ReferenceFace> faces_;
    std::vector<int> face_lookup_;
};

inline UnitCell build_unit_cell(double hole_side, Vec2 hole_center, int n)
{
    return UnitCell::build(hole_side, hole_center, n);
}

/// A grain-boundary face of the perforated domain.
struct BoundaryFace {
    int owner = 0;        ///< global cell index of the fluid cell
    int owner_fluid = 0;  ///< compact fluid index
    Direction normal = Direction::east; ///< points from fluid into solid
    double measure = 0.0;
    std::array<int, kDim> eps_cell{}; ///< k
    int reference = 0;    ///< index into UnitCell::reference_faces()
    Vec2 y{};             ///< reference location on Gamma_G
    Vec2 center{};        ///< physical face center
};

/// A face of a fluid cell lying on the outer boundary of Omega.
struct OuterFace {
    int owner_fluid = 0;
    Edge edge = Edge::left;
    bool dirichlet = false;
};

struct Measures {
    double porosity = 0.0;         ///< |Y|
    double surface_density = 0.0;  ///< |Gamma_G|
    double fluid_volume = 0.0;     ///< |Omega^eps|
    double surface_measure = 0.0;  ///< |Gamma_G^eps|
};

class PerforatedGrid {
public:
    static PerforatedGrid tile(const UnitCell& cell, double eps, EdgeSet dirichlet = EdgeSet::left_only())
    {
        long m = 0;
        if (!(eps > 0.0) || !detail::near_integer(1.0 / eps, m) || m < 1) {
            std::ostringstream msg;
            msg << "1/eps must be a positive integer (eps = " << eps << ")";
            fail(ErrorKind::tiling, msg.str());
        }
        return PerforatedGrid(cell, static_cast<int>(m), dirichlet);
    }

    const UnitCell& unit_cell() const { return cell_; }
    double eps() const { return 1.0 / m_; }
    int eps_cells_per_side() const { return m_; }
    int cells_per_side() const { return size_; }
    int cell_count() const { return size_ * size_; }
    double h() const { return 1.0 / size_; }
    const EdgeSet& dirichlet_edges() const { return dirichlet_; }

    int index(int i, int j) const { return j * size_ + i; }
    int col(int c) const { return c % size_; }
    int row(int c) const { return c / size_; }

    bool is_fluid(int c) const { return fluid_index_[c] >= 0; }
    int fluid_index(int c) const { return fluid_index_[c]; }
    const std::vector<int>& fluid_cells() const { return fluid_cells_; }
    int fluid_count() const { return static_cast<int>(fluid_cells_.size()); }
    int solid_count() const { return cell_count() - fluid_count(); }

    Vec2 cell_center(int c) const { return {(col(c) + 0.5) * h(), (row(c) + 0.5) * h()}; }

    /// Global cell -> (eps-cell k, local index inside the unit cell).
    std::array<int, kDim> eps_cell_of(int c) const
    {
        const int n = cell_.resolution();
        return {col(c) / n, row(c) / n};
    }
    std::array<int, kDim> local_of(int c) const
    {
        const int n = cell_.resolution();
        return {col(c) % n, row(c) % n};
    }
    int eps_cell_linear(std::array<int, kDim> k) const { return k[1] * m_ + k[0]; }
    int eps_cell_count() const { return m_ * m_; }

    /// Faces are ordered by eps-cell (row-major) and then by reference index,
    /// so face(k, ref) = linear(k) * |reference faces| + ref.
    const std::vector<BoundaryFace>& boundary_faces() const { return faces_; }
    int face_index(std::array<int, kDim> k, int reference) const
    {
        return eps_cell_linear(k) * static_cast<int>(cell_.reference_faces().size()) + reference;
    }
    const std::vector<OuterFace>& outer_faces() const { return outer_; }

    /// Grain faces attached to each fluid cell (compact fluid index).
    const std::vector<std::vector<int>>& faces_of_fluid_cell() const { return faces_by_cell_; }
    int max_faces_per_cell() const { return max_faces_per_cell_; }

    Measures measures() const
    {
        Measures out;
        out.porosity = cell_.porosity();
        out.surface_density = cell_.surface_measure();
        out.fluid_volume = fluid_count() * h() * h();
        out.surface_measure = static_cast<double>(faces_.size()) * h();
        return out;
    }

    bool same_geometry(const PerforatedGrid& other) const
    {
        return m_ == other.m_ && cell_.same_geometry(other.cell_) && dirichlet_ == other.dirichlet_;
    }

private:
    PerforatedGrid(const UnitCell& cell, int m, EdgeSet dirichlet)
        : cell_(cell), m_(m), size_(m * cell.resolution()), dirichlet_(dirichlet)
    {
        const int n = cell_.resolution();
        const int cells = size_ * size_;
        fluid_index_.assign(cells, -1);
        for (int c = 0; c < cells; ++c) {
            if (!cell_.is_solid(col(c) % n, row(c) % n)) {
                fluid_index_[c] = static_cast<int>(fluid_cells_.size());
                fluid_cells_.push_back(c);
            }
        }
        check_connected();

        const double hh = h();
        const double eps = 1.0 / m_;
        const auto& refs = cell_.reference_faces();
        faces_by_cell_.assign(fluid_cells_.size(), {});
        faces_.reserve(static_cast<std::size_t>(m_) * m_ * refs.size());
        for (int k2 = 0; k2 < m_; ++k2) {
            for (int k1 = 0; k1 < m_; ++k1) {
                for (std::size_t r = 0; r < refs.size(); ++r) {
                    const ReferenceFace& ref = refs[r];
                    const int gi = k1 * n + ref.i;
                    const int gj = k2 * n + ref.j;
                    BoundaryFace f;
                    f.owner = index(gi, gj);
                    f.owner_fluid = fluid_index_[f.owner];
                    f.normal = ref.normal;
                    f.measure = hh;
                    f.eps_cell = {k1, k2};
                    f.reference = static_cast<int>(r);
                    f.y = ref.y;
                    f.center = {eps * k1 + eps * ref.y[0], eps * k2 + eps * ref.y[1]};
                    faces_by_cell_[f.owner_fluid].push_back(static_cast<int>(faces_.size()));
                    faces_.push_back(f);
                }
            }
        }
        max_faces_per_cell_ = 0;
        for (const auto& fc : faces_by_cell_)
            max_faces_per_cell_ = std::max(max_faces_per_cell_, static_cast<int>(fc.size()));

        for (int fi = 0; fi < static_cast<int>(fluid_cells_.size()); ++fi) {
            const int c = fluid_cells_[fi];
            if (col(c) == 0)
                outer_.push_back({fi, Edge::left, dirichlet_.contains(Edge::left)});
            if (col(c) == size_ - 1)
                outer_.push_back({fi, Edge::right, dirichlet_.contains(Edge::right)});
            if (row(c) == 0)
                outer_.push_back({fi, Edge::bottom, dirichlet_.contains(Edge::bottom)});
            if (row(c) == size_ - 1)
                outer_.push_back({fi, Edge::top, dirichlet_.contains(Edge::top)});
        }
    }

    void check_connected() const
    {
        if (fluid_cells_.empty())
            fail(ErrorKind::tiling, "perforated domain has no fluid cells");
        std::vector<char> seen(fluid_index_.size(), 0);
        std::vector<int> stack{fluid_cells_.front()};
        seen[fluid_cells_.front()] = 1;
        std::size_t reached = 0;
        while (!stack.empty()) {
            const int c = stack.back();
            stack.pop_back();
            ++reached;
            const int i = col(c);
            const int j = row(c);
            const std::array<std::array<int, 2>, 4> nbrs{{{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}}};
            for (const auto& [ni, nj] : nbrs) {
                if (ni < 0 || nj < 0 || ni >= size_ || nj >= size_)
                    continue;
                const int nc = index(ni, nj);
                if (fluid_index_[nc] >= 0 && !seen[nc]) {
                    seen[nc] = 1;
                    stack.push_back(nc);
                }
            }
        }
        if (reached != fluid_cells_.size())
            fail(ErrorKind::tiling, "fluid region of the perforated domain is not connected");
    }

    UnitCell cell_;
    int m_;
    int size_;
    EdgeSet dirichlet_;
    std::vector<int> fluid_index_;
    std::vector<int> fluid_cells_;
    std::vector<BoundaryFace> faces_;
    std::vector<std::vector<int>> faces_by_cell_;
    std::vector<OuterFace> outer_;
    int max_faces_per_cell_ = 0;
};

inline PerforatedGrid tile_domain(const UnitCell& cell, double eps, EdgeSet dirichlet = EdgeSet::left_only())
{
    return PerforatedGrid::tile(cell, eps, dirichlet);
}

inline Measures measures(const PerforatedGrid& grid) { return grid.measures(); }

} // namespace perfhom
