#include "shelab/grid_noise.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <string>

#include "shelab/errors.hpp"
#include "shelab/rng.hpp"

namespace shelab {
namespace {

constexpr double kMultipleTol = 1e-9;

int checked_count(double extent, double step, char const* what)
{
    double const ratio = extent / step;
    double const rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > kMultipleTol * std::max(1.0, rounded)) {
        throw ConfigError(std::string(what) + " extent is not an integer multiple of its step");
    }
    if (rounded > 1e9) {
        throw ConfigError(std::string(what) + " grid too large");
    }
    return static_cast<int>(rounded);
}

// Round-half-even with a tolerance for ties produced by decimal steps.
long long snap_half_even(double u)
{
    double const lo = std::floor(u);
    double const frac = u - lo;
    if (std::abs(frac - 0.5) < kMultipleTol) {
        auto const base = static_cast<long long>(lo);
        return base % 2 == 0 ? base : base + 1;
    }
    return std::llround(u);
}

std::vector<double> generate(GridSpec const& grid, std::uint64_t seed, CellKeyMap const& map)
{
    std::vector<double> values(static_cast<std::size_t>(grid.n_t) * grid.n_x);
    for (int n = 0; n < grid.n_t; ++n) {
        std::int64_t const a = std::int64_t{map.time_sign} * n + map.time_offset;
        double* row = values.data() + static_cast<std::size_t>(n) * grid.n_x;
        std::int64_t cached_pair = 0;
        std::array<double, 2> pair{};
        bool have_pair = false;
        for (int j = 0; j < grid.n_x; ++j) {
            std::int64_t const b = std::int64_t{map.space_sign} * j + map.space_offset;
            std::int64_t const p = b >> 1;
            if (!have_pair || p != cached_pair) {
                pair = keyed_gaussian_pair(seed, a, p);
                cached_pair = p;
                have_pair = true;
            }
            row[j] = pair[static_cast<std::size_t>(b & 1)];
        }
    }
    return values;
}

template <class T>
void put_le(std::ofstream& out, T value)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    auto bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.put(static_cast<char>(bits & 0xffu));
        bits = static_cast<U>(bits >> 8);
    }
}

template <class T>
T get_le(std::ifstream& in)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
    if (!in) {
        throw ConfigError("noise file truncated");
    }
    U bits = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) {
        bits = static_cast<U>((bits << 8) | bytes[i]);
    }
    return std::bit_cast<T>(bits);
}

constexpr std::uint16_t kNoiseVersion = 1;

}  // namespace

int GridSpec::nearest_site(double xq) const
{
    long long const j = snap_half_even((xq - x_min) / dx);
    if (j < 0 || j >= n_x) {
        throw RangeError("position " + std::to_string(xq) + " outside the grid");
    }
    return static_cast<int>(j);
}

int GridSpec::time_index(double t) const
{
    double const u = (t - t0) / dt;
    long long const k = std::llround(u);
    if (std::abs(u - static_cast<double>(k)) > 1e-6 || k < 0 || k > n_t) {
        throw RangeError("time " + std::to_string(t) + " is not a grid time");
    }
    return static_cast<int>(k);
}

GridSpec make_grid(double t0, double t1, double x_min, double x_max, double dt, double dx,
                   double kernel_radius_sigmas)
{
    if (!(t0 < t1) || !(x_min < x_max) || !(dt > 0.0) || !(dx > 0.0)) {
        throw ConfigError("grid requires t0 < t1, x_min < x_max, dt > 0, dx > 0");
    }
    if (!(kernel_radius_sigmas >= 3.0)) {
        throw ConfigError("kernel_radius_sigmas must be at least 3");
    }
    GridSpec g;
    g.t0 = t0;
    g.t1 = t1;
    g.x_min = x_min;
    g.x_max = x_max;
    g.dt = dt;
    g.dx = dx;
    g.kernel_radius_sigmas = kernel_radius_sigmas;
    g.n_t = checked_count(t1 - t0, dt, "time");
    g.n_x = checked_count(x_max - x_min, dx, "space") + 1;
    if (g.n_t < 1) {
        throw ConfigError("grid needs at least one time step");
    }
    if (g.n_x < 3) {
        throw ConfigError("grid needs at least three sites, got " + std::to_string(g.n_x));
    }
    return g;
}

double cell_value(std::uint64_t seed, std::int64_t a, std::int64_t b) noexcept
{
    return keyed_gaussian_pair(seed, a, b >> 1)[static_cast<std::size_t>(b & 1)];
}

NoiseField::NoiseField(GridSpec grid, std::uint64_t seed, CellKeyMap map)
    : grid_(grid), seed_(seed), map_(map), keyed_(true), values_(generate(grid_, seed_, map_))
{
}

NoiseField::NoiseField(GridSpec grid, std::uint64_t seed, std::vector<double> values)
    : grid_(grid), seed_(seed), keyed_(false), values_(std::move(values))
{
    if (values_.size() != static_cast<std::size_t>(grid_.n_t) * grid_.n_x) {
        throw ConfigError("noise value count does not match the grid");
    }
}

NoiseField sample_noise(GridSpec const& grid, std::uint64_t seed)
{
    return NoiseField(grid, seed, CellKeyMap{});
}

NoiseField shift_noise(NoiseField const& noise, int k_t, int k_x, ShiftMode mode)
{
    GridSpec const& g = noise.grid();
    if (k_t == 0 && k_x == 0) {
        return noise;
    }
    if (mode == ShiftMode::strict) {
        throw RangeError("shifted window leaves the grid and re-keying is disabled");
    }
    if (!noise.keyed()) {
        throw RangeError("cannot re-key a noise field without a key map");
    }
    CellKeyMap map = noise.key_map();
    map.time_offset += std::int64_t{map.time_sign} * k_t;
    map.space_offset += std::int64_t{map.space_sign} * k_x;
    return NoiseField(g, noise.seed(), map);
}

NoiseField coarsen_noise(NoiseField const& fine, GridSpec const& coarse)
{
    GridSpec const& f = fine.grid();
    auto ratio = [](double big, double small, char const* what) {
        double const r = big / small;
        long const k = std::lround(r);
        if (k < 1 || std::abs(r - static_cast<double>(k)) > 1e-9 * r) {
            throw ConfigError(std::string("coarse ") + what + " is not a multiple of the fine step");
        }
        return static_cast<int>(k);
    };
    int const kt = ratio(coarse.dt, f.dt, "dt");
    int const kx = ratio(coarse.dx, f.dx, "dx");
    double const t_shift = (coarse.t0 - f.t0) / f.dt;
    double const x_shift = (coarse.x_min - f.x_min) / f.dx;
    long const n_off = std::lround(t_shift);
    long const j_off = std::lround(x_shift);
    if (std::abs(t_shift - static_cast<double>(n_off)) > 1e-6
        || std::abs(x_shift - static_cast<double>(j_off)) > 1e-6 || n_off < 0 || j_off < 0
        || n_off + static_cast<long>(coarse.n_t) * kt > f.n_t
        || j_off + static_cast<long>(coarse.n_x) * kx > f.n_x) {
        throw ConfigError("coarse cells do not tile a subset of the fine grid");
    }
    double const scale = 1.0 / std::sqrt(static_cast<double>(kt) * kx);
    std::vector<double> values(static_cast<std::size_t>(coarse.n_t) * coarse.n_x);
    for (int n = 0; n < coarse.n_t; ++n) {
        double* out = values.data() + static_cast<std::size_t>(n) * coarse.n_x;
        for (int a = 0; a < kt; ++a) {
            auto const row = fine.row(static_cast<int>(n_off) + n * kt + a);
            for (int j = 0; j < coarse.n_x; ++j) {
                auto const base = static_cast<std::size_t>(j_off + static_cast<long>(j) * kx);
                double s = 0.0;
                for (int b = 0; b < kx; ++b) {
                    s += row[base + static_cast<std::size_t>(b)];
                }
                out[j] += s;
            }
        }
        for (int j = 0; j < coarse.n_x; ++j) {
            out[j] *= scale;
        }
    }
    return NoiseField(coarse, fine.seed(), std::move(values));
}

NoiseField reflect_noise(NoiseField const& noise, Axis axis)
{
    GridSpec const& g = noise.grid();
    if (noise.keyed()) {
        CellKeyMap map = noise.key_map();
        if (axis == Axis::time) {
            map.time_offset += std::int64_t{map.time_sign} * (g.n_t - 1);
            map.time_sign = -map.time_sign;
        } else {
            map.space_offset += std::int64_t{map.space_sign} * (g.n_x - 1);
            map.space_sign = -map.space_sign;
        }
        return NoiseField(g, noise.seed(), map);
    }
    std::vector<double> values(noise.values().size());
    for (int n = 0; n < g.n_t; ++n) {
        for (int j = 0; j < g.n_x; ++j) {
            int const sn = axis == Axis::time ? g.n_t - 1 - n : n;
            int const sj = axis == Axis::space ? g.n_x - 1 - j : j;
            values[static_cast<std::size_t>(n) * g.n_x + j] = noise(sn, sj);
        }
    }
    return NoiseField(g, noise.seed(), std::move(values));
}

void write_noise(NoiseField const& noise, std::filesystem::path const& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot open " + path.string() + " for writing");
    }
    GridSpec const& g = noise.grid();
    out.write("SHL1", 4);
    put_le(out, kNoiseVersion);
    put_le(out, static_cast<std::uint32_t>(g.n_t));
    put_le(out, static_cast<std::uint32_t>(g.n_x));
    put_le(out, g.t0);
    put_le(out, g.dt);
    put_le(out, g.x_min);
    put_le(out, g.dx);
    put_le(out, noise.seed());
    for (double v : noise.values()) {
        put_le(out, v);
    }
    if (!out) {
        throw ConfigError("failed writing " + path.string());
    }
}

NoiseField read_noise(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string(magic.data(), 4) != "SHL1") {
        throw ConfigError("bad noise file magic");
    }
    if (get_le<std::uint16_t>(in) != kNoiseVersion) {
        throw ConfigError("unsupported noise file version");
    }
    auto const n_t = get_le<std::uint32_t>(in);
    auto const n_x = get_le<std::uint32_t>(in);
    double const t0 = get_le<double>(in);
    double const dt = get_le<double>(in);
    double const x_min = get_le<double>(in);
    double const dx = get_le<double>(in);
    auto const seed = get_le<std::uint64_t>(in);
    GridSpec const g = make_grid(t0, t0 + n_t * dt, x_min, x_min + (n_x - 1) * dx, dt, dx);
    if (g.n_t != static_cast<int>(n_t) || g.n_x != static_cast<int>(n_x)) {
        throw ConfigError("noise file header is inconsistent");
    }
    std::vector<double> values(static_cast<std::size_t>(n_t) * n_x);
    for (auto& v : values) {
        v = get_le<double>(in);
    }
    return NoiseField(g, seed, std::move(values));
}

}  // namespace shelab
