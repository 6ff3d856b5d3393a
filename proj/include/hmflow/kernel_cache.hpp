#pragma once

// On-disk kernel tables.
//
//   hmflow-kernel-cache 1
//   scheme <int>
//   domain <ball|annulus|exterior> <inner> <outer> <m>
//   grid <intervals>
//   axis <dt> <steps> <store_stride>
//   sources <count> <node> ...
//   mollifier <none|delta>
//   layout values <count> flux_inner <count> flux_outer <count> flux_inner_cum <count> flux_outer_cum <count>
//   key <16 hex digits>        FNV-1a 64 of every line above
//   content <16 hex digits>    FNV-1a 64 of the data bytes
//   end
//
// then the five arrays back to back as little-endian IEEE-754 float64, values in
// [k][s][i] order and fluxes (then time-integrated fluxes) in [s][n] order. Reals in the header are written with
// 17 significant digits so they round-trip.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hmflow/green_radial.hpp"

namespace hmflow::cache {

/// Bumped whenever table values change for the same inputs.
constexpr int scheme_version = 4;
constexpr const char* magic = "hmflow-kernel-cache 1";

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline std::string real17(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

inline const char* kind_name(DomainKind k) {
    switch (k) {
    case DomainKind::ball: return "ball";
    case DomainKind::annulus: return "annulus";
    case DomainKind::exterior: return "exterior";
    }
    return "?";
}

inline DomainKind parse_kind(const std::string& s) {
    if (s == "ball") return DomainKind::ball;
    if (s == "annulus") return DomainKind::annulus;
    if (s == "exterior") return DomainKind::exterior;
    throw InvalidInput("kernel cache: unknown domain kind '" + s + "'");
}

/// Everything that determines a table.
struct TableSpec {
    DomainSpec domain;
    int intervals = 0;
    TimeAxis axis;
    std::vector<std::size_t> sources;
    std::optional<double> mollifier;
    int scheme = scheme_version;

    static TableSpec of(const KernelTable& t) {
        HMFLOW_REQUIRE(t.grid.is_uniform(), InvalidInput, "kernel cache: only uniform grids are cached");
        return {t.domain, static_cast<int>(t.nodes()) - 1, t.axis, t.source_nodes, t.mollifier_delta, scheme_version};
    }

    RadialGrid grid() const { return RadialGrid::uniform(domain.inner, domain.outer, intervals, domain.m); }

    std::size_t value_count() const { return axis.stored() * sources.size() * static_cast<std::size_t>(intervals + 1); }
    std::size_t flux_count() const { return sources.size() * static_cast<std::size_t>(axis.steps + 1); }

    /// Header lines covered by the key.
    std::string key_text() const {
        std::ostringstream os;
        os << magic << "\n";
        os << "scheme " << scheme << "\n";
        os << "domain " << kind_name(domain.kind) << " " << real17(domain.inner) << " " << real17(domain.outer) << " "
           << domain.m << "\n";
        os << "grid " << intervals << "\n";
        os << "axis " << real17(axis.dt) << " " << axis.steps << " " << axis.store_stride << "\n";
        os << "sources " << sources.size();
        for (std::size_t s : sources) os << " " << s;
        os << "\n";
        os << "mollifier " << (mollifier ? real17(*mollifier) : std::string("none")) << "\n";
        os << "layout values " << value_count() << " flux_inner " << (domain.has_inner_boundary() ? flux_count() : 0)
           << " flux_outer " << (domain.has_outer_boundary() ? flux_count() : 0) << " flux_inner_cum "
           << (domain.has_inner_boundary() ? flux_count() : 0) << " flux_outer_cum "
           << (domain.has_outer_boundary() ? flux_count() : 0) << "\n";
        return os.str();
    }

    std::uint64_t key() const {
        const auto t = key_text();
        return fnv1a(t.data(), t.size());
    }

    KernelTable build() const {
        HMFLOW_REQUIRE(scheme == scheme_version, InvalidInput, "kernel cache: cannot build an old scheme version");
        const auto g = grid();
        std::optional<Mollifier> mol;
        if (mollifier) mol = Mollifier{*mollifier};
        return hmflow::detail::build_kernel(domain, g, axis, sources, mol);
    }
};

namespace detail {

inline void put_le(std::ostream& os, std::span<const double> xs) {
    std::vector<unsigned char> buf(xs.size() * 8);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        auto u = std::bit_cast<std::uint64_t>(xs[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(u >> (8 * b));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<double> get_le(std::istream& is, std::size_t n) {
    std::vector<unsigned char> buf(n * 8);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    HMFLOW_REQUIRE(static_cast<std::size_t>(is.gcount()) == buf.size(), InvalidInput, "kernel cache: truncated data");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
        out[i] = std::bit_cast<double>(u);
    }
    return out;
}

inline std::uint64_t content_hash(const KernelTable& t) {
    std::ostringstream os(std::ios::binary);
    put_le(os, t.values);
    put_le(os, t.flux_inner);
    put_le(os, t.flux_outer);
    put_le(os, t.flux_inner_cum);
    put_le(os, t.flux_outer_cum);
    const auto s = os.str();
    return fnv1a(s.data(), s.size());
}

} // namespace detail

/// FNV-1a 64 of the little-endian data arrays; identical tables give identical hashes.
inline std::uint64_t content_hash(const KernelTable& t) { return detail::content_hash(t); }

inline void write(const KernelTable& t, const std::filesystem::path& path) {
    const auto spec = TableSpec::of(t);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        HMFLOW_REQUIRE(os.good(), InvalidInput, "kernel cache: cannot write " + tmp);
        os << spec.key_text() << "key " << hex64(spec.key()) << "\n"
           << "content " << hex64(content_hash(t)) << "\nend\n";
        detail::put_le(os, t.values);
        detail::put_le(os, t.flux_inner);
        detail::put_le(os, t.flux_outer);
        detail::put_le(os, t.flux_inner_cum);
        detail::put_le(os, t.flux_outer_cum);
        HMFLOW_REQUIRE(os.good(), InvalidInput, "kernel cache: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

struct Header {
    TableSpec spec;
    std::string key;
    std::string content;
};

inline Header read_header(std::istream& is) {
    auto line = [&](const std::string& tag) {
        std::string l;
        HMFLOW_REQUIRE(static_cast<bool>(std::getline(is, l)), InvalidInput, "kernel cache: header ends early");
        std::istringstream ls(l);
        std::string t;
        ls >> t;
        HMFLOW_REQUIRE(t == tag, InvalidInput, "kernel cache: expected '" + tag + "', found '" + l + "'");
        std::ostringstream rest;
        rest << ls.rdbuf();
        return rest.str();
    };
    std::string first;
    std::getline(is, first);
    HMFLOW_REQUIRE(first == magic, InvalidInput, "kernel cache: bad magic line");
    Header h;
    auto& s = h.spec;
    std::istringstream(line("scheme")) >> s.scheme;
    {
        std::istringstream ls(line("domain"));
        std::string kind;
        ls >> kind >> s.domain.inner >> s.domain.outer >> s.domain.m;
        s.domain.kind = parse_kind(kind);
        HMFLOW_REQUIRE(!ls.fail(), InvalidInput, "kernel cache: bad domain line");
    }
    std::istringstream(line("grid")) >> s.intervals;
    {
        std::istringstream ls(line("axis"));
        ls >> s.axis.dt >> s.axis.steps >> s.axis.store_stride;
        HMFLOW_REQUIRE(!ls.fail(), InvalidInput, "kernel cache: bad axis line");
    }
    {
        std::istringstream ls(line("sources"));
        std::size_t n = 0;
        ls >> n;
        s.sources.resize(n);
        for (auto& x : s.sources) ls >> x;
        HMFLOW_REQUIRE(!ls.fail(), InvalidInput, "kernel cache: bad sources line");
    }
    {
        std::istringstream ls(line("mollifier"));
        std::string v;
        ls >> v;
        if (v != "none") s.mollifier = std::stod(v);
    }
    line("layout");
    std::istringstream(line("key")) >> h.key;
    std::istringstream(line("content")) >> h.content;
    std::string end;
    std::getline(is, end);
    HMFLOW_REQUIRE(end == "end", InvalidInput, "kernel cache: missing end marker");
    return h;
}

/// Reads a cache file; throws InvalidInput on a stale scheme, a key mismatch,
/// truncation or a content-hash mismatch.
inline KernelTable read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    HMFLOW_REQUIRE(is.good(), InvalidInput, "kernel cache: cannot open " + path.string());
    const auto h = read_header(is);
    HMFLOW_REQUIRE(h.spec.scheme == scheme_version, InvalidInput,
                   "kernel cache: scheme " + std::to_string(h.spec.scheme) + " is stale (current " +
                       std::to_string(scheme_version) + ")");
    h.spec.domain.validate();
    h.spec.axis.validate();
    HMFLOW_REQUIRE(h.key == hex64(h.spec.key()), InvalidInput, "kernel cache: header key mismatch");
    KernelTable t(h.spec.domain, h.spec.grid(), h.spec.axis, h.spec.sources);
    t.mollifier_delta = h.spec.mollifier;
    t.values = detail::get_le(is, t.values.size());
    t.flux_inner = detail::get_le(is, t.flux_inner.size());
    t.flux_outer = detail::get_le(is, t.flux_outer.size());
    t.flux_inner_cum = detail::get_le(is, t.flux_inner_cum.size());
    t.flux_outer_cum = detail::get_le(is, t.flux_outer_cum.size());
    is.peek();
    HMFLOW_REQUIRE(is.eof(), InvalidInput, "kernel cache: trailing bytes");
    HMFLOW_REQUIRE(h.content == hex64(content_hash(t)), InvalidInput, "kernel cache: content hash mismatch");
    return t;
}

struct Loaded {
    KernelTable table;
    bool from_cache = false;
    std::string key;
    std::string content;
    std::filesystem::path path;
    std::string note;  // why an existing file was not reused
};

/// Cache file name for a spec inside dir.
inline std::filesystem::path path_for(const std::filesystem::path& dir, const TableSpec& spec) {
    return dir / (kind_name(spec.domain.kind) + std::string("-") + hex64(spec.key()) + ".hgk");
}

/// Returns the cached table when a valid file for the spec exists, otherwise
/// builds, writes and returns it. Unreadable or stale files are rebuilt.
inline Loaded load_or_build(const std::filesystem::path& dir, const TableSpec& spec) {
    const auto p = path_for(dir, spec);
    std::string note;
    if (std::filesystem::exists(p)) {
        try {
            auto t = read(p);
            const auto have = TableSpec::of(t);
            if (have.key() == spec.key()) {
                auto c = hex64(content_hash(t));
                return {std::move(t), true, hex64(spec.key()), std::move(c), p, {}};
            }
            note = "key collision, rebuilt";
        } catch (const InvalidInput& e) {
            note = std::string(e.what()) + "; rebuilt";
        }
    }
    auto t = spec.build();
    write(t, p);
    auto c = hex64(content_hash(t));
    return {std::move(t), false, hex64(spec.key()), std::move(c), p, std::move(note)};
}

/// tau,source_radius,r,G0 rows in [k][s][i] order.
inline void export_csv(const KernelTable& t, std::ostream& os) {
    os << "tau,source_radius,r,G0\n" << std::setprecision(17);
    for (std::size_t k = 0; k < t.times(); ++k)
        for (std::size_t s = 0; s < t.sources(); ++s)
            for (std::size_t i = 0; i < t.nodes(); ++i)
                os << t.time(k) << "," << t.source_radius(s) << "," << t.grid[i] << "," << t.value(i, s, k) << "\n";
}

/// side,tau,source_radius,flux rows.
inline void export_flux_csv(const KernelTable& t, std::ostream& os) {
    os << "side,tau,source_radius,flux\n" << std::setprecision(17);
    for (Side side : {Side::inner, Side::outer}) {
        const auto& f = side == Side::inner ? t.flux_inner : t.flux_outer;
        if (f.empty()) continue;
        for (std::size_t s = 0; s < t.sources(); ++s) {
            const auto series = t.flux_series(side, s);
            for (int n = 0; n <= t.axis.steps; ++n)
                os << (side == Side::inner ? "inner" : "outer") << "," << t.axis.step_time(n) << ","
                   << t.source_radius(s) << "," << series[n] << "\n";
        }
    }
}

} // namespace hmflow::cache
