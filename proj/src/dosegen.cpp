#include "fmo/dosegen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"

namespace fmo {

namespace {

using nlohmann::json;

struct Vec2 {
    double x, y;
};

// Exact axis directions for right-angle beams keep mirrored and rotated
// phantoms comparable to machine precision.
Vec2 beam_direction(double deg) {
    double a = std::fmod(deg, 360.0);
    if (a < 0.0) a += 360.0;
    if (a == 0.0) return {1.0, 0.0};
    if (a == 90.0) return {0.0, 1.0};
    if (a == 180.0) return {-1.0, 0.0};
    if (a == 270.0) return {0.0, -1.0};
    const double rad = a * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

bool region_contains(const Region& r, double x, double y) {
    if (r.shape == Region::Shape::Disk) {
        const double dx = x - r.cx;
        const double dy = y - r.cy;
        return dx * dx + dy * dy <= r.radius * r.radius;
    }
    return std::fabs(x - r.cx) <= 0.5 * r.width && std::fabs(y - r.cy) <= 0.5 * r.height;
}

void check_region_in_grid(const Region& r, std::int64_t nx, std::int64_t ny,
                          const std::string& name) {
    double lo_x, hi_x, lo_y, hi_y;
    if (r.shape == Region::Shape::Disk) {
        lo_x = r.cx - r.radius;
        hi_x = r.cx + r.radius;
        lo_y = r.cy - r.radius;
        hi_y = r.cy + r.radius;
        if (r.radius < 0.0) raise(ErrorCode::InvalidArgument, "negative disk radius");
    } else {
        lo_x = r.cx - 0.5 * r.width;
        hi_x = r.cx + 0.5 * r.width;
        lo_y = r.cy - 0.5 * r.height;
        hi_y = r.cy + 0.5 * r.height;
        if (r.width < 0.0 || r.height < 0.0) {
            raise(ErrorCode::InvalidArgument, "negative rectangle size");
        }
    }
    if (lo_x < 0.0 || lo_y < 0.0 || hi_x > static_cast<double>(nx) ||
        hi_y > static_cast<double>(ny)) {
        raise(ErrorCode::RegionOutOfGrid, "structure '" + name + "' extends beyond the grid");
    }
}

// First ray parameter at which o + t*dir enters the grid rectangle.
double grid_entry_parameter(Vec2 o, Vec2 dir, double nx, double ny) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const double eps = 1e-300;
    if (std::fabs(dir.x) > eps) {
        const double a = (0.0 - o.x) / dir.x;
        const double b = (nx - o.x) / dir.x;
        t0 = std::max(t0, std::min(a, b));
        t1 = std::min(t1, std::max(a, b));
    } else if (o.x < 0.0 || o.x > nx) {
        return std::numeric_limits<double>::infinity();
    }
    if (std::fabs(dir.y) > eps) {
        const double a = (0.0 - o.y) / dir.y;
        const double b = (ny - o.y) / dir.y;
        t0 = std::max(t0, std::min(a, b));
        t1 = std::min(t1, std::max(a, b));
    } else if (o.y < 0.0 || o.y > ny) {
        return std::numeric_limits<double>::infinity();
    }
    return t0 <= t1 ? t0 : std::numeric_limits<double>::infinity();
}

}  // namespace

ProblemSpec generate_phantom(const PhantomSpec& spec) {
    if (spec.nx < 1 || spec.ny < 1) raise(ErrorCode::InvalidArgument, "empty grid");
    if (spec.beamlets_per_beam < 1) {
        raise(ErrorCode::InvalidArgument, "beamlets_per_beam must be >= 1");
    }
    if (spec.beam_angles_deg.empty()) raise(ErrorCode::InvalidArgument, "no beam angles");
    if (spec.lateral_sigma <= 0.0) raise(ErrorCode::InvalidArgument, "lateral_sigma must be > 0");
    if (spec.attenuation_mu < 0.0) raise(ErrorCode::InvalidArgument, "attenuation_mu must be >= 0");
    if (spec.structures.empty()) raise(ErrorCode::InvalidArgument, "no structures");
    for (const auto& s : spec.structures) {
        if (s.regions.empty()) {
            raise(ErrorCode::InvalidArgument, "structure '" + s.name + "' has no regions");
        }
        for (const auto& r : s.regions) check_region_in_grid(r, spec.nx, spec.ny, s.name);
    }

    // Voxel assignment, PTVs first so shared voxels land in the PTV.
    std::vector<const PhantomStructure*> order;
    for (const auto& s : spec.structures) {
        if (s.kind == StructureKind::PTV) order.push_back(&s);
    }
    for (const auto& s : spec.structures) {
        if (s.kind == StructureKind::OAR) order.push_back(&s);
    }

    std::vector<std::vector<std::int64_t>> voxel_ids(order.size());
    for (std::int64_t iy = 0; iy < spec.ny; ++iy) {
        for (std::int64_t ix = 0; ix < spec.nx; ++ix) {
            const double x = static_cast<double>(ix) + 0.5;
            const double y = static_cast<double>(iy) + 0.5;
            for (std::size_t s = 0; s < order.size(); ++s) {
                const bool inside =
                    std::any_of(order[s]->regions.begin(), order[s]->regions.end(),
                                [&](const Region& r) { return region_contains(r, x, y); });
                if (inside) {
                    voxel_ids[s].push_back(iy * spec.nx + ix);
                    break;
                }
            }
        }
    }
    for (std::size_t s = 0; s < order.size(); ++s) {
        if (voxel_ids[s].empty()) {
            raise(ErrorCode::EmptyStructure,
                  "structure '" + order[s]->name + "' covers no voxel centers");
        }
    }

    // Beamlet rays span the padded bounding box of all structure voxels.
    double bb_lo_x = 1e300, bb_hi_x = -1e300, bb_lo_y = 1e300, bb_hi_y = -1e300;
    for (const auto& ids : voxel_ids) {
        for (std::int64_t id : ids) {
            const double x = static_cast<double>(id % spec.nx) + 0.5;
            const double y = static_cast<double>(id / spec.nx) + 0.5;
            bb_lo_x = std::min(bb_lo_x, x);
            bb_hi_x = std::max(bb_hi_x, x);
            bb_lo_y = std::min(bb_lo_y, y);
            bb_hi_y = std::max(bb_hi_y, y);
        }
    }
    const double pad = 0.5;
    bb_lo_x -= pad;
    bb_hi_x += pad;
    bb_lo_y -= pad;
    bb_hi_y += pad;

    const Vec2 center{0.5 * static_cast<double>(spec.nx), 0.5 * static_cast<double>(spec.ny)};
    const double source_dist =
        std::hypot(static_cast<double>(spec.nx), static_cast<double>(spec.ny));

    const std::int64_t beams = static_cast<std::int64_t>(spec.beam_angles_deg.size());
    const std::int64_t m = beams * spec.beamlets_per_beam;

    // Per-beamlet kernel values for every structure voxel; columns are
    // independent, so the loop parallelizes without changing the output.
    const std::size_t total_voxels = [&] {
        std::size_t t = 0;
        for (const auto& ids : voxel_ids) t += ids.size();
        return t;
    }();
    std::vector<std::vector<double>> column(static_cast<std::size_t>(m));
    std::vector<std::vector<double>> kernel_columns(static_cast<std::size_t>(m));

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
#endif
    for (std::int64_t col = 0; col < m; ++col) {
        const std::int64_t beam = col / spec.beamlets_per_beam;
        const std::int64_t k = col % spec.beamlets_per_beam;
        const Vec2 dir = beam_direction(spec.beam_angles_deg[static_cast<std::size_t>(beam)]);
        const Vec2 perp{-dir.y, dir.x};

        const Vec2 corners[4] = {{bb_lo_x, bb_lo_y}, {bb_lo_x, bb_hi_y},
                                 {bb_hi_x, bb_lo_y}, {bb_hi_x, bb_hi_y}};
        double s_lo = 1e300, s_hi = -1e300;
        for (const auto& c : corners) {
            const double s = (c.x - center.x) * perp.x + (c.y - center.y) * perp.y;
            s_lo = std::min(s_lo, s);
            s_hi = std::max(s_hi, s);
        }
        const double s_k = s_lo + (static_cast<double>(k) + 0.5) * (s_hi - s_lo) /
                                      static_cast<double>(spec.beamlets_per_beam);
        const Vec2 origin{center.x - source_dist * dir.x + s_k * perp.x,
                          center.y - source_dist * dir.y + s_k * perp.y};
        const double t_entry = grid_entry_parameter(origin, dir, static_cast<double>(spec.nx),
                                                    static_cast<double>(spec.ny));

        auto& vals = kernel_columns[static_cast<std::size_t>(col)];
        vals.assign(total_voxels, 0.0);
        if (!std::isfinite(t_entry)) continue;

        const double inv_two_sigma_sq = 1.0 / (2.0 * spec.lateral_sigma * spec.lateral_sigma);
        std::size_t flat = 0;
        for (const auto& ids : voxel_ids) {
            for (std::int64_t id : ids) {
                const double x = static_cast<double>(id % spec.nx) + 0.5;
                const double y = static_cast<double>(id / spec.nx) + 0.5;
                const double rel_x = x - origin.x;
                const double rel_y = y - origin.y;
                const double t = rel_x * dir.x + rel_y * dir.y;
                const double r = rel_x * perp.x + rel_y * perp.y;
                const double depth = std::max(0.0, t - t_entry);
                vals[flat++] = std::exp(-spec.attenuation_mu * depth) *
                               std::exp(-r * r * inv_two_sigma_sq);
            }
        }
    }

    // Per-column peak normalization to gy_per_mu, dropping relative dust.
    for (std::int64_t col = 0; col < m; ++col) {
        auto& vals = kernel_columns[static_cast<std::size_t>(col)];
        double peak = 0.0;
        for (double v : vals) peak = std::max(peak, v);
        auto& out = column[static_cast<std::size_t>(col)];
        out.assign(total_voxels, 0.0);
        if (peak <= 0.0) continue;
        const double cut = spec.sparsity_drop * peak;
        const double scale = spec.gy_per_mu / peak;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (vals[i] >= cut) out[i] = vals[i] * scale;
        }
    }

    // Assemble per-structure matrices and the problem.
    ProblemSpec problem;
    problem.lambda = spec.lambda;
    problem.beamlet_count = m;

    std::size_t flat_base = 0;
    for (std::size_t s = 0; s < order.size(); ++s) {
        const auto& ps = *order[s];
        const std::int64_t n = static_cast<std::int64_t>(voxel_ids[s].size());
        std::vector<Triplet> trips;
        for (std::int64_t col = 0; col < m; ++col) {
            const auto& vals = column[static_cast<std::size_t>(col)];
            for (std::int64_t row = 0; row < n; ++row) {
                const double v = vals[flat_base + static_cast<std::size_t>(row)];
                if (v > 0.0) trips.push_back({row, col, v});
            }
        }
        SparseMatrix mat = SparseMatrix::from_triplets(n, m, std::move(trips));

        StructureSpec sp;
        sp.name = ps.name;
        sp.kind = ps.kind;
        sp.voxel_count = n;
        sp.voxel_ids = voxel_ids[s];

        if (ps.kind == StructureKind::PTV) {
            PtvEntry e;
            e.structure = std::move(sp);
            e.matrix = std::move(mat);
            e.objective.d = {ps.prescription};
            e.objective.alpha = ps.alpha;
            e.constraints = ps.constraints;
            problem.ptvs.push_back(std::move(e));
        } else {
            OarEntry e;
            e.structure = std::move(sp);
            e.matrix = std::move(mat);
            e.constraints = ps.constraints;
            problem.oars.push_back(std::move(e));
        }
        flat_base += static_cast<std::size_t>(n);
    }

    return validate(std::move(problem));
}

PhantomSpec prostate_like_phantom() {
    PhantomSpec spec;
    spec.nx = 48;
    spec.ny = 48;
    spec.beam_angles_deg = {0, 52, 104, 156, 208, 260, 312};
    spec.beamlets_per_beam = 12;
    spec.lambda = 1e-8;

    PhantomStructure ptv;
    ptv.name = "ptv";
    ptv.kind = StructureKind::PTV;
    ptv.regions = {{Region::Shape::Disk, 24.0, 27.0, 6.5, 0.0, 0.0}};
    ptv.prescription = 81.0;
    ptv.alpha = 1.0;

    PhantomStructure oar;
    oar.name = "oar";
    oar.kind = StructureKind::OAR;
    oar.regions = {{Region::Shape::Disk, 24.0, 16.0, 5.0, 0.0, 0.0}};
    DoseVolumeConstraint dvc;
    dvc.direction = ConstraintDirection::Upper;
    dvc.d = {30.0};
    dvc.p = 30.0;
    dvc.alpha = 1.0;
    oar.constraints.push_back(dvc);

    spec.structures = {ptv, oar};
    return spec;
}

namespace {

json region_to_json(const Region& r) {
    json j;
    j["shape"] = r.shape == Region::Shape::Disk ? "disk" : "rectangle";
    j["cx"] = r.cx;
    j["cy"] = r.cy;
    if (r.shape == Region::Shape::Disk) {
        j["radius"] = r.radius;
    } else {
        j["width"] = r.width;
        j["height"] = r.height;
    }
    return j;
}

Region region_from_json(const json& j) {
    Region r;
    const std::string shape = j.at("shape").get<std::string>();
    if (shape == "disk") {
        r.shape = Region::Shape::Disk;
        r.radius = j.at("radius").get<double>();
    } else if (shape == "rectangle") {
        r.shape = Region::Shape::Rectangle;
        r.width = j.at("width").get<double>();
        r.height = j.at("height").get<double>();
    } else {
        raise(ErrorCode::ParseError, "unknown region shape '" + shape + "'");
    }
    r.cx = j.at("cx").get<double>();
    r.cy = j.at("cy").get<double>();
    return r;
}

json constraint_to_json(const DoseVolumeConstraint& c) {
    json j;
    j["direction"] = c.direction == ConstraintDirection::Upper ? "upper" : "lower";
    if (c.d.size() == 1) {
        j["d"] = c.d[0];
    } else {
        j["d"] = c.d;
    }
    j["p"] = c.p;
    j["alpha"] = c.alpha;
    return j;
}

DoseVolumeConstraint constraint_from_json(const json& j) {
    DoseVolumeConstraint c;
    const std::string dir = j.at("direction").get<std::string>();
    if (dir == "upper") {
        c.direction = ConstraintDirection::Upper;
    } else if (dir == "lower") {
        c.direction = ConstraintDirection::Lower;
    } else {
        raise(ErrorCode::ParseError, "unknown constraint direction '" + dir + "'");
    }
    if (j.at("d").is_array()) {
        c.d = j.at("d").get<std::vector<double>>();
    } else {
        c.d = {j.at("d").get<double>()};
    }
    c.p = j.at("p").get<double>();
    c.alpha = j.value("alpha", 1.0);
    return c;
}

}  // namespace

PhantomSpec phantom_spec_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        raise(ErrorCode::ParseError, std::string("invalid phantom spec JSON: ") + e.what());
    }
    try {
        PhantomSpec s;
        s.nx = j.at("grid").at(0).get<std::int64_t>();
        s.ny = j.at("grid").at(1).get<std::int64_t>();
        s.beam_angles_deg = j.at("beam_angles_deg").get<std::vector<double>>();
        s.beamlets_per_beam = j.at("beamlets_per_beam").get<std::int64_t>();
        s.attenuation_mu = j.value("attenuation_mu", 0.05);
        s.lateral_sigma = j.value("lateral_sigma", 1.0);
        s.gy_per_mu = j.value("gy_per_mu", 0.01);
        s.sparsity_drop = j.value("sparsity_drop", 1e-4);
        s.lambda = j.value("lambda", 1e-8);
        s.seed = j.value("seed", 0ULL);
        for (const auto& sj : j.at("structures")) {
            PhantomStructure ps;
            ps.name = sj.at("name").get<std::string>();
            const std::string kind = sj.at("kind").get<std::string>();
            if (kind != "PTV" && kind != "OAR") {
                raise(ErrorCode::ParseError, "unknown structure kind '" + kind + "'");
            }
            ps.kind = kind == "PTV" ? StructureKind::PTV : StructureKind::OAR;
            if (sj.contains("regions")) {
                for (const auto& rj : sj.at("regions")) {
                    ps.regions.push_back(region_from_json(rj));
                }
            } else {
                ps.regions.push_back(region_from_json(sj.at("region")));
            }
            ps.prescription = sj.value("prescription", 0.0);
            ps.alpha = sj.value("alpha", 1.0);
            if (sj.contains("constraints")) {
                for (const auto& cj : sj.at("constraints")) {
                    ps.constraints.push_back(constraint_from_json(cj));
                }
            }
            s.structures.push_back(std::move(ps));
        }
        return s;
    } catch (const json::exception& e) {
        raise(ErrorCode::ParseError, std::string("invalid phantom spec: ") + e.what());
    }
}

void phantom_spec_to_json_file(const PhantomSpec& spec, const std::string& path) {
    json j;
    j["grid"] = {spec.nx, spec.ny};
    j["beam_angles_deg"] = spec.beam_angles_deg;
    j["beamlets_per_beam"] = spec.beamlets_per_beam;
    j["attenuation_mu"] = spec.attenuation_mu;
    j["lateral_sigma"] = spec.lateral_sigma;
    j["gy_per_mu"] = spec.gy_per_mu;
    j["sparsity_drop"] = spec.sparsity_drop;
    j["lambda"] = spec.lambda;
    j["seed"] = spec.seed;
    j["structures"] = json::array();
    for (const auto& s : spec.structures) {
        json sj;
        sj["name"] = s.name;
        sj["kind"] = s.kind == StructureKind::PTV ? "PTV" : "OAR";
        if (s.regions.size() == 1) {
            sj["region"] = region_to_json(s.regions.front());
        } else {
            sj["regions"] = json::array();
            for (const auto& r : s.regions) sj["regions"].push_back(region_to_json(r));
        }
        if (s.kind == StructureKind::PTV) {
            sj["prescription"] = s.prescription;
            sj["alpha"] = s.alpha;
        }
        if (!s.constraints.empty()) {
            sj["constraints"] = json::array();
            for (const auto& c : s.constraints) sj["constraints"].push_back(constraint_to_json(c));
        }
        j["structures"].push_back(std::move(sj));
    }
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

SparseMatrix load_dose_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open '" + path + "'");

    std::string line;
    std::int64_t rows = -1, cols = -1, nnz = -1;
    std::vector<Triplet> trips;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        if (rows < 0) {
            if (!(ls >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
                raise(ErrorCode::ParseError,
                      path + ":" + std::to_string(lineno) + ": bad header, expected 'rows cols nnz'");
            }
            trips.reserve(static_cast<std::size_t>(nnz));
            continue;
        }
        Triplet t;
        if (!(ls >> t.row >> t.col >> t.value)) {
            raise(ErrorCode::ParseError,
                  path + ":" + std::to_string(lineno) + ": bad entry, expected 'row col value'");
        }
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
            raise(ErrorCode::IndexOutOfRange,
                  path + ":" + std::to_string(lineno) + ": index outside matrix");
        }
        if (t.value < 0.0) {
            raise(ErrorCode::NegativeEntry,
                  path + ":" + std::to_string(lineno) + ": dose matrix entries must be >= 0");
        }
        trips.push_back(t);
    }
    if (rows < 0) raise(ErrorCode::ParseError, path + ": missing header");
    if (static_cast<std::int64_t>(trips.size()) != nnz) {
        raise(ErrorCode::ParseError, path + ": header announces " + std::to_string(nnz) +
                                         " entries, found " + std::to_string(trips.size()));
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(trips));
}

void save_dose_matrix(const SparseMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
    out << "# dose-influence matrix, 0-based 'row col value' triplets\n";
    out << m.rows() << " " << m.cols() << " " << m.nnz() << "\n";
    char buf[64];
    for (const auto& t : m.to_triplets()) {
        std::snprintf(buf, sizeof(buf), "%.17g", t.value);
        out << t.row << " " << t.col << " " << buf << "\n";
    }
    if (!out) raise(ErrorCode::IoError, "write failed for '" + path + "'");
}

namespace {

constexpr int kSchemaVersion = 1;

std::string matrix_filename(std::size_t index, const std::string& name) {
    std::string clean;
    for (char c : name) {
        clean += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
    }
    return "s" + std::to_string(index) + "_" + clean + ".dmx";
}

json structure_to_json(const StructureSpec& s, const std::string& matrix_file) {
    json j;
    j["name"] = s.name;
    j["kind"] = s.kind == StructureKind::PTV ? "PTV" : "OAR";
    j["voxel_count"] = s.voxel_count;
    if (!s.voxel_ids.empty()) j["voxel_ids"] = s.voxel_ids;
    j["matrix"] = matrix_file;
    return j;
}

StructureSpec structure_from_json(const json& j) {
    StructureSpec s;
    s.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    s.kind = kind == "PTV" ? StructureKind::PTV : StructureKind::OAR;
    s.voxel_count = j.at("voxel_count").get<std::int64_t>();
    if (j.contains("voxel_ids")) s.voxel_ids = j.at("voxel_ids").get<std::vector<std::int64_t>>();
    return s;
}

json dose_vector_to_json(const std::vector<double>& d) {
    bool uniform = true;
    for (double v : d) {
        if (v != d[0]) {
            uniform = false;
            break;
        }
    }
    if (uniform && !d.empty()) return json(d[0]);
    return json(d);
}

std::vector<double> dose_vector_from_json(const json& j) {
    if (j.is_array()) return j.get<std::vector<double>>();
    return {j.get<double>()};
}

}  // namespace

void save_problem(const ProblemSpec& problem, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) raise(ErrorCode::IoError, "cannot create directory '" + dir + "'");

    json j;
    j["schema_version"] = kSchemaVersion;
    j["lambda"] = problem.lambda;
    j["beamlet_count"] = problem.beamlet_count;
    j["structures"] = json::array();

    std::size_t index = 0;
    auto add_matrix = [&](const StructureSpec& s, const SparseMatrix& m) {
        const std::string file = matrix_filename(index, s.name);
        save_dose_matrix(m, (fs::path(dir) / file).string());
        return structure_to_json(s, file);
    };

    for (const auto& p : problem.ptvs) {
        json sj = add_matrix(p.structure, p.matrix);
        sj["objective"] = {{"d", dose_vector_to_json(p.objective.d)},
                           {"alpha", p.objective.alpha}};
        if (!p.constraints.empty()) {
            sj["constraints"] = json::array();
            for (const auto& c : p.constraints) sj["constraints"].push_back(constraint_to_json(c));
        }
        j["structures"].push_back(std::move(sj));
        ++index;
    }
    for (const auto& o : problem.oars) {
        json sj = add_matrix(o.structure, o.matrix);
        sj["constraints"] = json::array();
        for (const auto& c : o.constraints) sj["constraints"].push_back(constraint_to_json(c));
        j["structures"].push_back(std::move(sj));
        ++index;
    }

    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) raise(ErrorCode::IoError, "cannot write manifest in '" + dir + "'");
    out << j.dump(2) << "\n";
    if (!out) raise(ErrorCode::IoError, "manifest write failed in '" + dir + "'");
}

ProblemSpec load_problem(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest);
    if (!in) raise(ErrorCode::IoError, "cannot open '" + manifest.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        raise(ErrorCode::ParseError, std::string("invalid manifest: ") + e.what());
    }

    if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer() ||
        j.at("schema_version").get<int>() != kSchemaVersion) {
        raise(ErrorCode::SchemaVersionMismatch,
              "manifest schema version is not " + std::to_string(kSchemaVersion));
    }

    try {
        ProblemSpec problem;
        problem.lambda = j.at("lambda").get<double>();
        problem.beamlet_count = j.at("beamlet_count").get<std::int64_t>();
        for (const auto& sj : j.at("structures")) {
            StructureSpec s = structure_from_json(sj);
            SparseMatrix m =
                load_dose_matrix((fs::path(dir) / sj.at("matrix").get<std::string>()).string());
            std::vector<DoseVolumeConstraint> cons;
            if (sj.contains("constraints")) {
                for (const auto& cj : sj.at("constraints")) {
                    cons.push_back(constraint_from_json(cj));
                }
            }
            if (s.kind == StructureKind::PTV) {
                PtvEntry e;
                e.structure = std::move(s);
                e.matrix = std::move(m);
                e.objective.d = dose_vector_from_json(sj.at("objective").at("d"));
                e.objective.alpha = sj.at("objective").at("alpha").get<double>();
                e.constraints = std::move(cons);
                problem.ptvs.push_back(std::move(e));
            } else {
                OarEntry e;
                e.structure = std::move(s);
                e.matrix = std::move(m);
                e.constraints = std::move(cons);
                problem.oars.push_back(std::move(e));
            }
        }
        return validate(std::move(problem));
    } catch (const json::exception& e) {
        raise(ErrorCode::ParseError, std::string("invalid manifest: ") + e.what());
    }
}

}  // namespace fmo
