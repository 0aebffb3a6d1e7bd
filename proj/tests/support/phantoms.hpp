#pragma once

// Deterministic phantom factories shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <random>

#include "fmo/dosegen.hpp"
#include "fmo/model.hpp"

namespace testsupport {

struct PhantomKnobs {
    std::int64_t grid = 44;
    double lambda = 1e-6;
    double oar_alpha = 1.0;
    bool small_oar = false;  // shrink the OAR for derivative checks
};

/// Random PTV disk near the grid center with one adjacent constrained OAR
/// disk; geometry, beam count, and constraint parameters all derive from the
/// seed.
inline fmo::ProblemSpec random_phantom(std::uint64_t seed, const PhantomKnobs& knobs = {}) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 12345);
    auto uniform = [&](double lo, double hi) {
        return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    };
    auto pick_int = [&](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };

    fmo::PhantomSpec spec;
    spec.nx = knobs.grid;
    spec.ny = knobs.grid;
    spec.lambda = knobs.lambda;
    const int beams = pick_int(3, 7);
    for (int b = 0; b < beams; ++b) {
        spec.beam_angles_deg.push_back(360.0 * b / beams);
    }
    spec.beamlets_per_beam = pick_int(6, 10);

    const double cx = knobs.grid / 2.0 + uniform(-2.0, 2.0);
    const double cy = knobs.grid / 2.0 + uniform(-2.0, 2.0);
    const double r_ptv = uniform(4.0, 6.0);
    const double r_oar = knobs.small_oar ? uniform(2.0, 2.6) : uniform(3.0, 5.0);
    const double gap = uniform(0.5, 2.0);
    const double angle = uniform(0.0, 2.0 * 3.14159265358979);
    const double dist = r_ptv + r_oar + gap;

    fmo::PhantomStructure ptv;
    ptv.name = "ptv";
    ptv.kind = fmo::StructureKind::PTV;
    ptv.regions = {{fmo::Region::Shape::Disk, cx, cy, r_ptv, 0.0, 0.0}};
    ptv.prescription = 81.0;
    ptv.alpha = 1.0;

    fmo::PhantomStructure oar;
    oar.name = "oar";
    oar.kind = fmo::StructureKind::OAR;
    double ox = cx + dist * std::cos(angle);
    double oy = cy + dist * std::sin(angle);
    const double margin = r_oar + 1.0;
    ox = std::min(std::max(ox, margin), knobs.grid - margin);
    oy = std::min(std::max(oy, margin), knobs.grid - margin);
    oar.regions = {{fmo::Region::Shape::Disk, ox, oy, r_oar, 0.0, 0.0}};

    fmo::DoseVolumeConstraint dvc;
    dvc.direction = fmo::ConstraintDirection::Upper;
    dvc.d = {uniform(20.0, 35.0)};
    dvc.p = 10.0 * pick_int(2, 5);
    dvc.alpha = knobs.oar_alpha;
    oar.constraints.push_back(dvc);

    spec.structures = {ptv, oar};
    return fmo::generate_phantom(spec);
}

/// Two-beamlet, three-voxel instance reproducing the introductory geometry:
/// one PTV voxel flanked by two OAR voxels, each sitting on one beamlet's
/// axis, so each beamlet overdoses a different OAR voxel. The dose--volume
/// constraint lets one of the two exceed 20 Gy, which makes the feasible set
/// the union of two pieces with one local minimum each.
inline fmo::ProblemSpec toy_two_beamlet(double oar_alpha = 10.0) {
    fmo::PhantomSpec spec;
    spec.nx = 12;
    spec.ny = 12;
    spec.beam_angles_deg = {270.0};
    spec.beamlets_per_beam = 2;
    spec.lambda = 5e-6;

    fmo::PhantomStructure ptv;
    ptv.name = "tumor";
    ptv.kind = fmo::StructureKind::PTV;
    ptv.regions = {{fmo::Region::Shape::Rectangle, 6.5, 6.5, 0.0, 1.0, 1.0}};
    ptv.prescription = 81.0;
    ptv.alpha = 1.0;

    // v1 near the first beamlet's axis (deep), v2 near the second (shallow)
    fmo::PhantomStructure oar;
    oar.name = "rectum";
    oar.kind = fmo::StructureKind::OAR;
    oar.regions = {{fmo::Region::Shape::Rectangle, 5.5, 4.5, 0.0, 1.0, 1.0},
                   {fmo::Region::Shape::Rectangle, 7.5, 8.5, 0.0, 1.0, 1.0}};
    fmo::DoseVolumeConstraint dvc;
    dvc.direction = fmo::ConstraintDirection::Upper;
    dvc.d = {20.0};
    dvc.p = 50.0;
    dvc.alpha = oar_alpha;
    oar.constraints.push_back(dvc);

    spec.structures = {ptv, oar};
    return fmo::generate_phantom(spec);
}

/// Prostate-like phantom for the end-to-end runs (reweighting, comparisons).
inline fmo::ProblemSpec prostate_like(double lambda = 1e-8) {
    fmo::PhantomSpec spec = fmo::prostate_like_phantom();
    spec.lambda = lambda;
    return fmo::generate_phantom(spec);
}

}  // namespace testsupport
