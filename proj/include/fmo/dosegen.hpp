#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmo/model.hpp"

namespace fmo {

struct Region {
    enum class Shape { Disk, Rectangle };
    Shape shape = Shape::Disk;
    double cx = 0.0;  // voxel units
    double cy = 0.0;
    double radius = 0.0;   // disk
    double width = 0.0;    // rectangle
    double height = 0.0;
};

struct PhantomStructure {
    std::string name;
    StructureKind kind = StructureKind::OAR;
    // A structure is the union of its regions (anatomy is rarely convex).
    std::vector<Region> regions;
    double prescription = 0.0;  // Gy, PTVs only
    double alpha = 1.0;         // objective weight, PTVs only
    std::vector<DoseVolumeConstraint> constraints;
};

/// Synthetic 2-D phantom: pencil-beam dose model on an nx-by-ny voxel grid.
/// A voxel at ray depth t and lateral distance r from a beamlet axis receives
/// exp(-attenuation_mu * t) * exp(-r^2 / (2 lateral_sigma^2)); each beamlet
/// column is scaled so its peak equals gy_per_mu, and entries below
/// sparsity_drop times the column peak are dropped.
struct PhantomSpec {
    std::int64_t nx = 0;
    std::int64_t ny = 0;
    std::vector<PhantomStructure> structures;
    std::vector<double> beam_angles_deg;
    std::int64_t beamlets_per_beam = 1;
    double attenuation_mu = 0.05;  // per voxel
    double lateral_sigma = 1.0;    // voxel units
    double gy_per_mu = 0.01;       // column peak calibration (100 MU ~ 1 Gy)
    double sparsity_drop = 1e-4;
    double lambda = 1e-8;
    std::uint64_t seed = 0;
};

/// Builds the dose-influence matrices and returns a validated ProblemSpec.
/// Deterministic: the same spec and seed give a bit-identical problem.
/// Overlapping voxels go to the first containing structure, PTVs first.
ProblemSpec generate_phantom(const PhantomSpec& spec);

/// The bundled prostate-like example: central PTV disk, adjacent OAR disk,
/// seven equally spaced beams from 0 to 312 degrees.
PhantomSpec prostate_like_phantom();

PhantomSpec phantom_spec_from_json_file(const std::string& path);
void phantom_spec_to_json_file(const PhantomSpec& spec, const std::string& path);

/// Triplet text format: optional '#' comment lines, a "rows cols nnz" header,
/// then nnz lines "row col value" with 0-based indices. Duplicate (row, col)
/// pairs are summed.
SparseMatrix load_dose_matrix(const std::string& path);
void save_dose_matrix(const SparseMatrix& m, const std::string& path);

/// Problem directory: manifest.json plus one triplet file per structure.
/// load(save(P)) reproduces P bit-exactly.
void save_problem(const ProblemSpec& problem, const std::string& dir);
ProblemSpec load_problem(const std::string& dir);

}  // namespace fmo
