#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cos2a/cnmf.hpp"
#include "cos2a/cube.hpp"
#include "cos2a/response.hpp"
#include "cos2a/rough.hpp"
#include "cos2a/sensor.hpp"

namespace cos2a {

inline constexpr const char* kVersion = "1.0.0";

using OrderedJson = nlohmann::ordered_json;

struct PipelineConfig {
    double lambda = 2.0;
    double alpha = 0.002;
    double beta = 0.002;
    double eta = 1e-4;
    Index r = 2;
    std::uint64_t seed = 0;
    std::string sensor_profile; // empty: the product's own band table

    double grid_start_nm = 400.0;
    double grid_end_nm = 2500.0;
    Index grid_bands = 172;

    // Identity prior: the rough solution keeps the exact r x r block means of
    // the spectrally upsampled product.
    UnfoldConfig unfold{4, 1.0, DenoiserSpec::identity(), InitMode::min_norm, true};
    std::string denoiser_weights; // required when unfold.denoiser is conv
    RidgeConfig ridge;
    CnmfConfig cnmf;

    void validate() const;

    std::vector<double> target_wavelengths() const;
    // The solver configs with the shared fields (eta, r, seed, alpha/2,
    // beta/2) pushed down.
    RidgeConfig effective_ridge() const;
    CnmfConfig effective_cnmf() const;
    UnfoldConfig effective_unfold() const;
};

OrderedJson config_to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const OrderedJson& j);
PipelineConfig load_config(const std::filesystem::path& path);

// 64-bit FNV-1a of the canonical config JSON, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

// Band table of the product as a profile, or the configured profile file.
SensorProfile resolve_profile(const MultiResProduct& product, const PipelineConfig& cfg);

struct StageTimings {
    double rough = 0.0;
    double response = 0.0;
    double duality = 0.0;
    double cnmf = 0.0;
    double reconstruct = 0.0;
};

struct SuperresResult {
    HyperCube cube;
    Matrix d_tilde;
    RoughResult rough;
    ResponseEstimate response;
    CnmfResult cnmf;
    StageTimings timings;
};

Matrix run_rough_stage(const MultiResProduct& product, const SensorProfile& profile, const PipelineConfig& cfg,
                       RoughResult* diagnostics = nullptr);

// Full chain: rough solve, response estimate, duality transform, coupled NMF,
// reconstruction. Errors carry the failing stage's name.
SuperresResult run_superres(const MultiResProduct& product, const PipelineConfig& cfg);

// Minimum-norm spectral upsampling of the whole product; the reference the
// pipeline is measured against.
HyperCube naive_baseline(const MultiResProduct& product, const PipelineConfig& cfg);

OrderedJson build_manifest(const SuperresResult& result, const PipelineConfig& cfg, const std::string& input,
                           int threads);

// Writes yh.cube, d_tilde.csv, objective_trace.csv and manifest.json.
void write_superres_artifacts(const SuperresResult& result, const PipelineConfig& cfg,
                              const std::filesystem::path& out_dir, const std::string& input, int threads);

struct CalibrationResult {
    HyperCube cube;
    std::vector<double> gains;
    Index zero_reference_pixels = 0; // pixels whose sampled reference spectrum is all zero; gain 0
};

// Per pixel, gamma* = argmin_{gamma >= 0} ||gamma a - s|| with a the
// reference spectrum sampled at the product's band centres and s the
// product pixel; the output is gamma* times the reference spectrum.
CalibrationResult calibrate_reference(const HyperCube& reference, const MultiResProduct& product);

} // namespace cos2a
