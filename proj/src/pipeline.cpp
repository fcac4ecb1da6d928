#include "cos2a/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cos2a/error.hpp"

namespace cos2a {
namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    const std::string tag = std::string(name) + ": ";
    try {
        return f();
    } catch (const InputError& e) {
        throw InputError(tag + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(tag + e.what());
    } catch (const ContractViolation& e) {
        throw ContractViolation(tag + e.what());
    }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void reject_unknown(const OrderedJson& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw InputError("config section '" + where + "' must be an object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) throw InputError("unknown config key '" + where + item.key() + "'");
    }
}

template <class T>
void read_field(const OrderedJson& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InputError("config key '" + where + key + "' has the wrong type");
    }
}

} // namespace

void PipelineConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InputError("alpha and beta must be >= 0");
    if (lambda != 2.0) {
        throw InputError("lambda must be 2: the coupled-NMF form carries the Q-norm term with unit weight");
    }
    if (!(eta >= 0.0)) throw InputError("eta must be >= 0");
    if (r < 1) throw InputError("r must be >= 1");
    if (grid_bands < 2 || !(grid_end_nm > grid_start_nm)) throw InputError("target grid must be increasing");
    if (unfold.denoiser.kind == DenoiserSpec::Kind::quadratic) {
        throw InputError("the quadratic denoiser needs an anchor image and is not available in the pipeline");
    }
    if (unfold.denoiser.kind == DenoiserSpec::Kind::conv && denoiser_weights.empty()) {
        throw InputError("conv denoiser requires unfold.weights");
    }
    if (unfold.denoiser.kind != DenoiserSpec::Kind::conv) unfold.validate();
    effective_ridge().validate();
    effective_cnmf().validate();
}

std::vector<double> PipelineConfig::target_wavelengths() const {
    return uniform_wavelengths(grid_start_nm, grid_end_nm, grid_bands);
}

RidgeConfig PipelineConfig::effective_ridge() const {
    RidgeConfig out = ridge;
    out.eta = eta;
    out.seed = seed;
    return out;
}

CnmfConfig PipelineConfig::effective_cnmf() const {
    CnmfConfig out = cnmf;
    out.lambda1 = 0.5 * alpha;
    out.lambda2 = 0.5 * beta;
    out.r = r;
    out.seed = seed;
    return out;
}

UnfoldConfig PipelineConfig::effective_unfold() const {
    UnfoldConfig out = unfold;
    if (out.denoiser.kind == DenoiserSpec::Kind::conv) {
        out.denoiser = DenoiserSpec::conv(std::make_shared<const ResidualNet>(load_conv_weights(denoiser_weights)));
    }
    return out;
}

OrderedJson config_to_json(const PipelineConfig& cfg) {
    OrderedJson j;
    j["lambda"] = cfg.lambda;
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["eta"] = cfg.eta;
    j["r"] = cfg.r;
    j["seed"] = cfg.seed;
    j["sensor_profile"] = cfg.sensor_profile;
    j["grid"] = {{"start_nm", cfg.grid_start_nm}, {"end_nm", cfg.grid_end_nm}, {"bands", cfg.grid_bands}};
    j["unfold"] = {{"stages", cfg.unfold.stages},
                   {"rho", cfg.unfold.rho},
                   {"denoiser", to_string(cfg.unfold.denoiser.kind)},
                   {"window", cfg.unfold.denoiser.window},
                   {"weights", cfg.denoiser_weights},
                   {"init", to_string(cfg.unfold.init)},
                   {"clamp_output", cfg.unfold.clamp_output}};
    j["ridge"] = {{"max_iters", cfg.ridge.max_iters},
                  {"tol", cfg.ridge.tol},
                  {"opt_tol", cfg.ridge.opt_tol},
                  {"power_iters", cfg.ridge.power_iters}};
    j["cnmf"] = {{"n_endmembers", cfg.cnmf.n_endmembers}, {"outer_max", cfg.cnmf.outer_max},
                 {"outer_tol", cfg.cnmf.outer_tol},       {"inner_max", cfg.cnmf.inner_max},
                 {"inner_tol", cfg.cnmf.inner_tol},       {"power_iters", cfg.cnmf.power_iters}};
    return j;
}

PipelineConfig config_from_json(const OrderedJson& j) {
    PipelineConfig cfg;
    reject_unknown(j, {"lambda", "alpha", "beta", "eta", "r", "seed", "sensor_profile", "grid", "unfold", "ridge", "cnmf"},
                   "");
    read_field(j, "lambda", cfg.lambda, "");
    read_field(j, "alpha", cfg.alpha, "");
    read_field(j, "beta", cfg.beta, "");
    read_field(j, "eta", cfg.eta, "");
    read_field(j, "r", cfg.r, "");
    read_field(j, "seed", cfg.seed, "");
    read_field(j, "sensor_profile", cfg.sensor_profile, "");

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        reject_unknown(g, {"start_nm", "end_nm", "bands"}, "grid.");
        read_field(g, "start_nm", cfg.grid_start_nm, "grid.");
        read_field(g, "end_nm", cfg.grid_end_nm, "grid.");
        read_field(g, "bands", cfg.grid_bands, "grid.");
    }
    if (j.contains("unfold")) {
        const auto& u = j["unfold"];
        reject_unknown(u, {"stages", "rho", "denoiser", "window", "weights", "init", "clamp_output"}, "unfold.");
        read_field(u, "stages", cfg.unfold.stages, "unfold.");
        read_field(u, "rho", cfg.unfold.rho, "unfold.");
        std::string kind = to_string(cfg.unfold.denoiser.kind);
        read_field(u, "denoiser", kind, "unfold.");
        cfg.unfold.denoiser.kind = parse_denoiser_kind(kind);
        read_field(u, "window", cfg.unfold.denoiser.window, "unfold.");
        read_field(u, "weights", cfg.denoiser_weights, "unfold.");
        std::string init = to_string(cfg.unfold.init);
        read_field(u, "init", init, "unfold.");
        cfg.unfold.init = parse_init_mode(init);
        read_field(u, "clamp_output", cfg.unfold.clamp_output, "unfold.");
    }
    if (j.contains("ridge")) {
        const auto& rj = j["ridge"];
        reject_unknown(rj, {"max_iters", "tol", "opt_tol", "power_iters"}, "ridge.");
        read_field(rj, "max_iters", cfg.ridge.max_iters, "ridge.");
        read_field(rj, "tol", cfg.ridge.tol, "ridge.");
        read_field(rj, "opt_tol", cfg.ridge.opt_tol, "ridge.");
        read_field(rj, "power_iters", cfg.ridge.power_iters, "ridge.");
    }
    if (j.contains("cnmf")) {
        const auto& c = j["cnmf"];
        reject_unknown(c, {"n_endmembers", "outer_max", "outer_tol", "inner_max", "inner_tol", "power_iters"}, "cnmf.");
        read_field(c, "n_endmembers", cfg.cnmf.n_endmembers, "cnmf.");
        read_field(c, "outer_max", cfg.cnmf.outer_max, "cnmf.");
        read_field(c, "outer_tol", cfg.cnmf.outer_tol, "cnmf.");
        read_field(c, "inner_max", cfg.cnmf.inner_max, "cnmf.");
        read_field(c, "inner_tol", cfg.cnmf.inner_tol, "cnmf.");
        read_field(c, "power_iters", cfg.cnmf.power_iters, "cnmf.");
    }
    cfg.ridge.eta = cfg.eta;
    cfg.ridge.seed = cfg.seed;
    cfg.cnmf = cfg.effective_cnmf();
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    OrderedJson j;
    try {
        j = OrderedJson::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const PipelineConfig& cfg) {
    const std::string text = config_to_json(cfg).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

SensorProfile resolve_profile(const MultiResProduct& product, const PipelineConfig& cfg) {
    SensorProfile profile;
    if (cfg.sensor_profile.empty()) {
        profile = SensorProfile{"product", "band table", product.bands()};
    } else {
        profile = load_profile(cfg.sensor_profile);
    }
    if (profile.bands.size() != product.bands().size()) {
        throw InputError("sensor profile has " + std::to_string(profile.bands.size()) + " bands, product has " +
                         std::to_string(product.bands().size()));
    }
    profile.validate();
    return profile;
}

Matrix run_rough_stage(const MultiResProduct& product, const SensorProfile& profile, const PipelineConfig& cfg,
                       RoughResult* diagnostics) {
    const Matrix d = build_response(profile, cfg.target_wavelengths());
    RoughResult rough = run_unfolded_admm(product.values(), d, product.height(), product.width(),
                                          cfg.effective_unfold());
    Matrix y_de = rough.y_de;
    if (diagnostics) *diagnostics = std::move(rough);
    return y_de;
}

SuperresResult run_superres(const MultiResProduct& product, const PipelineConfig& cfg) {
    stage("config", [&] { cfg.validate(); });
    const SensorProfile profile = stage("config", [&] { return resolve_profile(product, cfg); });

    using clock = std::chrono::steady_clock;
    StageTimings t;

    auto t0 = clock::now();
    RoughResult rough;
    Matrix y_de = stage("rough", [&] { return run_rough_stage(product, profile, cfg, &rough); });
    t.rough = seconds_since(t0);

    const Matrix y_s_hi = product.high_res_view();
    t0 = clock::now();
    ResponseEstimate response = stage("response", [&] { return estimate_response(y_de, y_s_hi, cfg.effective_ridge()); });
    t.response = seconds_since(t0);

    t0 = clock::now();
    const CnmfInputs inputs = stage("duality", [&] {
        return duality_transform(y_de, y_s_hi, response.response, product.height(), product.width(), cfg.r);
    });
    t.duality = seconds_since(t0);

    t0 = clock::now();
    CnmfResult cnmf = stage("cnmf", [&] { return solve_cnmf(inputs, cfg.effective_cnmf()); });
    t.cnmf = seconds_since(t0);

    t0 = clock::now();
    HyperCube cube = stage("reconstruct", [&] {
        return reconstruct(cnmf.fac, product.height(), product.width(), cfg.target_wavelengths());
    });
    t.reconstruct = seconds_since(t0);

    Matrix d_tilde = response.response;
    return SuperresResult{std::move(cube), std::move(d_tilde), std::move(rough), std::move(response), std::move(cnmf),
                          t};
}

HyperCube naive_baseline(const MultiResProduct& product, const PipelineConfig& cfg) {
    const SensorProfile profile = resolve_profile(product, cfg);
    const Matrix d = build_response(profile, cfg.target_wavelengths());
    return HyperCube::from_matrix(product.height(), product.width(), cfg.target_wavelengths(),
                                  spectral_upsample_init(product.values(), d, InitMode::min_norm));
}

OrderedJson build_manifest(const SuperresResult& result, const PipelineConfig& cfg, const std::string& input,
                           int threads) {
    OrderedJson m;
    m["tool"] = "cos2a";
    m["version"] = kVersion;
    m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION);
    m["input"] = input;
    m["threads"] = threads;
    m["config_hash"] = config_hash(cfg);
    m["config"] = config_to_json(cfg);
    const CnmfConfig c = cfg.effective_cnmf();
    m["derived"] = {{"lambda1", c.lambda1}, {"lambda2", c.lambda2}};

    OrderedJson stages = OrderedJson::array();
    for (const auto& s : result.rough.stages) {
        stages.push_back({{"stage", s.stage},
                          {"primal_residual", s.primal_residual},
                          {"subproblem_residual", s.subproblem_residual}});
    }
    m["rough"] = {{"stages", stages}};
    m["response"] = {{"iterations", result.response.iterations},
                     {"objective", result.response.objective},
                     {"optimality", result.response.optimality},
                     {"certified", result.response.certified},
                     {"underdetermined", result.response.underdetermined}};
    m["cnmf"] = {{"outer_iterations", result.cnmf.outer_iterations},
                 {"converged", result.cnmf.converged},
                 {"final_objective", result.cnmf.trace.empty() ? 0.0 : result.cnmf.trace.back().objective},
                 {"reseeded_columns", result.cnmf.reseeded_columns},
                 {"random_init_columns", result.cnmf.random_init_columns}};
    m["timings_s"] = {{"rough", result.timings.rough},
                      {"response", result.timings.response},
                      {"duality", result.timings.duality},
                      {"cnmf", result.timings.cnmf},
                      {"reconstruct", result.timings.reconstruct}};
    return m;
}

void write_superres_artifacts(const SuperresResult& result, const PipelineConfig& cfg,
                              const std::filesystem::path& out_dir, const std::string& input, int threads) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw InputError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    write_cube(result.cube, out_dir / "yh.cube");
    write_matrix_csv(result.d_tilde, out_dir / "d_tilde.csv");
    write_trace_csv(result.cnmf.trace, out_dir / "objective_trace.csv");
    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    if (!out) throw InputError("cannot write manifest in " + out_dir.string());
    out << build_manifest(result, cfg, input, threads).dump(2) << "\n";
}

CalibrationResult calibrate_reference(const HyperCube& reference, const MultiResProduct& product) {
    if (reference.height() != product.height() || reference.width() != product.width()) {
        throw InputError("reference cube and product cover different grids");
    }
    const SensorProfile profile{"product", "band table", product.bands()};
    const auto rows = nearest_band_indices(reference.wavelengths_nm(), profile);

    CalibrationResult out{reference, {}, 0};
    out.gains.resize(static_cast<std::size_t>(reference.pixels()));
    BandMatrix scaled = reference.values();
    for (Index j = 0; j < reference.pixels(); ++j) {
        Vector a(static_cast<Index>(rows.size()));
        for (std::size_t b = 0; b < rows.size(); ++b) a(static_cast<Index>(b)) = reference.values()(rows[b], j);
        double gamma = 0.0;
        if (a.squaredNorm() == 0.0) {
            ++out.zero_reference_pixels;
        } else {
            gamma = calibrate_gain(a, product.values().col(j));
        }
        out.gains[static_cast<std::size_t>(j)] = gamma;
        scaled.col(j) *= gamma;
    }
    out.cube = HyperCube(reference.height(), reference.width(), reference.wavelengths_nm(), std::move(scaled));
    return out;
}

} // namespace cos2a
