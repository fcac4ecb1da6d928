#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "cos2a/error.hpp"
#include "cos2a/metrics.hpp"
#include "cos2a/pipeline.hpp"
#include "cos2a/response.hpp"
#include "cos2a/scene.hpp"
#include "cos2a/sensor.hpp"

namespace fs = std::filesystem;
using namespace cos2a;

namespace {

enum class Kind { number, text, boolean };

struct Override {
    const char* flag;
    std::vector<const char*> path;
    Kind kind;
    std::string value;
    CLI::Option* option = nullptr;
};

std::vector<Override> config_overrides() {
    return {
        {"lambda", {"lambda"}, Kind::number, {}},
        {"alpha", {"alpha"}, Kind::number, {}},
        {"beta", {"beta"}, Kind::number, {}},
        {"eta", {"eta"}, Kind::number, {}},
        {"r", {"r"}, Kind::number, {}},
        {"seed", {"seed"}, Kind::number, {}},
        {"sensor-profile", {"sensor_profile"}, Kind::text, {}},
        {"grid-start-nm", {"grid", "start_nm"}, Kind::number, {}},
        {"grid-end-nm", {"grid", "end_nm"}, Kind::number, {}},
        {"grid-bands", {"grid", "bands"}, Kind::number, {}},
        {"unfold-stages", {"unfold", "stages"}, Kind::number, {}},
        {"unfold-rho", {"unfold", "rho"}, Kind::number, {}},
        {"unfold-denoiser", {"unfold", "denoiser"}, Kind::text, {}},
        {"unfold-window", {"unfold", "window"}, Kind::number, {}},
        {"unfold-weights", {"unfold", "weights"}, Kind::text, {}},
        {"unfold-init", {"unfold", "init"}, Kind::text, {}},
        {"unfold-clamp-output", {"unfold", "clamp_output"}, Kind::boolean, {}},
        {"ridge-max-iters", {"ridge", "max_iters"}, Kind::number, {}},
        {"ridge-tol", {"ridge", "tol"}, Kind::number, {}},
        {"ridge-opt-tol", {"ridge", "opt_tol"}, Kind::number, {}},
        {"ridge-power-iters", {"ridge", "power_iters"}, Kind::number, {}},
        {"cnmf-n-endmembers", {"cnmf", "n_endmembers"}, Kind::number, {}},
        {"cnmf-outer-max", {"cnmf", "outer_max"}, Kind::number, {}},
        {"cnmf-outer-tol", {"cnmf", "outer_tol"}, Kind::number, {}},
        {"cnmf-inner-max", {"cnmf", "inner_max"}, Kind::number, {}},
        {"cnmf-inner-tol", {"cnmf", "inner_tol"}, Kind::number, {}},
        {"cnmf-power-iters", {"cnmf", "power_iters"}, Kind::number, {}},
    };
}

struct ConfigOptions {
    std::string config_path;
    std::vector<Override> overrides = config_overrides();

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config JSON");
        for (auto& o : overrides) {
            o.option = cmd->add_option(std::string("--") + o.flag, o.value, "overrides the config field");
        }
    }

    PipelineConfig resolve() const {
        OrderedJson j = OrderedJson::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw InputError("cannot open config " + config_path);
            try {
                j = OrderedJson::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw InputError("config " + config_path + " is not valid JSON: " + e.what());
            }
        }
        for (const auto& o : overrides) {
            if (o.option->count() == 0) continue;
            OrderedJson* node = &j;
            for (std::size_t i = 0; i + 1 < o.path.size(); ++i) node = &(*node)[o.path[i]];
            OrderedJson value;
            if (o.kind == Kind::text) {
                value = o.value;
            } else {
                try {
                    value = OrderedJson::parse(o.value);
                } catch (const nlohmann::json::parse_error&) {
                    throw InputError("--" + std::string(o.flag) + ": cannot parse '" + o.value + "'");
                }
                const bool ok = o.kind == Kind::boolean ? value.is_boolean() : value.is_number();
                if (!ok) throw InputError("--" + std::string(o.flag) + ": bad value '" + o.value + "'");
            }
            (*node)[o.path.back()] = value;
        }
        return config_from_json(j);
    }
};

int resolve_threads(int flag) {
    int n = flag;
    if (n == 0) {
        if (const char* env = std::getenv("COS2A_THREADS"); env && *env) {
            try {
                n = std::stoi(env);
            } catch (const std::exception&) {
                throw InputError(std::string("COS2A_THREADS is not an integer: ") + env);
            }
        } else {
            n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
        }
    }
    if (n < 1) throw InputError("thread count must be >= 1");
    Eigen::setNbThreads(n);
    return n;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sentinel-2 to hyperspectral conversion toolkit"};
    app.require_subcommand(1);
    int threads_flag = 0;
    app.add_option("--threads", threads_flag, "worker threads (default: COS2A_THREADS, else hardware)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic low-rank hyperspectral scene");
    SceneSpec scene;
    std::string synth_out, truth_dir;
    synth->add_option("--out", synth_out, "output cube")->required();
    synth->add_option("--height", scene.height);
    synth->add_option("--width", scene.width);
    synth->add_option("--bands", scene.bands);
    synth->add_option("--n-endmembers", scene.n_endmembers);
    synth->add_option("--seed", scene.seed);
    synth->add_option("--noise-sigma", scene.noise_sigma);
    synth->add_option("--smoothness", scene.smoothness);
    synth->add_option("--spatial-scale", scene.spatial_scale);
    synth->add_option("--sharpness", scene.sharpness);
    synth->add_option("--pure-pixel", scene.pure_pixel);
    synth->add_option("--truth-dir", truth_dir, "also write endmembers.csv and abundances.csv here");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "simulate a multi-resolution product from a cube");
    std::string sim_in, sim_out, sim_profile;
    simulate->add_option("--input", sim_in, "hyperspectral cube")->required();
    simulate->add_option("--out", sim_out, "output product")->required();
    simulate->add_option("--sensor-profile", sim_profile, "sensor profile JSON (default: bundled Sentinel-2A)");

    // rough
    auto* rough = app.add_subcommand("rough", "deep rough solution by the unfolded solver");
    std::string rough_in, rough_out;
    ConfigOptions rough_cfg;
    rough->add_option("--input", rough_in, "product")->required();
    rough->add_option("--out", rough_out, "output cube")->required();
    rough_cfg.attach(rough);

    // estimate-response
    auto* estimate = app.add_subcommand("estimate-response", "estimate the 10 m spectral response");
    std::string est_in, est_rough, est_out;
    ConfigOptions est_cfg;
    estimate->add_option("--input", est_in, "product")->required();
    estimate->add_option("--rough", est_rough, "rough solution cube")->required();
    estimate->add_option("--out", est_out, "output CSV")->required();
    est_cfg.attach(estimate);

    // superres
    auto* superres = app.add_subcommand("superres", "full conversion of a product to a hyperspectral cube");
    std::string sr_in, sr_out;
    ConfigOptions sr_cfg;
    superres->add_option("--input", sr_in, "product")->required();
    superres->add_option("--out", sr_out, "output directory")->required();
    sr_cfg.attach(superres);

    // metrics
    auto* metrics = app.add_subcommand("metrics", "compare a cube against a reference");
    std::string m_ref, m_test, m_out;
    double m_runtime = 0.0;
    MetricsConfig mcfg;
    metrics->add_option("--ref", m_ref, "reference cube")->required();
    metrics->add_option("--test", m_test, "cube under test")->required();
    metrics->add_option("--out", m_out, "report JSON (default: stdout)");
    metrics->add_option("--runtime-s", m_runtime, "runtime recorded in the report");
    metrics->add_option("--psnr-cap-db", mcfg.psnr_cap_db);
    metrics->add_option("--peak", mcfg.peak);
    metrics->add_option("--ssim-window", mcfg.ssim_window);
    metrics->add_option("--ssim-sigma", mcfg.ssim_sigma);
    metrics->add_option("--ssim-k1", mcfg.ssim_k1);
    metrics->add_option("--ssim-k2", mcfg.ssim_k2);
    metrics->add_option("--dynamic-range", mcfg.dynamic_range);

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "rescale a reference cube to a product pixel by pixel");
    std::string c_ref, c_in, c_out, c_report;
    calibrate->add_option("--ref", c_ref, "reference cube")->required();
    calibrate->add_option("--input", c_in, "product")->required();
    calibrate->add_option("--out", c_out, "calibrated cube")->required();
    calibrate->add_option("--report", c_report, "per-pixel gains as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const int threads = resolve_threads(threads_flag);

        if (*synth) {
            const Scene s = generate_scene(scene);
            write_cube(s.cube, synth_out);
            if (!truth_dir.empty()) {
                fs::create_directories(truth_dir);
                write_matrix_csv(s.truth.endmembers, fs::path(truth_dir) / "endmembers.csv");
                write_matrix_csv(s.truth.abundances, fs::path(truth_dir) / "abundances.csv");
            }
        } else if (*simulate) {
            const SensorProfile profile = sim_profile.empty() ? sentinel2a_profile() : load_profile(sim_profile);
            write_product(simulate_product(read_cube(sim_in), profile), sim_out);
        } else if (*rough) {
            const PipelineConfig cfg = rough_cfg.resolve();
            const MultiResProduct product = read_product(rough_in);
            const Matrix y_de = run_rough_stage(product, resolve_profile(product, cfg), cfg);
            write_cube(HyperCube::from_matrix(product.height(), product.width(), cfg.target_wavelengths(), y_de),
                       rough_out);
        } else if (*estimate) {
            const PipelineConfig cfg = est_cfg.resolve();
            const MultiResProduct product = read_product(est_in);
            const HyperCube y_de = read_cube(est_rough);
            if (y_de.height() != product.height() || y_de.width() != product.width()) {
                throw InputError("rough cube and product cover different grids");
            }
            const ResponseEstimate est = estimate_response(y_de.matrix(), product.high_res_view(), cfg.effective_ridge());
            if (est.underdetermined) std::cerr << "warning: fewer pixels than bands; the response is underdetermined\n";
            write_matrix_csv(est.response, est_out);
        } else if (*superres) {
            const PipelineConfig cfg = sr_cfg.resolve();
            const MultiResProduct product = read_product(sr_in);
            const SuperresResult result = run_superres(product, cfg);
            write_superres_artifacts(result, cfg, sr_out, sr_in, threads);
        } else if (*metrics) {
            const MetricsReport report = evaluate(read_cube(m_ref), read_cube(m_test), mcfg, m_runtime);
            if (m_out.empty()) {
                std::cout << report.to_json();
            } else {
                write_report(report, m_out);
            }
        } else if (*calibrate) {
            const CalibrationResult result = calibrate_reference(read_cube(c_ref), read_product(c_in));
            write_cube(result.cube, c_out);
            if (result.zero_reference_pixels > 0) {
                std::cerr << "warning: " << result.zero_reference_pixels << " pixels have a zero reference; gain 0\n";
            }
            if (!c_report.empty()) {
                OrderedJson j;
                j["gains"] = result.gains;
                j["zero_reference_pixels"] = result.zero_reference_pixels;
                std::ofstream out(c_report, std::ios::trunc);
                if (!out) throw InputError("cannot write " + c_report);
                out << j.dump(2) << "\n";
            }
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const ContractViolation& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
