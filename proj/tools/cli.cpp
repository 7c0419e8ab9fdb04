#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridshield/dynamics.hpp"
#include "gridshield/energy.hpp"
#include "gridshield/errors.hpp"
#include "gridshield/network.hpp"
#include "gridshield/pipeline.hpp"
#include "gridshield/report.hpp"
#include "gridshield/screening.hpp"
#include "svg.hpp"

namespace gridshield::cli {

namespace {

namespace fs = std::filesystem;

struct RunConfig {
    std::string case_path;
    std::string dynamics_path;
    DynamicsDefaults dynamics;
    std::optional<double> relay_beta;
    std::optional<double> theta_max;
    std::vector<int> fault_buses;
    std::vector<double> durations;
    std::vector<double> e_star;
    double dt = kDefaultTimeStep;
    double horizon = kDefaultValidationHorizon;
    double epsilon = 1e-3;
    double delta = 1e-3;
    double lambda = 1.05;
    double tol_e = 1e-3;
    std::string format = "csv";
    std::string out;
    unsigned workers = 1;
    bool validate = false;
    bool undamped = false;
    std::size_t stride = 10;
    std::string svg;
};

// GRIDSHIELD_LOG: 0/quiet, 1/info (default), 2/debug
struct Log {
    int level = 1;
    std::ostream* err = nullptr;

    static Log from_env(std::ostream& err) {
        Log log{1, &err};
        if (const char* v = std::getenv("GRIDSHIELD_LOG")) {
            const std::string s(v);
            if (s == "0" || s == "quiet" || s == "error") log.level = 0;
            else if (s == "2" || s == "debug") log.level = 2;
        }
        return log;
    }
    std::ostream& info() { return level >= 1 ? *err : null(); }
    std::ostream& debug() { return level >= 2 ? *err : null(); }
    static std::ostream& null() {
        static std::ostream sink(nullptr);
        return sink;
    }
};

ScreeningConfig screening_config(const RunConfig& cfg) {
    ScreeningConfig s;
    s.epsilon = cfg.epsilon;
    s.delta = cfg.delta;
    s.lambda = cfg.lambda;
    s.validate();
    return s;
}

PowerNetwork load_network(const RunConfig& cfg, Log& log) {
    MatpowerOptions opts;
    opts.dynamics = cfg.dynamics;
    if (!cfg.dynamics_path.empty()) opts.sidecar = nlohmann::json::parse(read_text_file(cfg.dynamics_path));
    auto net = load_case(cfg.case_path, opts);
    std::optional<double> limit;
    if (cfg.relay_beta) limit = relay_limit_from_security(*cfg.relay_beta);
    if (cfg.theta_max) {
        if (!(*cfg.theta_max > 0.0 && *cfg.theta_max <= std::numbers::pi / 2))
            throw DomainError("--theta-max must lie in (0, pi/2]");
        limit = *cfg.theta_max;
    }
    if (limit) net = with_relay_limit(net, *limit);
    if (cfg.undamped) {
        std::vector<Bus> buses(net.buses().begin(), net.buses().end());
        for (auto& b : buses) b.damping = 0.0;
        std::vector<Line> lines(net.lines().begin(), net.lines().end());
        net = PowerNetwork(std::move(buses), std::move(lines), net.reference_bus(), BalancePolicy::Allow);
    }
    log.info() << "case " << cfg.case_path << ": " << net.size() << " buses, " << net.line_count()
               << " lines\n";
    return net;
}

// Writes to --out/<name> when --out is set, otherwise to `fallback`.
class Sink {
public:
    Sink(const RunConfig& cfg, const std::string& name, std::ostream& fallback) : stream_(&fallback) {
        if (cfg.out.empty()) return;
        fs::create_directories(cfg.out);
        path_ = fs::path(cfg.out) / name;
        file_ = std::make_unique<std::ofstream>(path_);
        if (!*file_) throw ParseError("cannot write " + path_.string());
        stream_ = file_.get();
    }
    std::ostream& operator*() { return *stream_; }
    const fs::path& path() const { return path_; }

private:
    std::ostream* stream_;
    fs::path path_;
    std::unique_ptr<std::ofstream> file_;
};

Equilibrium equilibrium_or_throw(const PowerNetwork& net, Log& log) {
    auto eq = solve_equilibrium(net);
    log.info() << "E_min = " << std::setprecision(10) << eq.e_min << (eq.interior ? "" : " (boundary)")
               << " after " << eq.iterations << " Newton steps\n";
    return eq;
}

int cmd_equilibrium(const RunConfig& cfg, std::ostream& out, Log& log) {
    const auto net = load_network(cfg, log);
    const auto eq = equilibrium_or_throw(net, log);
    Sink sink(cfg, cfg.format == "json" ? "equilibrium.json" : "equilibrium.csv", out);
    if (cfg.format == "json") {
        nlohmann::json j{{"e_min", eq.e_min}, {"interior", eq.interior}, {"iterations", eq.iterations},
                         {"max_line_angle", max_line_angle(net, eq.theta_min)}};
        auto& th = j["theta_min"] = nlohmann::json::object();
        for (std::size_t i = 0; i < net.size(); ++i) th[std::to_string(net.bus(i).id)] = eq.theta_min[i];
        *sink << j.dump(2) << '\n';
    } else {
        *sink << std::setprecision(12) << "# e_min=" << eq.e_min << " interior=" << (eq.interior ? 1 : 0)
              << " iterations=" << eq.iterations << '\n';
        *sink << "bus,theta_min\n";
        for (std::size_t i = 0; i < net.size(); ++i) *sink << net.bus(i).id << ',' << eq.theta_min[i] << '\n';
    }
    return eq.interior ? kSuccess : kInconclusive;
}

int exit_for(const std::vector<ScenarioResult>& results) {
    int code = kSuccess;
    for (const auto& r : results) {
        if (r.validation && r.validation->diverged) return kDivergence;
        if (r.status != ScenarioStatus::Ok) code = kInconclusive;
        else if (r.verdict && r.verdict->status == VerdictStatus::Inconclusive) code = kInconclusive;
    }
    return code;
}

int screen_energies(const RunConfig& cfg, const PowerNetwork& net, const Equilibrium& eq, std::ostream& out) {
    const auto scfg = screening_config(cfg);
    Sink sink(cfg, cfg.format == "json" ? "screen.json" : "screen.csv", out);
    int code = kSuccess;
    nlohmann::json all = nlohmann::json::array();
    if (cfg.format == "csv") *sink << "e_star,verdict,worst_line,theta_hat,theta_max,boundary_lines\n";
    for (double e : cfg.e_star) {
        const auto v = screen(net, e, scfg, eq);
        if (v.status == VerdictStatus::Inconclusive) code = kInconclusive;
        if (cfg.format == "json") {
            all.push_back(verdict_to_json(net, v));
            continue;
        }
        *sink << std::setprecision(10) << e << ',' << to_string(v.status) << ',';
        if (auto w = worst_line(v); w && v.status != VerdictStatus::BelowMinEnergy) {
            const auto& line = net.line(*w);
            *sink << net.bus(line.from).id << '-' << net.bus(line.to).id << ',' << v.per_line[*w].theta_hat
                  << ',' << line.relay_limit << ',';
        } else {
            *sink << ",,,";
        }
        for (std::size_t k = 0; k < v.boundary_lines.size(); ++k) {
            const auto& line = net.line(v.boundary_lines[k]);
            *sink << (k ? ";" : "") << net.bus(line.from).id << '-' << net.bus(line.to).id;
        }
        *sink << '\n';
    }
    if (cfg.format == "json") *sink << all.dump(2) << '\n';
    return code;
}

int run_scenarios(const RunConfig& cfg, const std::vector<int>& buses, const std::vector<double>& durations,
                  const std::string& stem, std::ostream& out, Log& log) {
    const auto net = load_network(cfg, log);
    const auto eq = equilibrium_or_throw(net, log);
    if (!eq.interior) {
        log.info() << "pre-fault equilibrium lies on the boundary of the convex region; screening skipped\n";
        return kInconclusive;
    }
    if (!cfg.e_star.empty()) return screen_energies(cfg, net, eq, out);

    std::vector<int> bus_list = buses;
    if (bus_list.empty())
        for (const auto& b : net.buses()) bus_list.push_back(b.id);
    for (int id : bus_list)
        if (!net.has_bus(id)) throw DomainError("unknown fault bus " + std::to_string(id));

    ScenarioOptions opts;
    opts.dt = cfg.dt;
    opts.horizon = cfg.horizon;
    opts.validate = cfg.validate;
    opts.screening = screening_config(cfg);
    log.info() << "running " << bus_list.size() * durations.size() << " scenarios on " << cfg.workers
               << " worker(s)\n";
    const auto results = run_sweep(net, eq, bus_list, durations, opts, cfg.workers);

    Sink sink(cfg, stem + (cfg.format == "json" ? ".json" : ".csv"), out);
    if (cfg.format == "json") {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : results) j.push_back(scenario_to_json(net, r));
        *sink << j.dump(2) << '\n';
    } else {
        write_scenario_csv_header(*sink);
        for (const auto& r : results) write_scenario_csv_row(*sink, net, r);
    }
    for (const auto& r : results)
        if (r.status != ScenarioStatus::Ok)
            log.info() << "bus " << r.scenario.faulted_bus << " tau " << r.scenario.duration << ": "
                       << to_string(r.status) << " (" << r.message << ")\n";
    return exit_for(results);
}

int cmd_max_secure_energy(const RunConfig& cfg, std::ostream& out, Log& log) {
    const auto net = load_network(cfg, log);
    const auto eq = equilibrium_or_throw(net, log);
    if (!eq.interior) return kInconclusive;
    const auto res = find_max_secure_energy(net, screening_config(cfg), eq, cfg.tol_e);
    log.info() << "E_bar = " << std::setprecision(10) << res.e_bar << " after " << res.screens << " screens\n";

    Sink sink(cfg, cfg.format == "json" ? "max_secure_energy.json" : "max_secure_energy.csv", out);
    nlohmann::json binding = nlohmann::json::array();
    if (res.insecure)
        for (auto l : res.insecure->boundary_lines) {
            const auto& r = res.insecure->per_line[l];
            const auto& line = net.line(l);
            nlohmann::json b{{"line", l},
                             {"from", net.bus(line.from).id},
                             {"to", net.bus(line.to).id},
                             {"theta_hat", r.theta_hat},
                             {"theta_max", r.relay_limit}};
            auto& ph = b["phases"] = nlohmann::json::object();
            for (std::size_t i = 0; i < r.theta_star.size(); ++i) ph[std::to_string(net.bus(i).id)] = r.theta_star[i];
            binding.push_back(std::move(b));
        }
    if (cfg.format == "json") {
        nlohmann::json j{{"e_min", eq.e_min}, {"e_bar", res.e_bar}, {"capped", res.capped},
                         {"cap", res.cap},    {"screens", res.screens}, {"binding", binding}};
        *sink << j.dump(2) << '\n';
    } else {
        *sink << std::setprecision(10) << "# e_min=" << eq.e_min << " e_bar=" << res.e_bar
              << " capped=" << (res.capped ? 1 : 0) << '\n';
        *sink << "line,from,to,theta_hat,theta_max\n";
        for (const auto& b : binding)
            *sink << b["line"].get<std::size_t>() << ',' << b["from"].get<int>() << ',' << b["to"].get<int>() << ','
                  << b["theta_hat"].get<double>() << ',' << b["theta_max"].get<double>() << '\n';
    }
    return kSuccess;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, Log& log) {
    const auto net = load_network(cfg, log);
    const auto eq = equilibrium_or_throw(net, log);
    Trajectory traj;
    try {
        if (cfg.fault_buses.empty()) {
            SystemState s0{0.0, eq.theta_min, std::vector<double>(net.size(), 0.0)};
            traj = integrate(net, s0, cfg.horizon, cfg.dt, {cfg.stride});
        } else {
            if (cfg.fault_buses.size() != 1 || cfg.durations.size() != 1)
                throw DomainError("simulate takes one --fault-bus and one --duration");
            const FaultScenario sc{cfg.fault_buses.front(), cfg.durations.front()};
            traj = fault_trajectory(net, eq, sc, cfg.horizon, cfg.dt, cfg.stride);
        }
    } catch (const DivergenceError& e) {
        log.info() << "trajectory diverged at t = " << e.time() << " s\n";
        return kDivergence;
    }
    Sink sink(cfg, "trajectory.csv", out);
    write_trajectory_csv(*sink, net, traj);
    if (!cfg.svg.empty()) {
        std::ofstream svg(cfg.svg);
        if (!svg) throw ParseError("cannot write " + cfg.svg);
        std::vector<double> t;
        Series w{"W", {}}, u{"U", {}}, e{"E", {}};
        for (std::size_t k = 0; k < traj.samples.size(); ++k) {
            t.push_back(traj.samples[k].time);
            w.values.push_back(traj.energies[k].kinetic);
            u.values.push_back(traj.energies[k].potential);
            e.values.push_back(traj.energies[k].total);
        }
        write_svg_chart(svg, "energy", t, {w, u, e});
    }
    if (auto v = check_trajectory_security(traj, net))
        log.info() << "relay limit reached on line " << net.bus(net.line(v->line).from).id << '-'
                   << net.bus(net.line(v->line).to).id << " at t = " << v->time << " s\n";
    return kSuccess;
}

void add_case_options(CLI::App& app, RunConfig& cfg) {
    app.add_option("--case", cfg.case_path, "case file (.m MATPOWER or native .json)")->required()->check(CLI::ExistingFile);
    app.add_option("--dynamics", cfg.dynamics_path,
                   "per-bus JSON sidecar {\"<bus id>\": {\"M\": .., \"gamma\": ..}}")
        ->check(CLI::ExistingFile);
    app.add_option("--m-gen", cfg.dynamics.generator_inertia, "inertia of generator buses")
        ->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--m-load", cfg.dynamics.load_inertia, "inertia of load buses")
        ->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--gamma-gen", cfg.dynamics.generator_damping, "damping of generator buses")
        ->capture_default_str()->check(CLI::NonNegativeNumber);
    app.add_option("--gamma-load", cfg.dynamics.load_damping, "damping of load buses")
        ->capture_default_str()->check(CLI::NonNegativeNumber);
    auto* beta = app.add_option("--relay-beta", cfg.relay_beta, "relay security parameter (> 0.5)");
    app.add_option("--theta-max", cfg.theta_max, "relay angle limit applied to every line (rad)")->excludes(beta);
    app.add_option("--format", cfg.format, "report format")->capture_default_str()->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--out", cfg.out, "output directory (stdout when omitted)");
}

void add_screen_options(CLI::App& app, RunConfig& cfg) {
    app.add_option("--epsilon", cfg.epsilon, "cut tolerance")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--delta", cfg.delta, "early-exit margin")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--lambda", cfg.lambda, "initial cut mesh growth")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_time_options(CLI::App& app, RunConfig& cfg) {
    app.add_option("--dt", cfg.dt, "RK4 step (s)")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--horizon", cfg.horizon, "end time measured from fault inception (s)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    Log log = Log::from_env(err);

    CLI::App app{"Energy-based transient security screening of power grids.\n"
                 "MATPOWER cases carry no machine data; defaults are M = 0.1 (generators), 0.001 (loads),\n"
                 "gamma = 0.05 (generators), 0.005 (loads), overridable per bus with --dynamics.\n"
                 "Exit codes: 0 success/secure, 1 input error, 2 inconclusive or boundary equilibrium, 3 divergence.",
                 "gridshield"};
    app.require_subcommand(1);

    auto* eq = app.add_subcommand("equilibrium", "stable equilibrium and E_min");
    add_case_options(*eq, cfg);

    auto* scr = app.add_subcommand("screen", "screen fault scenarios or given post-fault energies");
    add_case_options(*scr, cfg);
    add_screen_options(*scr, cfg);
    add_time_options(*scr, cfg);
    scr->add_option("--fault-bus", cfg.fault_buses, "faulted bus ids");
    scr->add_option("--duration", cfg.durations, "fault durations (s)")->check(CLI::PositiveNumber);
    scr->add_option("--e-star", cfg.e_star, "screen these energies directly instead of simulating faults")
        ->excludes("--fault-bus");
    scr->add_option("--workers", cfg.workers, "concurrent scenarios")->check(CLI::PositiveNumber);
    scr->add_flag("--validate", cfg.validate, "integrate the post-fault system and check relay limits");

    auto* sw = app.add_subcommand("sweep", "all buses x durations, one table");
    add_case_options(*sw, cfg);
    add_screen_options(*sw, cfg);
    add_time_options(*sw, cfg);
    sw->add_option("--fault-bus", cfg.fault_buses, "faulted bus ids (default: every bus)");
    sw->add_option("--duration", cfg.durations, "fault durations (default: 0.05 0.1 0.2 0.3)")
        ->check(CLI::PositiveNumber);
    sw->add_option("--workers", cfg.workers, "concurrent scenarios")->check(CLI::PositiveNumber);
    sw->add_flag("--validate", cfg.validate, "integrate the post-fault system and check relay limits");

    auto* mse = app.add_subcommand("max-secure-energy", "largest post-fault energy screened secure");
    add_case_options(*mse, cfg);
    add_screen_options(*mse, cfg);
    mse->add_option("--tol", cfg.tol_e, "bisection tolerance on the energy")->capture_default_str()
        ->check(CLI::PositiveNumber);

    auto* sim = app.add_subcommand("simulate", "trajectory CSV with W, U and E columns");
    add_case_options(*sim, cfg);
    add_time_options(*sim, cfg);
    sim->add_option("--fault-bus", cfg.fault_buses, "faulted bus id (no fault when omitted)");
    sim->add_option("--duration", cfg.durations, "fault duration (s)")->check(CLI::PositiveNumber);
    sim->add_option("--stride", cfg.stride, "record every n-th step")->capture_default_str()
        ->check(CLI::PositiveNumber);
    sim->add_flag("--undamped", cfg.undamped, "set every damping coefficient to zero");
    sim->add_option("--svg", cfg.svg, "also write an energy chart to this SVG file");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        std::ostringstream sink;
        app.exit(e, sink, err);
        return kInputError;
    }

    try {
        if (eq->parsed()) return cmd_equilibrium(cfg, out, log);
        if (scr->parsed()) {
            if (cfg.e_star.empty() && cfg.fault_buses.empty())
                throw DomainError("screen needs --fault-bus or --e-star");
            if (cfg.durations.empty()) cfg.durations = {0.3};
            return run_scenarios(cfg, cfg.fault_buses, cfg.durations, "screen", out, log);
        }
        if (sw->parsed()) {
            if (cfg.durations.empty()) cfg.durations = {0.05, 0.1, 0.2, 0.3};
            return run_scenarios(cfg, cfg.fault_buses, cfg.durations, "sweep", out, log);
        }
        if (mse->parsed()) return cmd_max_secure_energy(cfg, out, log);
        if (sim->parsed()) return cmd_simulate(cfg, out, log);
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}

}  // namespace gridshield::cli
