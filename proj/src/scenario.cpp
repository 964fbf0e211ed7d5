#include "alignsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "alignsim/common.hpp"
#include "alignsim/grid.hpp"
#include "alignsim/io.hpp"
#include "alignsim/measures.hpp"
#include "alignsim/particles.hpp"
#include "alignsim/rng.hpp"
#include "alignsim/stability.hpp"

namespace alignsim {

using nlohmann::json;

int thread_cap() {
    static const int cap = [] {
        if (const char* env = std::getenv("SIM_THREADS")) {
            char* end = nullptr;
            long v = std::strtol(env, &end, 10);
            if (end && *end == '\0' && v >= 1) return static_cast<int>(std::min<long>(v, 64));
        }
        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        return static_cast<int>(std::min<unsigned>(hw, 8));
    }();
    return cap;
}

namespace {

[[noreturn]] void cfg_fail(const std::string& ptr, const std::string& msg) {
    throw ConfigError("config error at " + (ptr.empty() ? std::string("/") : ptr) + ": " + msg);
}

void check_keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok) cfg_fail(ptr + "/" + it.key(), "unknown field");
    }
}

const json& member(const json& obj, const std::string& ptr, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) cfg_fail(ptr + "/" + key, "required field missing");
    return *it;
}

std::string get_str(const json& obj, const std::string& ptr, const char* key) {
    const json& v = member(obj, ptr, key);
    if (!v.is_string()) cfg_fail(ptr + "/" + key, "expected a string");
    return v.get<std::string>();
}

std::string get_str_or(const json& obj, const std::string& ptr, const char* key,
                       const std::string& def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_string()) cfg_fail(ptr + "/" + key, "expected a string");
    return it->get<std::string>();
}

double num_of(const json& v, const std::string& ptr) {
    if (!v.is_number()) cfg_fail(ptr, "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) cfg_fail(ptr, "expected a finite number");
    return d;
}

double get_num(const json& obj, const std::string& ptr, const char* key) {
    return num_of(member(obj, ptr, key), ptr + "/" + key);
}

double get_num_or(const json& obj, const std::string& ptr, const char* key, double def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    return num_of(*it, ptr + "/" + key);
}

long get_int(const json& obj, const std::string& ptr, const char* key) {
    const json& v = member(obj, ptr, key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        cfg_fail(ptr + "/" + key, "expected an integer");
    return v.get<long>();
}

long get_int_or(const json& obj, const std::string& ptr, const char* key, long def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_number_integer() && !it->is_number_unsigned())
        cfg_fail(ptr + "/" + key, "expected an integer");
    return it->get<long>();
}

std::vector<double> num_array(const json& v, const std::string& ptr) {
    if (!v.is_array()) cfg_fail(ptr, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(num_of(v[i], ptr + "/" + std::to_string(i)));
    return out;
}

// ---------------------------------------------------------------- kernel spec

json resolve_kernel(const json& spec, const std::string& ptr) {
    if (!spec.is_object()) cfg_fail(ptr, "expected an object");
    check_keys(spec, ptr, {"name", "params", "dim"});
    json out = json::object();
    std::string name = get_str(spec, ptr, "name");
    long dim = get_int_or(spec, ptr, "dim", 1);
    if (dim < 1 || dim > 8) cfg_fail(ptr + "/dim", "dim must be in [1, 8]");
    json params = spec.value("params", json::object());
    if (!params.is_object()) cfg_fail(ptr + "/params", "expected an object");
    const std::string pptr = ptr + "/params";
    if (name == "quadratic") {
        check_keys(params, pptr, {});
    } else if (name == "smoothed_norm") {
        check_keys(params, pptr, {"eps"});
        if (!(get_num(params, pptr, "eps") > 0.0)) cfg_fail(pptr + "/eps", "eps must be > 0");
    } else if (name == "gaussian_bump") {
        check_keys(params, pptr, {"sigma"});
        if (!(get_num(params, pptr, "sigma") > 0.0)) cfg_fail(pptr + "/sigma", "sigma must be > 0");
    } else if (name == "custom_table") {
        if (dim != 1) cfg_fail(ptr + "/dim", "custom_table kernels are 1D");
        check_keys(params, pptr, {"xmin", "xmax", "values"});
        double xmax = get_num(params, pptr, "xmax");
        if (!(xmax > 0.0)) cfg_fail(pptr + "/xmax", "xmax must be > 0");
        if (params.contains("xmin")) {
            double xmin = get_num(params, pptr, "xmin");
            if (!(xmin < 0.0)) cfg_fail(pptr + "/xmin", "xmin must be < 0");
        }
        std::vector<double> vals = num_array(member(params, pptr, "values"), pptr + "/values");
        if (vals.size() < 2) cfg_fail(pptr + "/values", "need at least 2 table values");
    } else {
        cfg_fail(ptr + "/name", "unknown kernel '" + name + "'");
    }
    out["name"] = name;
    out["params"] = params;
    out["dim"] = dim;
    return out;
}

// ------------------------------------------------------------- block schemas

json resolve_initial(const json& spec, const std::string& ptr) {
    if (!spec.is_object()) cfg_fail(ptr, "expected an object");
    json out = json::object();
    std::string kind = get_str(spec, ptr, "kind");
    out["kind"] = kind;
    if (kind == "two_clusters") {
        check_keys(spec, ptr, {"kind", "n", "separation", "u_mean", "u_rel", "jitter"});
        long n = get_int(spec, ptr, "n");
        if (n < 2 || n % 2 != 0) cfg_fail(ptr + "/n", "n must be even and >= 2");
        out["n"] = n;
        out["separation"] = get_num_or(spec, ptr, "separation", 1.0);
        out["u_mean"] = get_num_or(spec, ptr, "u_mean", 0.0);
        out["u_rel"] = get_num_or(spec, ptr, "u_rel", 0.0);
        double jit = get_num_or(spec, ptr, "jitter", 0.0);
        if (jit < 0.0) cfg_fail(ptr + "/jitter", "jitter must be >= 0");
        out["jitter"] = jit;
    } else if (kind == "gaussian_cloud") {
        check_keys(spec, ptr, {"kind", "n", "pos_scale", "vel_scale", "u_mean"});
        long n = get_int(spec, ptr, "n");
        if (n < 1) cfg_fail(ptr + "/n", "n must be >= 1");
        out["n"] = n;
        double ps = get_num_or(spec, ptr, "pos_scale", 1.0);
        if (!(ps > 0.0)) cfg_fail(ptr + "/pos_scale", "pos_scale must be > 0");
        out["pos_scale"] = ps;
        double vs = get_num_or(spec, ptr, "vel_scale", 0.5);
        if (vs < 0.0) cfg_fail(ptr + "/vel_scale", "vel_scale must be >= 0");
        out["vel_scale"] = vs;
        out["u_mean"] = get_num_or(spec, ptr, "u_mean", 0.0);
    } else if (kind == "uniform_box") {
        check_keys(spec, ptr, {"kind", "n", "width", "vel_width"});
        long n = get_int(spec, ptr, "n");
        if (n < 1) cfg_fail(ptr + "/n", "n must be >= 1");
        out["n"] = n;
        double w = get_num_or(spec, ptr, "width", 1.0);
        if (!(w > 0.0)) cfg_fail(ptr + "/width", "width must be > 0");
        out["width"] = w;
        double vw = get_num_or(spec, ptr, "vel_width", 1.0);
        if (vw < 0.0) cfg_fail(ptr + "/vel_width", "vel_width must be >= 0");
        out["vel_width"] = vw;
    } else if (kind == "explicit") {
        check_keys(spec, ptr, {"kind", "points", "velocities", "weights"});
        const json& pts = member(spec, ptr, "points");
        const json& vel = member(spec, ptr, "velocities");
        if (!pts.is_array() || pts.empty()) cfg_fail(ptr + "/points", "expected a non-empty array");
        if (!vel.is_array() || vel.size() != pts.size())
            cfg_fail(ptr + "/velocities", "must match points in length");
        for (std::size_t i = 0; i < pts.size(); ++i) {
            num_array(pts[i], ptr + "/points/" + std::to_string(i));
            std::vector<double> v = num_array(vel[i], ptr + "/velocities/" + std::to_string(i));
            if (v.size() != pts[i].size())
                cfg_fail(ptr + "/velocities/" + std::to_string(i), "row width must match points");
        }
        out["points"] = pts;
        out["velocities"] = vel;
        if (spec.contains("weights")) {
            std::vector<double> w = num_array(spec["weights"], ptr + "/weights");
            if (w.size() != pts.size()) cfg_fail(ptr + "/weights", "must match points in length");
            for (std::size_t i = 0; i < w.size(); ++i)
                if (w[i] < 0.0) cfg_fail(ptr + "/weights/" + std::to_string(i), "must be >= 0");
            out["weights"] = spec["weights"];
        }
    } else {
        cfg_fail(ptr + "/kind", "unknown initial-data kind '" + kind + "'");
    }
    return out;
}

json resolve_integrator(const json& spec, const std::string& ptr, bool grid_mode) {
    if (!spec.is_object()) cfg_fail(ptr, "expected an object");
    check_keys(spec, ptr, {"dt", "t_end", "record_every", "scheme", "formulation"});
    json out = json::object();
    if (grid_mode) {
        double dt = get_num_or(spec, ptr, "dt", 0.0);  // 0 = choose from the CFL bound
        if (dt < 0.0) cfg_fail(ptr + "/dt", "dt must be >= 0 (0 selects the CFL step)");
        out["dt"] = dt;
        if (spec.contains("scheme") || spec.contains("formulation"))
            cfg_fail(ptr, "scheme/formulation do not apply to grid runs");
    } else {
        double dt = get_num(spec, ptr, "dt");
        if (!(dt > 0.0)) cfg_fail(ptr + "/dt", "dt must be > 0");
        out["dt"] = dt;
        std::string scheme = get_str_or(spec, ptr, "scheme", "rk4");
        if (scheme != "rk4" && scheme != "euler")
            cfg_fail(ptr + "/scheme", "expected rk4 or euler");
        out["scheme"] = scheme;
        std::string form = get_str_or(spec, ptr, "formulation", "velocity_u");
        if (form != "velocity_u" && form != "offset_w")
            cfg_fail(ptr + "/formulation", "expected velocity_u or offset_w");
        out["formulation"] = form;
    }
    double t_end = get_num(spec, ptr, "t_end");
    if (!(t_end > 0.0)) cfg_fail(ptr + "/t_end", "t_end must be > 0");
    out["t_end"] = t_end;
    long re = get_int_or(spec, ptr, "record_every", grid_mode ? 100 : 1);
    if (re < 1) cfg_fail(ptr + "/record_every", "record_every must be >= 1");
    out["record_every"] = re;
    return out;
}

json resolve_grid(const json& spec, const std::string& ptr, bool with_inv_N) {
    if (!spec.is_object()) cfg_fail(ptr, "expected an object");
    check_keys(spec, ptr, {"L", "M", "profile", "profile_params", "inv_N", "rho_floor_rel"});
    json out = json::object();
    double L = get_num(spec, ptr, "L");
    if (!(L > 0.0)) cfg_fail(ptr + "/L", "L must be > 0");
    out["L"] = L;
    long M = get_int(spec, ptr, "M");
    if (M < 16 || M > 2048) cfg_fail(ptr + "/M", "M must be in [16, 2048]");
    out["M"] = M;
    std::string profile = get_str(spec, ptr, "profile");
    try {
        grid_profile_from_string(profile);
    } catch (const ConfigError& e) {
        cfg_fail(ptr + "/profile", e.what());
    }
    out["profile"] = profile;
    std::vector<double> params;
    if (spec.contains("profile_params"))
        params = num_array(spec["profile_params"], ptr + "/profile_params");
    try {
        profile_density(grid_profile_from_string(profile), params, L, 0.0);
    } catch (const ConfigError& e) {
        cfg_fail(ptr + "/profile_params", e.what());
    }
    out["profile_params"] = spec.value("profile_params", json::array());
    if (with_inv_N) {
        double inv_N = get_num(spec, ptr, "inv_N");
        if (inv_N < 0.0) cfg_fail(ptr + "/inv_N", "inv_N must be >= 0");
        out["inv_N"] = inv_N;
    } else if (spec.contains("inv_N")) {
        cfg_fail(ptr + "/inv_N", "set by N_list in a viscosity study");
    }
    double rfr = get_num_or(spec, ptr, "rho_floor_rel", 1e-10);
    if (!(rfr > 0.0)) cfg_fail(ptr + "/rho_floor_rel", "rho_floor_rel must be > 0");
    out["rho_floor_rel"] = rfr;
    return out;
}

json resolve_study(const json& spec, const std::string& ptr) {
    if (!spec.is_object()) cfg_fail(ptr, "expected an object");
    check_keys(spec, ptr, {"N_list", "t_probe", "reference", "n_ref"});
    json out = json::object();
    const json& nl = member(spec, ptr, "N_list");
    if (!nl.is_array() || nl.empty()) cfg_fail(ptr + "/N_list", "expected a non-empty array");
    long prev = 0;
    for (std::size_t i = 0; i < nl.size(); ++i) {
        const std::string ip = ptr + "/N_list/" + std::to_string(i);
        if (!nl[i].is_number_integer() && !nl[i].is_number_unsigned())
            cfg_fail(ip, "expected an integer");
        long v = nl[i].get<long>();
        if (v < 1) cfg_fail(ip, "N must be >= 1");
        if (i > 0 && v <= prev) cfg_fail(ip, "N_list must be strictly increasing");
        prev = v;
    }
    out["N_list"] = nl;
    double tp = get_num(spec, ptr, "t_probe");
    if (!(tp > 0.0)) cfg_fail(ptr + "/t_probe", "t_probe must be > 0");
    out["t_probe"] = tp;
    std::string ref = get_str_or(spec, ptr, "reference", "largest_n");
    if (ref != "largest_n" && ref != "particles")
        cfg_fail(ptr + "/reference", "expected largest_n or particles");
    out["reference"] = ref;
    long n_ref = get_int_or(spec, ptr, "n_ref", 128);
    if (n_ref < 2) cfg_fail(ptr + "/n_ref", "n_ref must be >= 2");
    out["n_ref"] = n_ref;
    return out;
}

json resolve_stability(const json& spec, const std::string& ptr) {
    if (!spec.is_object()) cfg_fail(ptr, "expected an object");
    check_keys(spec, ptr,
               {"n_eval", "delta_list", "t_end", "dt", "record_every", "c0", "C_v", "C_T", "C_m",
                "pad_fraction", "quantile", "v0"});
    json out = json::object();
    long n_eval = get_int_or(spec, ptr, "n_eval", 256);
    if (n_eval < 2) cfg_fail(ptr + "/n_eval", "n_eval must be >= 2");
    out["n_eval"] = n_eval;
    const json& dl = member(spec, ptr, "delta_list");
    std::vector<double> deltas = num_array(dl, ptr + "/delta_list");
    if (deltas.empty()) cfg_fail(ptr + "/delta_list", "expected a non-empty array");
    for (std::size_t i = 0; i < deltas.size(); ++i)
        if (deltas[i] < 0.0) cfg_fail(ptr + "/delta_list/" + std::to_string(i), "must be >= 0");
    out["delta_list"] = dl;
    double t_end = get_num_or(spec, ptr, "t_end", 1.0);
    if (!(t_end > 0.0)) cfg_fail(ptr + "/t_end", "t_end must be > 0");
    out["t_end"] = t_end;
    double dt = get_num_or(spec, ptr, "dt", 2e-3);
    if (!(dt > 0.0) || dt > 0.5) cfg_fail(ptr + "/dt", "dt must be in (0, 0.5]");
    out["dt"] = dt;
    long re = get_int_or(spec, ptr, "record_every", 25);
    if (re < 1) cfg_fail(ptr + "/record_every", "record_every must be >= 1");
    out["record_every"] = re;
    double c0 = get_num_or(spec, ptr, "c0", 16.0);
    if (!(c0 > 0.0)) cfg_fail(ptr + "/c0", "c0 must be > 0");
    out["c0"] = c0;
    double cv = get_num_or(spec, ptr, "C_v", 4.0);
    if (!(cv > 0.0)) cfg_fail(ptr + "/C_v", "C_v must be > 0");
    out["C_v"] = cv;
    double ct = get_num_or(spec, ptr, "C_T", 16.0);
    if (ct < 0.0) cfg_fail(ptr + "/C_T", "C_T must be >= 0");
    out["C_T"] = ct;
    double cm = get_num_or(spec, ptr, "C_m", 16.0);
    if (cm < 0.0) cfg_fail(ptr + "/C_m", "C_m must be >= 0");
    out["C_m"] = cm;
    double pad = get_num_or(spec, ptr, "pad_fraction", 0.25);
    if (pad < 0.0) cfg_fail(ptr + "/pad_fraction", "pad_fraction must be >= 0");
    out["pad_fraction"] = pad;

    json q = spec.value("quantile", json{{"kind", "uniform"}, {"lo", -1.0}, {"hi", 1.0}});
    const std::string qptr = ptr + "/quantile";
    if (!q.is_object()) cfg_fail(qptr, "expected an object");
    check_keys(q, qptr, {"kind", "lo", "hi"});
    if (get_str(q, qptr, "kind") != "uniform")
        cfg_fail(qptr + "/kind", "only the uniform quantile family is shipped");
    double lo = get_num_or(q, qptr, "lo", -1.0);
    double hi = get_num_or(q, qptr, "hi", 1.0);
    if (!(lo < hi)) cfg_fail(qptr, "need lo < hi");
    out["quantile"] = json{{"kind", "uniform"}, {"lo", lo}, {"hi", hi}};

    json v = spec.value("v0", json{{"kind", "tanh"}, {"amp", -0.5}, {"rate", 1.0}, {"mean", 0.0}});
    const std::string vptr = ptr + "/v0";
    if (!v.is_object()) cfg_fail(vptr, "expected an object");
    std::string vkind = get_str(v, vptr, "kind");
    json vout = json::object();
    vout["kind"] = vkind;
    if (vkind == "tanh") {
        check_keys(v, vptr, {"kind", "amp", "rate", "mean"});
        vout["amp"] = get_num_or(v, vptr, "amp", -0.5);
        vout["rate"] = get_num_or(v, vptr, "rate", 1.0);
        vout["mean"] = get_num_or(v, vptr, "mean", 0.0);
    } else if (vkind == "linear") {
        check_keys(v, vptr, {"kind", "slope", "mean"});
        vout["slope"] = get_num_or(v, vptr, "slope", 0.0);
        vout["mean"] = get_num_or(v, vptr, "mean", 0.0);
    } else if (vkind == "constant") {
        check_keys(v, vptr, {"kind", "mean"});
        vout["mean"] = get_num_or(v, vptr, "mean", 0.0);
    } else {
        cfg_fail(vptr + "/kind", "expected tanh, linear or constant");
    }
    out["v0"] = vout;
    return out;
}

json resolve_metrics(const json& spec, const std::string& ptr) {
    if (!spec.is_object()) cfg_fail(ptr, "expected an object");
    check_keys(spec, ptr, {"a", "b"});
    json out = json::object();
    for (const char* key : {"a", "b"}) {
        const json& m = member(spec, ptr, key);
        try {
            measure_from_json(m);
        } catch (const ConfigError& e) {
            cfg_fail(ptr + "/" + key, e.what());
        }
        out[key] = m;
    }
    return out;
}

}  // namespace

Kernel kernel_from_json(const json& spec) {
    json rk = resolve_kernel(spec, "/kernel");
    std::string name = rk["name"].get<std::string>();
    int dim = rk["dim"].get<int>();
    const json& params = rk["params"];
    std::vector<double> p;
    if (name == "smoothed_norm") {
        p.push_back(params["eps"].get<double>());
    } else if (name == "gaussian_bump") {
        p.push_back(params["sigma"].get<double>());
    } else if (name == "custom_table") {
        if (params.contains("xmin")) p.push_back(params["xmin"].get<double>());
        p.push_back(params["xmax"].get<double>());
        for (const json& v : params["values"]) p.push_back(v.get<double>());
    }
    return make_builtin(name, p, dim);
}

json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        byte = std::min(byte, text.size());
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < byte; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": " + e.what());
    }
}

json resolve_config(const json& config) {
    if (!config.is_object()) cfg_fail("", "config must be a JSON object");
    check_keys(config, "",
               {"name", "description", "mode", "seed", "kernel", "initial", "integrator", "grid",
                "study", "stability", "metrics"});
    json out = json::object();
    out["name"] = get_str(config, "", "name");
    if (config.contains("description")) out["description"] = get_str(config, "", "description");
    std::string mode = get_str(config, "", "mode");
    const bool known = mode == "particles" || mode == "grid" || mode == "vanishing_viscosity" ||
                       mode == "stability" || mode == "metrics";
    if (!known)
        cfg_fail("/mode",
                 "expected particles, grid, vanishing_viscosity, stability or metrics");
    out["mode"] = mode;
    {
        auto it = config.find("seed");
        if (it == config.end()) {
            out["seed"] = 0;
        } else {
            if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long>() >= 0))
                cfg_fail("/seed", "expected a nonnegative integer");
            out["seed"] = it->get<std::uint64_t>();
        }
    }

    auto forbid = [&](const char* key) {
        if (config.contains(key))
            cfg_fail(std::string("/") + key, "not used by mode '" + mode + "'");
    };

    if (mode == "particles") {
        out["kernel"] = resolve_kernel(member(config, "", "kernel"), "/kernel");
        out["initial"] = resolve_initial(member(config, "", "initial"), "/initial");
        out["integrator"] = resolve_integrator(member(config, "", "integrator"), "/integrator", false);
        forbid("grid");
        forbid("study");
        forbid("stability");
        forbid("metrics");
    } else if (mode == "grid") {
        json rk = resolve_kernel(member(config, "", "kernel"), "/kernel");
        if (rk["dim"].get<int>() != 1) cfg_fail("/kernel/dim", "grid runs need a 1D kernel");
        out["kernel"] = rk;
        out["grid"] = resolve_grid(member(config, "", "grid"), "/grid", true);
        out["integrator"] = resolve_integrator(member(config, "", "integrator"), "/integrator", true);
        forbid("initial");
        forbid("study");
        forbid("stability");
        forbid("metrics");
    } else if (mode == "vanishing_viscosity") {
        json rk = resolve_kernel(member(config, "", "kernel"), "/kernel");
        if (rk["dim"].get<int>() != 1) cfg_fail("/kernel/dim", "viscosity studies need a 1D kernel");
        out["kernel"] = rk;
        out["grid"] = resolve_grid(member(config, "", "grid"), "/grid", false);
        out["study"] = resolve_study(member(config, "", "study"), "/study");
        forbid("initial");
        forbid("integrator");
        forbid("stability");
        forbid("metrics");
    } else if (mode == "stability") {
        json rk = resolve_kernel(member(config, "", "kernel"), "/kernel");
        if (rk["name"].get<std::string>() != "quadratic" || rk["dim"].get<int>() != 1)
            cfg_fail("/kernel", "stability runs use the 1D quadratic kernel (closed-form strong solution)");
        out["kernel"] = rk;
        out["stability"] = resolve_stability(member(config, "", "stability"), "/stability");
        forbid("initial");
        forbid("integrator");
        forbid("grid");
        forbid("study");
        forbid("metrics");
    } else {  // metrics
        out["metrics"] = resolve_metrics(member(config, "", "metrics"), "/metrics");
        forbid("kernel");
        forbid("initial");
        forbid("integrator");
        forbid("grid");
        forbid("study");
        forbid("stability");
    }
    return out;
}

namespace {

// ------------------------------------------------------------ initial clouds

ParticleState build_initial(const json& spec, int dim, std::uint64_t seed) {
    ParticleState s;
    s.time = 0.0;
    s.measure.dim = dim;
    SplitMix64 rng(seed);
    std::string kind = spec["kind"].get<std::string>();
    auto gauss = [&rng]() {
        double u1 = 1.0 - rng.uniform01();
        double u2 = rng.uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    };
    if (kind == "two_clusters") {
        int n = spec["n"].get<int>();
        double sep = spec["separation"].get<double>();
        double u_mean = spec["u_mean"].get<double>();
        double u_rel = spec["u_rel"].get<double>();
        double jitter = spec["jitter"].get<double>();
        s.measure.points.assign(static_cast<std::size_t>(n) * dim, 0.0);
        s.measure.weights.assign(n, 1.0 / n);
        s.velocities.assign(static_cast<std::size_t>(n) * dim, 0.0);
        for (int i = 0; i < n; ++i) {
            bool left = i < n / 2;
            s.measure.points[static_cast<std::size_t>(i) * dim] = left ? -0.5 * sep : 0.5 * sep;
            for (int c = 0; c < dim; ++c)
                s.measure.points[static_cast<std::size_t>(i) * dim + c] +=
                    rng.uniform(-jitter, jitter);
            s.velocities[static_cast<std::size_t>(i) * dim] =
                u_mean + (left ? 0.5 : -0.5) * u_rel;
        }
    } else if (kind == "gaussian_cloud") {
        int n = spec["n"].get<int>();
        double ps = spec["pos_scale"].get<double>();
        double vs = spec["vel_scale"].get<double>();
        double u_mean = spec["u_mean"].get<double>();
        s.measure.points.resize(static_cast<std::size_t>(n) * dim);
        s.measure.weights.assign(n, 1.0 / n);
        s.velocities.resize(static_cast<std::size_t>(n) * dim);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < dim; ++c)
                s.measure.points[static_cast<std::size_t>(i) * dim + c] = ps * gauss();
            for (int c = 0; c < dim; ++c)
                s.velocities[static_cast<std::size_t>(i) * dim + c] =
                    vs * gauss() + (c == 0 ? u_mean : 0.0);
        }
    } else if (kind == "uniform_box") {
        int n = spec["n"].get<int>();
        double w = spec["width"].get<double>();
        double vw = spec["vel_width"].get<double>();
        s.measure.points.resize(static_cast<std::size_t>(n) * dim);
        s.measure.weights.assign(n, 1.0 / n);
        s.velocities.resize(static_cast<std::size_t>(n) * dim);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < dim; ++c)
                s.measure.points[static_cast<std::size_t>(i) * dim + c] =
                    rng.uniform(-0.5 * w, 0.5 * w);
            for (int c = 0; c < dim; ++c)
                s.velocities[static_cast<std::size_t>(i) * dim + c] =
                    rng.uniform(-0.5 * vw, 0.5 * vw);
        }
    } else {  // explicit
        const json& pts = spec["points"];
        const json& vel = spec["velocities"];
        int n = static_cast<int>(pts.size());
        s.measure.points.resize(static_cast<std::size_t>(n) * dim);
        s.velocities.resize(static_cast<std::size_t>(n) * dim);
        for (int i = 0; i < n; ++i) {
            if (static_cast<int>(pts[i].size()) != dim)
                throw ConfigError("initial: explicit point " + std::to_string(i) +
                                  " has wrong dimension");
            for (int c = 0; c < dim; ++c) {
                s.measure.points[static_cast<std::size_t>(i) * dim + c] = pts[i][c].get<double>();
                s.velocities[static_cast<std::size_t>(i) * dim + c] = vel[i][c].get<double>();
            }
        }
        if (spec.contains("weights")) {
            s.measure.weights = spec["weights"].get<std::vector<double>>();
        } else {
            s.measure.weights.assign(n, 1.0 / n);
        }
    }
    return s;
}

// ----------------------------------------------------------------- CSV glue

std::string csv_row(const std::vector<double>& vals) {
    std::string row;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i) row += ',';
        row += format_double(vals[i]);
    }
    row += '\n';
    return row;
}

std::string diagnostics_csv(const std::vector<DiagnosticsRecord>& recs, int dim) {
    std::string out = "time,mass,energy,dissipation,viscous_dissipation,bd_functional";
    for (int c = 0; c < dim; ++c) out += ",momentum_" + std::to_string(c);
    out += ",second_moment,first_moment_m,mv_functional,w_drift,trace_mu\n";
    for (const DiagnosticsRecord& r : recs) {
        std::vector<double> vals = {r.time, r.mass, r.energy, r.dissipation,
                                    r.viscous_dissipation, r.bd_functional};
        for (int c = 0; c < dim; ++c)
            vals.push_back(c < static_cast<int>(r.momentum.size()) ? r.momentum[c] : 0.0);
        vals.insert(vals.end(), {r.second_moment, r.first_moment_m, r.mv_functional, r.w_drift,
                                 r.trace_mu});
        out += csv_row(vals);
    }
    return out;
}

json metric_report_json(const MetricReport& r) {
    const char* method = r.method == MetricMethod::quantile_1d ? "quantile_1d"
                         : r.method == MetricMethod::lp_exact  ? "lp_exact"
                                                               : "closed_form";
    return json{{"value", r.value},
                {"method", method},
                {"iterations", r.lp.iterations},
                {"optimality_gap", r.lp.optimality_gap},
                {"sup_bound_active", r.lp.sup_bound_active}};
}

json metrics_json_for(const AtomicMeasure& a, const AtomicMeasure& b) {
    json out;
    out["flat"] = metric_report_json(flat_metric(a, b));
    out["tv"] = total_variation(a, b);
    if (is_probability(a) && is_probability(b)) {
        out["w1"] = metric_report_json(wasserstein(a, b, 1));
        out["w2"] = metric_report_json(wasserstein(a, b, 2));
    } else {
        // Wasserstein needs matched unit masses; flat and TV do not
        out["w1"] = nullptr;
        out["w2"] = nullptr;
    }
    return out;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// --------------------------------------------------------------- mode runs

using Emission = std::vector<std::pair<std::string, std::string>>;

void run_particles(const json& rc, Emission& files) {
    Kernel k = kernel_from_json(rc["kernel"]);
    std::uint64_t seed = rc["seed"].get<std::uint64_t>();
    ParticleState init = build_initial(rc["initial"], k.dim, seed);
    const json& integ = rc["integrator"];
    double dt = integ["dt"].get<double>();
    double t_end = integ["t_end"].get<double>();
    int record_every = integ["record_every"].get<int>();
    Formulation form = integ["formulation"].get<std::string>() == "offset_w"
                           ? Formulation::offset_w
                           : Formulation::velocity_u;
    Scheme scheme = integ["scheme"].get<std::string>() == "euler" ? Scheme::euler : Scheme::rk4;
    Trajectory traj = simulate(init, k, t_end, dt, form, record_every, scheme);

    const int d = k.dim;
    std::string tcsv = "time,atom,weight";
    for (int c = 0; c < d; ++c) tcsv += ",x" + std::to_string(c);
    for (int c = 0; c < d; ++c) tcsv += ",u" + std::to_string(c);
    tcsv += '\n';
    for (const ParticleState& s : traj.states) {
        for (int i = 0; i < s.size(); ++i) {
            tcsv += format_double(s.time);
            tcsv += ',' + std::to_string(i);
            tcsv += ',' + format_double(s.measure.weights[i]);
            for (int c = 0; c < d; ++c)
                tcsv += ',' + format_double(s.measure.points[static_cast<std::size_t>(i) * d + c]);
            for (int c = 0; c < d; ++c)
                tcsv += ',' + format_double(s.velocities[static_cast<std::size_t>(i) * d + c]);
            tcsv += '\n';
        }
    }
    files.emplace_back("trajectory.csv", std::move(tcsv));
    files.emplace_back("diagnostics.csv", diagnostics_csv(traj.records, d));
}

void run_grid(const json& rc, Emission& files) {
    Kernel k = kernel_from_json(rc["kernel"]);
    const json& gj = rc["grid"];
    GridState g = init_grid(grid_profile_from_string(gj["profile"].get<std::string>()),
                            gj["profile_params"].get<std::vector<double>>(),
                            gj["L"].get<double>(), gj["M"].get<int>(),
                            gj["inv_N"].get<double>(), gj["rho_floor_rel"].get<double>());
    WrappedKernel1D wk = wrap_kernel(k, g.L, g.M);
    const json& integ = rc["integrator"];
    double t_end = integ["t_end"].get<double>();
    double dt = integ["dt"].get<double>();
    if (dt == 0.0) dt = 0.8 * cfl_dt(g);
    long steps = std::max<long>(1, static_cast<long>(std::ceil(t_end / dt)));
    dt = t_end / steps;
    int record_every = integ["record_every"].get<int>();

    std::vector<DiagnosticsRecord> recs;
    int snap_count = 0;
    auto snapshot = [&](const GridState& st) {
        recs.push_back(grid_diagnostics(st, wk));
        std::vector<double> u = grid_velocity(st);
        std::string csv = "cell_center,rho,mom,u\n";
        for (int i = 0; i < st.M; ++i)
            csv += csv_row({st.cell_center(i), st.rho[i], st.mom[i], u[i]});
        char name[32];
        std::snprintf(name, sizeof name, "snapshot_%04d.csv", snap_count++);
        files.emplace_back(name, std::move(csv));
    };
    snapshot(g);
    for (long s = 1; s <= steps; ++s) {
        g = grid_step(g, wk, dt);
        if (s % record_every == 0 || s == steps) snapshot(g);
    }
    files.emplace_back("grid_diagnostics.csv", diagnostics_csv(recs, 1));
    files.emplace_back("summary.json",
                       dump_json(json{{"L", g.L},
                                      {"M", g.M},
                                      {"dt", dt},
                                      {"steps", steps},
                                      {"kernel", k.id},
                                      {"wrap_shells", wk.shells},
                                      {"snapshots", snap_count}}));
}

void run_study(const json& rc, Emission& files) {
    Kernel k = kernel_from_json(rc["kernel"]);
    const json& gj = rc["grid"];
    const json& sj = rc["study"];
    std::vector<int> N_list = sj["N_list"].get<std::vector<int>>();
    StudyResult r = vanishing_viscosity_study(
        grid_profile_from_string(gj["profile"].get<std::string>()),
        gj["profile_params"].get<std::vector<double>>(), gj["L"].get<double>(),
        gj["M"].get<int>(), k, N_list, sj["t_probe"].get<double>(),
        sj["reference"].get<std::string>() == "particles" ? StudyReference::particles
                                                          : StudyReference::largest_n,
        sj["n_ref"].get<int>(), gj["rho_floor_rel"].get<double>());

    std::string csv = "N,flat,w2,energy,defect\n";
    for (const StudyRow& row : r.rows) {
        csv += std::to_string(row.N);
        csv += ',' + format_double(row.flat);
        csv += ',' + format_double(row.w2);
        csv += ',' + format_double(row.energy);
        csv += ',' + format_double(row.defect);
        csv += '\n';
    }
    files.emplace_back("study.csv", std::move(csv));
    files.emplace_back(
        "summary.json",
        dump_json(json{{"M", r.M},
                       {"L", r.L},
                       {"dt", r.dt},
                       {"t_probe", r.t_probe},
                       {"N_list", N_list},
                       {"kernel", r.kernel_id},
                       {"reference", r.reference},
                       {"config_hash", sha256_hex(rc.dump()).substr(0, 12)}}));
}

void run_stability(const json& rc, Emission& files) {
    Kernel k = kernel_from_json(rc["kernel"]);
    const json& sj = rc["stability"];
    double lo = sj["quantile"]["lo"].get<double>();
    double hi = sj["quantile"]["hi"].get<double>();
    const json& vj = sj["v0"];
    std::string vkind = vj["kind"].get<std::string>();
    std::function<double(double)> v0;
    if (vkind == "tanh") {
        double amp = vj["amp"].get<double>();
        double rate = vj["rate"].get<double>();
        double mean = vj["mean"].get<double>();
        v0 = [amp, rate, mean](double x) { return mean + amp * std::tanh(rate * x); };
    } else if (vkind == "linear") {
        double slope = vj["slope"].get<double>();
        double mean = vj["mean"].get<double>();
        v0 = [slope, mean](double x) { return mean + slope * x; };
    } else {
        double mean = vj["mean"].get<double>();
        v0 = [mean](double) { return mean; };
    }
    int n_eval = sj["n_eval"].get<int>();
    StrongSolution strong = make_quadratic_strong(
        [lo, hi](double q) { return lo + (hi - lo) * q; }, v0, n_eval,
        sj["pad_fraction"].get<double>());

    double t_end = sj["t_end"].get<double>();
    double dt = sj["dt"].get<double>();
    int record_every = sj["record_every"].get<int>();
    double c0 = sj["c0"].get<double>();
    double C_v = sj["C_v"].get<double>();
    double C_T = sj["C_T"].get<double>();
    double C_m = sj["C_m"].get<double>();
    double c_star = default_c_star(k, strong, c0);

    AtomicMeasure r0;
    std::vector<double> v_r0;
    exact_strong_solution(strong, 0.0, r0, v_r0);

    std::vector<double> deltas = sj["delta_list"].get<std::vector<double>>();
    json deltas_out = json::array();
    std::vector<double> sup_lhs_list;
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        double delta = deltas[di];
        ParticleState init;
        init.time = 0.0;
        init.measure = r0;
        init.velocities = v_r0;
        for (double& v : init.velocities) v += delta;
        Trajectory traj = simulate(init, k, t_end, dt, Formulation::velocity_u, record_every);
        std::vector<StabilityRow> rows;
        rows.reserve(traj.states.size());
        for (const ParticleState& st : traj.states) rows.push_back(relative_entropy(st, strong));
        InitialTerms initial;
        initial.vel_err0 = rows.front().velocity_error;
        initial.tv0 = total_variation(init.measure, r0);
        initial.tv_moment0 = total_variation_weighted_sq(init.measure, r0);
        GronwallResult gr = gronwall_check(rows, c_star, initial);
        FigalliKangResult fk = figalli_kang_check(gr.rows, initial, C_v, C_T, C_m);
        double min_c0 = empirical_minimal_c0(rows, k, strong, initial, c0);
        double sup_lhs = 0.0;
        for (const StabilityRow& r : gr.rows)
            sup_lhs = std::max(sup_lhs, r.velocity_error + r.w2_sq);
        sup_lhs_list.push_back(sup_lhs);

        std::string csv = "time,velocity_error,w2_sq,trace_mu,gronwall_rhs,margin\n";
        for (const StabilityRow& r : gr.rows)
            csv += csv_row({r.time, r.velocity_error, r.w2_sq, r.trace_mu, r.gronwall_rhs,
                            r.margin});
        files.emplace_back("stability_" + std::to_string(di) + ".csv", std::move(csv));
        deltas_out.push_back(json{{"delta", delta},
                                  {"gronwall_pass", gr.pass},
                                  {"min_margin", gr.min_margin},
                                  {"fk_pass", fk.pass},
                                  {"fk_min_margin", fk.min_margin},
                                  {"tv_uninformative", fk.tv_uninformative},
                                  {"empirical_min_c0", min_c0},
                                  {"sup_lhs", sup_lhs}});
    }
    json ratios = json::array();
    for (std::size_t i = 0; i + 1 < sup_lhs_list.size(); ++i)
        ratios.push_back(sup_lhs_list[i] / std::max(sup_lhs_list[i + 1], 1e-300));
    files.emplace_back("summary.json", dump_json(json{{"c_star", c_star},
                                                      {"c0", c0},
                                                      {"n_eval", n_eval},
                                                      {"deltas", deltas_out},
                                                      {"decay_ratios", ratios}}));
}

void run_metrics(const json& rc, Emission& files) {
    AtomicMeasure a = measure_from_json(rc["metrics"]["a"]);
    AtomicMeasure b = measure_from_json(rc["metrics"]["b"]);
    files.emplace_back("metrics.json", dump_json(metrics_json_for(a, b)));
}

}  // namespace

RunResult run_scenario(const json& config, const std::filesystem::path& out_dir) {
    json rc = resolve_config(config);
    std::string mode = rc["mode"].get<std::string>();
    Emission files;
    if (mode == "particles") run_particles(rc, files);
    else if (mode == "grid") run_grid(rc, files);
    else if (mode == "vanishing_viscosity") run_study(rc, files);
    else if (mode == "stability") run_stability(rc, files);
    else run_metrics(rc, files);

    RunResult res;
    json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = rc;
    json hashes = json::object();
    for (const auto& [name, content] : files) {
        write_file_atomic(out_dir / name, content);
        hashes[name] = sha256_hex(content);
        res.files.push_back(name);
    }
    manifest["files"] = hashes;
    write_file_atomic(out_dir / "manifest.json", dump_json(manifest));
    res.files.push_back("manifest.json");
    res.manifest = std::move(manifest);
    return res;
}

const std::vector<ScenarioEntry>& shipped_scenarios() {
    static const std::vector<ScenarioEntry> catalogue = [] {
        std::vector<ScenarioEntry> list;
        auto add = [&list](const char* desc, const json& cfg) {
            list.push_back({cfg["name"].get<std::string>(), desc, cfg.dump(2) + "\n"});
        };

        add("two opposed particle clusters relaxing to consensus under the identity-Hessian kernel",
            json{{"name", "two_clusters_quadratic"},
                 {"mode", "particles"},
                 {"seed", 1},
                 {"kernel", {{"name", "quadratic"}, {"params", json::object()}, {"dim", 1}}},
                 {"initial",
                  {{"kind", "two_clusters"},
                   {"n", 16},
                   {"separation", 1.0},
                   {"u_mean", 0.4},
                   {"u_rel", 0.8},
                   {"jitter", 0.05}}},
                 {"integrator", {{"dt", 0.001}, {"t_end", 2.0}, {"record_every", 10}}}});

        add("2D gaussian cloud under the smoothed-norm kernel (positive semidefinite Hessian)",
            json{{"name", "smoothed_cloud_2d"},
                 {"mode", "particles"},
                 {"seed", 2},
                 {"kernel", {{"name", "smoothed_norm"}, {"params", {{"eps", 0.5}}}, {"dim", 2}}},
                 {"initial",
                  {{"kind", "gaussian_cloud"}, {"n", 24}, {"pos_scale", 1.0}, {"vel_scale", 0.5}}},
                 {"integrator", {{"dt", 0.0005}, {"t_end", 1.0}, {"record_every", 20}}}});

        add("attractive bump kernel without positive semidefiniteness; only the exponential "
            "energy bound applies",
            json{{"name", "gaussian_control"},
                 {"mode", "particles"},
                 {"seed", 3},
                 {"kernel", {{"name", "gaussian_bump"}, {"params", {{"sigma", 1.0}}}, {"dim", 1}}},
                 {"initial",
                  {{"kind", "gaussian_cloud"}, {"n", 16}, {"pos_scale", 1.0}, {"vel_scale", 0.5}}},
                 {"integrator", {{"dt", 0.001}, {"t_end", 1.0}, {"record_every", 10}}}});

        {
            // tabulated non-even kernel 1 + tanh(2x)/2; breaks momentum
            // conservation on purpose
            json values = json::array();
            for (int i = 0; i <= 128; ++i) {
                double x = -4.0 + 8.0 * i / 128;
                values.push_back(1.0 + 0.5 * std::tanh(2.0 * x));
            }
            add("non-even tabulated kernel; momentum conservation intentionally broken",
                json{{"name", "skew_table_control"},
                     {"mode", "particles"},
                     {"seed", 4},
                     {"kernel",
                      {{"name", "custom_table"},
                       {"params", {{"xmin", -4.0}, {"xmax", 4.0}, {"values", values}}},
                       {"dim", 1}}},
                     {"initial",
                      {{"kind", "two_clusters"},
                       {"n", 8},
                       {"separation", 1.0},
                       {"u_mean", 0.0},
                       {"u_rel", 0.6},
                       {"jitter", 0.1}}},
                     {"integrator", {{"dt", 0.001}, {"t_end", 1.0}, {"record_every", 10}}}});
        }

        add("viscous finite-volume bump with drift and shear under the smoothed-norm kernel",
            json{{"name", "viscous_bump"},
                 {"mode", "grid"},
                 {"seed", 5},
                 {"kernel", {{"name", "smoothed_norm"}, {"params", {{"eps", 0.3}}}, {"dim", 1}}},
                 {"grid",
                  {{"L", 1.0},
                   {"M", 256},
                   {"profile", "gaussian_bump_density"},
                   {"profile_params", {0.35, 0.03, 0.25, 0.2, 0.2}},
                   {"inv_N", 0.02},
                   {"rho_floor_rel", 1e-10}}},
                 {"integrator", {{"dt", 0.0}, {"t_end", 0.4}, {"record_every", 1000}}}});

        add("viscosity 1/N sweep of the single-bump profile against the least-viscous run",
            json{{"name", "viscosity_sweep"},
                 {"mode", "vanishing_viscosity"},
                 {"seed", 7},
                 {"kernel", {{"name", "quadratic"}, {"params", json::object()}, {"dim", 1}}},
                 {"grid",
                  {{"L", 1.0},
                   {"M", 256},
                   {"profile", "gaussian_bump_density"},
                   {"profile_params", {0.5, 0.04, 0.0, 0.3, 0.2}},
                   {"rho_floor_rel", 1e-10}}},
                 {"study",
                  {{"N_list", {50, 100, 200, 400, 800}},
                   {"t_probe", 0.25},
                   {"reference", "largest_n"},
                   {"n_ref", 128}}}});

        add("velocity-perturbation sweep against the closed-form strong solution",
            json{{"name", "stability_sweep"},
                 {"mode", "stability"},
                 {"seed", 11},
                 {"kernel", {{"name", "quadratic"}, {"params", json::object()}, {"dim", 1}}},
                 {"stability",
                  {{"n_eval", 256},
                   {"delta_list", {0.1, 0.01, 0.001}},
                   {"t_end", 1.0},
                   {"dt", 0.002},
                   {"record_every", 25},
                   {"c0", 16.0},
                   {"C_v", 4.0},
                   {"C_T", 16.0},
                   {"C_m", 16.0},
                   {"pad_fraction", 0.25},
                   {"quantile", {{"kind", "uniform"}, {"lo", -1.0}, {"hi", 1.0}}},
                   {"v0", {{"kind", "tanh"}, {"amp", -0.5}, {"rate", 1.0}, {"mean", 0.0}}}}}});

        return list;
    }();
    return catalogue;
}

std::vector<ListEntry> list_scenarios(const std::filesystem::path* dir_override) {
    std::vector<ListEntry> out;
    if (dir_override == nullptr) {
        for (const ScenarioEntry& s : shipped_scenarios()) out.push_back({s.name, s.description, false});
        return out;
    }
    std::error_code ec;
    if (!std::filesystem::is_directory(*dir_override, ec)) return out;
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(*dir_override, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        ListEntry e;
        e.name = p.filename().string();
        try {
            json j = parse_json_text(read_file(p), p.string());
            if (j.is_object() && j.contains("name") && j["name"].is_string())
                e.name = j["name"].get<std::string>();
            if (j.is_object() && j.contains("description") && j["description"].is_string())
                e.description = j["description"].get<std::string>();
            else if (j.is_object() && j.contains("mode") && j["mode"].is_string())
                e.description = "mode: " + j["mode"].get<std::string>();
        } catch (const ConfigError& err) {
            e.parse_error = true;
            e.description = err.what();
        } catch (const IoError& err) {
            e.parse_error = true;
            e.description = err.what();
        }
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

int dispatch_run(const std::string& cfg_arg, const std::string& out_arg, bool seed_set,
                 std::uint64_t seed) {
    json config;
    if (std::filesystem::exists(cfg_arg)) {
        config = parse_json_text(read_file(cfg_arg), cfg_arg);
    } else {
        const ScenarioEntry* found = nullptr;
        for (const ScenarioEntry& s : shipped_scenarios())
            if (s.name == cfg_arg) { found = &s; break; }
        if (!found)
            throw ConfigError("'" + cfg_arg +
                              "' is neither a config file nor a shipped scenario (try `sim list`)");
        config = parse_json_text(found->text, found->name);
    }
    if (seed_set) {
        if (!config.is_object()) throw ConfigError("config must be a JSON object");
        config["seed"] = seed;
    }
    std::string name = config.is_object() && config.contains("name") && config["name"].is_string()
                           ? config["name"].get<std::string>()
                           : "run";
    std::filesystem::path out_dir = out_arg.empty()
                                        ? std::filesystem::path("sim_out") / name
                                        : std::filesystem::path(out_arg);
    RunResult res = run_scenario(config, out_dir);
    for (const std::string& f : res.files) std::cout << (out_dir / f).string() << "\n";
    return 0;
}

int dispatch_metrics(const std::string& a_path, const std::string& b_path) {
    AtomicMeasure a = measure_from_json(parse_json_text(read_file(a_path), a_path));
    AtomicMeasure b = measure_from_json(parse_json_text(read_file(b_path), b_path));
    std::cout << metrics_json_for(a, b).dump(2) << "\n";
    return 0;
}

int dispatch_list(const std::string& dir) {
    std::vector<ListEntry> entries;
    if (dir.empty()) {
        entries = list_scenarios(nullptr);
    } else {
        std::filesystem::path p = dir;
        entries = list_scenarios(&p);
    }
    for (const ListEntry& e : entries) {
        std::cout << e.name;
        if (e.parse_error) std::cout << "  [parse error]";
        if (!e.description.empty()) std::cout << "  " << e.description;
        std::cout << "\n";
    }
    return 0;
}

int dispatch_validate(const std::string& spec_path) {
    json spec = parse_json_text(read_file(spec_path), spec_path);
    if (!spec.is_object()) throw ConfigError("kernel spec must be a JSON object");
    check_keys(spec, "", {"kernel", "box", "n_samples", "seed"});
    Kernel k = kernel_from_json(member(spec, "", "kernel"));
    SampleBox box;
    if (spec.contains("box")) {
        const json& bj = spec["box"];
        check_keys(bj, "/box", {"lo", "hi"});
        box.lo = num_array(member(bj, "/box", "lo"), "/box/lo");
        box.hi = num_array(member(bj, "/box", "hi"), "/box/hi");
        if (static_cast<int>(box.lo.size()) != k.dim || static_cast<int>(box.hi.size()) != k.dim)
            cfg_fail("/box", "lo/hi must have kernel dimension");
    } else {
        box.lo.assign(k.dim, -5.0);
        box.hi.assign(k.dim, 5.0);
    }
    long n_samples = get_int_or(spec, "", "n_samples", 256);
    if (n_samples < 1) cfg_fail("/n_samples", "n_samples must be >= 1");
    long seed = get_int_or(spec, "", "seed", 0);
    ValidationReport rep = validate(k, box, static_cast<int>(n_samples),
                                    static_cast<std::uint64_t>(seed));
    json checks = json::array();
    for (const PropertyCheck& c : rep.checks)
        checks.push_back(json{{"property", c.property},
                              {"pass", c.pass},
                              {"worst", c.worst},
                              {"witness", c.witness}});
    std::cout << json{{"kernel", k.id}, {"all_pass", rep.all_pass()}, {"checks", checks}}.dump(2)
              << "\n";
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"measure-solution alignment dynamics: particle and viscous-grid solvers, "
                 "metric toolbox, stability checks"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute a scenario config (file path or shipped name)");
    std::string cfg_arg, out_arg;
    std::uint64_t seed_arg = 0;
    run->add_option("config", cfg_arg, "config JSON path or shipped scenario name")->required();
    run->add_option("--out", out_arg, "output directory (default sim_out/<name>)");
    auto* seed_opt = run->add_option("--seed", seed_arg, "override the config seed");

    auto* metrics = app.add_subcommand("metrics", "distances between two measure JSON files");
    std::string a_path, b_path;
    metrics->add_option("a", a_path, "first measure JSON")->required();
    metrics->add_option("b", b_path, "second measure JSON")->required();

    auto* list = app.add_subcommand("list", "list shipped scenarios (or a directory of configs)");
    std::string dir_arg;
    list->add_option("--dir", dir_arg, "scan this directory for *.json configs instead");

    auto* vk = app.add_subcommand("validate-kernel", "sample-check a kernel spec JSON");
    std::string vk_path;
    vk->add_option("spec", vk_path, "kernel spec JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return dispatch_run(cfg_arg, out_arg, seed_opt->count() > 0, seed_arg);
        if (metrics->parsed()) return dispatch_metrics(a_path, b_path);
        if (list->parsed()) return dispatch_list(dir_arg);
        if (vk->parsed()) return dispatch_validate(vk_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace alignsim
