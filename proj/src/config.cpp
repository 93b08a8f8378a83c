#include "snell/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include "snell/errors.hpp"
#include "snell/io.hpp"

namespace snell {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

std::string strip_comment(const std::string& line) {
    bool in_quote = false;
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quote) {
            if (c == quote) in_quote = false;
        } else if (c == '"' || c == '\'') {
            in_quote = true;
            quote = c;
        } else if (c == '#' || c == ';') {
            return line.substr(0, i);
        }
    }
    return line;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            cfg.sections_[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
        std::string key = trim(line.substr(0, eq));
        std::string value = unquote(trim(line.substr(eq + 1)));
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return parse(io::read_file(path)); }

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
    auto dot = dotted_key.find('.');
    if (dot == std::string::npos)
        throw ConfigError("--set expects section.key=value, got '" + dotted_key + "'");
    sections_[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)] = unquote(trim(value));
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string RunConfig::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

std::string RunConfig::require_string(const std::string& section, const std::string& key) const {
    if (!has(section, key))
        throw ConfigError("missing required config key [" + section + "] " + key);
    return get_string(section, key, "");
}

double RunConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key, "");
    char* end = nullptr;
    double out = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config [" + section + "] " + key + ": not a number: '" + v + "'");
    return out;
}

long long RunConfig::get_int(const std::string& section, const std::string& key,
                             long long fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key, "");
    try {
        std::size_t used = 0;
        long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config [" + section + "] " + key + ": not an integer: '" + v + "'");
    }
}

bool RunConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get_string(section, key, "");
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config [" + section + "] " + key + ": not a boolean: '" + v + "'");
}

std::vector<double> RunConfig::get_doubles(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    std::string v = get_string(section, key, "");
    if (v.empty()) return out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        char* end = nullptr;
        double d = std::strtod(item.c_str(), &end);
        if (end == item.c_str() || *end != '\0')
            throw ConfigError("config [" + section + "] " + key + ": bad list entry '" + item + "'");
        out.push_back(d);
    }
    return out;
}

ConfiguredProblem build_problem(const RunConfig& config) {
    ConfiguredProblem out;
    const std::string preset = config.get_string("problem", "preset", "custom");
    const int d = static_cast<int>(config.get_int("problem", "d", 1));
    const int m = static_cast<int>(config.get_int("problem", "m", d));
    const double T = config.get_double("problem", "T", 1.0);
    const double q = config.get_double("problem", "growth_q", 2.0);
    const std::string f_src = config.get_string("problem", "f", "0");
    const std::string g_src = config.require_string("problem", "g");

    if (preset == "gbm") {
        out.problem = presets::gbm(d, T, config.get_double("problem", "mu", 0.0),
                                   config.get_double("problem", "nu", 0.2), f_src, g_src, q);
    } else if (preset == "bachelier") {
        out.problem = presets::bachelier(d, T, config.get_double("problem", "mu", 0.0),
                                         config.get_double("problem", "vol", 1.0), f_src, g_src, q);
    } else if (preset == "ou") {
        out.problem = presets::ornstein_uhlenbeck(
            d, T, config.get_double("problem", "kappa", 1.0),
            config.get_double("problem", "theta_bar", 0.0),
            config.get_double("problem", "vol", 1.0), f_src, g_src, q);
    } else if (preset == "custom") {
        std::vector<std::string> b_src, sigma_src;
        for (int i = 1; i <= d; ++i)
            b_src.push_back(config.require_string("problem", "b_" + std::to_string(i)));
        for (int i = 1; i <= d; ++i)
            for (int j = 1; j <= m; ++j)
                sigma_src.push_back(config.require_string(
                    "problem", "sigma_" + std::to_string(i) + "_" + std::to_string(j)));
        out.problem = presets::custom(d, m, T, b_src, sigma_src, f_src, g_src, q);
    } else {
        throw ConfigError("unknown problem preset '" + preset + "'");
    }

    out.x0 = config.get_doubles("problem", "x0");
    if (out.x0.empty()) out.x0.assign(static_cast<std::size_t>(d), 0.0);
    if (static_cast<int>(out.x0.size()) != d)
        throw ConfigError("x0 needs " + std::to_string(d) + " components");
    return out;
}

Grid build_grid(const RunConfig& config, const StoppingProblem& p, std::span<const double> x0) {
    const int n_space = static_cast<int>(config.get_int("solver", "n_space", 201));
    const int n_time = static_cast<int>(config.get_int("solver", "n_time", 200));
    Grid grid;
    auto lo = config.get_doubles("solver", "box_lo");
    auto hi = config.get_doubles("solver", "box_hi");
    if (lo.empty() && hi.empty()) {
        grid = Grid::sized_for(p, x0, n_space, n_time);
    } else {
        if (static_cast<int>(lo.size()) != p.d || static_cast<int>(hi.size()) != p.d)
            throw ConfigError("box_lo/box_hi need one entry per dimension");
        grid.lo = lo;
        grid.hi = hi;
        grid.n_space = n_space;
        grid.n_time = n_time;
    }
    const std::string boundary = config.get_string("solver", "boundary", "dirichlet-g");
    if (boundary == "dirichlet-g") grid.boundary = Grid::Boundary::DirichletG;
    else if (boundary == "linear-extrapolation") grid.boundary = Grid::Boundary::LinearExtrapolation;
    else throw ConfigError("unknown boundary mode '" + boundary + "'");
    return grid;
}

SolveOptions build_solve_options(const RunConfig& config) {
    SolveOptions opt;
    opt.scheme = pde_scheme_from_string(config.get_string("solver", "scheme", "psor"));
    opt.theta = config.get_double("solver", "theta", 0.5);
    opt.tol = config.get_double("solver", "tol", 1e-8);
    opt.max_iter = static_cast<int>(config.get_int("solver", "max_iter", 20000));
    opt.rannacher = config.get_bool("solver", "rannacher", true);
    opt.omega = config.get_double("solver", "omega", 1.2);
    return opt;
}

LatticeConfig build_lattice_config(const RunConfig& config) {
    LatticeConfig lc;
    lc.scheme = lattice_scheme_from_string(config.get_string("solver", "lattice_scheme", "binomial"));
    lc.n_steps = static_cast<int>(config.get_int("solver", "lattice_steps", 500));
    const std::string spacing = config.get_string("solver", "lattice_spacing", "auto");
    if (spacing == "auto") lc.spacing = LatticeSpacing::Auto;
    else if (spacing == "additive") lc.spacing = LatticeSpacing::Additive;
    else if (spacing == "multiplicative") lc.spacing = LatticeSpacing::Multiplicative;
    else throw ConfigError("unknown lattice_spacing '" + spacing + "'");
    return lc;
}

}  // namespace snell
