#ifndef SNELL_CONFIG_HPP
#define SNELL_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

#include "snell/lattice.hpp"
#include "snell/model.hpp"
#include "snell/pde.hpp"

namespace snell {

/**
 * Sectioned key-value run configuration (INI-like). Values may be quoted;
 * '#' and ';' start comments. `--set section.key=value` overrides are
 * applied with `set`.
 */
class RunConfig {
public:
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);

    void set(const std::string& dotted_key, const std::string& value);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    std::string require_string(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Problem plus its start state, assembled from the [problem] section.
struct ConfiguredProblem {
    StoppingProblem problem;
    std::vector<double> x0;
};

ConfiguredProblem build_problem(const RunConfig& config);

/// Grid from [solver]; auto-sizes the box when box_lo/box_hi are absent.
Grid build_grid(const RunConfig& config, const StoppingProblem& p, std::span<const double> x0);

SolveOptions build_solve_options(const RunConfig& config);

struct LatticeConfig {
    LatticeScheme scheme = LatticeScheme::Binomial;
    LatticeSpacing spacing = LatticeSpacing::Auto;
    int n_steps = 500;
};

LatticeConfig build_lattice_config(const RunConfig& config);

}  // namespace snell

#endif  // SNELL_CONFIG_HPP
