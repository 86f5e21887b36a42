#pragma once

#include "wkam/lax_oleinik.hpp"
#include "wkam/livsic.hpp"
#include "wkam/regularize.hpp"
#include "wkam/shadowing.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wkam {

class ConfigError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

struct RunConfig {
	// Model.
	std::string matrix = "2,1,1,1";
	double roof = 1.0;
	// Observable: constant, coboundary, distsq, mixed or table.
	std::string observable = "coboundary";
	double value = 0.0;
	double trig_a = 0.15;
	double trig_b = 0.05;
	std::string table;
	// Grid and kernel; h = 0 means one flow step ds.
	int n = 64;
	int ns = 16;
	double h = 0;
	double c = 2.0;
	double reach = 2.0;
	// Solver tolerances.
	double tol = 1e-7;
	double monotone_tol = 1e-9;
	int max_iters = 20000;
	double ergodic_tol = 1e-2;
	int max_period = 6;
	double drift_horizon = 10.0;
	double quadrature_step = 1e-3;
	// Run control.
	unsigned long long seed = 1;
	std::string out = "wkam_out";
	int threads = 1;
	// Regularization.
	double reg_eps = 0.1;
	double reg_tau = 0.5;
	int samples = 10000;
	int subaction_paths = 100;
	// Livsic atlas and scan; liv_c = 0 means C_4.
	double liv_tau = 0.5;
	double liv_rho = 0.15;
	double liv_eps = 0.16;
	int liv_levels = 4;
	int liv_net = 5;
	int liv_paths = 10000;
	double liv_c = 0;
	// Shadowing suite.
	int sh_orbits = 1000;
	int sh_min_len = 2;
	int sh_max_len = 50;
	double sh_min_noise = 1e-6;
	double sh_max_noise = 1e-2;
	// A priori estimates.
	int ap_n = 16;
	int ap_ns = 10;
	double ap_reach = 4.0;
	int ap_sources = 50;
	int ap_pairs = 10;
	double ap_t = 0.5;
	// Semigroup suite.
	int sg_n = 8;
	int sg_ns = 160;
	double sg_c = 10.0;
	double sg_horizon = 0.2;
	double sg_h = 0.05;
	int sg_halvings = 3;
	int sg_trials = 100;
	// Atlas command.
	double atlas_tau = 1.0;
	double atlas_rho = 0.3;
	double atlas_eps = 0.2;
	int atlas_net = 5;
};

// Keys accepted by config files; each is also a long flag with '_' spelled '-'.
std::vector<std::string> config_keys();
void set_config_value(RunConfig &config, const std::string &key, const std::string &value);
std::map<std::string, std::string> config_values(const RunConfig &config);
// Lines "key = value"; '#' starts a comment.
void apply_config_file(RunConfig &config, std::istream &in);
void validate(const RunConfig &config);

SuspensionFlow make_model(const RunConfig &config);
Observable make_observable(const RunConfig &config, const SuspensionFlow &model);
// Exact ergodic minimizing value of the built-in families, when known.
std::optional<double> known_ergodic_value(const RunConfig &config);

struct LivsicSetup {
	FlowBoxAtlas atlas;
	double k_tilde = 0;
	LivsicConstants constants;
};

// Livsic atlas of the config; k_tilde is estimated from the hyperbolic maps of all admissible pairs.
LivsicSetup livsic_setup(const RunConfig &config, const SuspensionFlow &model, const Observable &phi);

struct CheckResult {
	std::string name;
	bool pass = false;
	double value = 0;
	double bound = 0;
	std::string detail;
};

struct SolveResult {
	std::optional<ErgodicEstimate> ergodic;
	double phi_bar = 0;
	std::optional<WeakKamSolution> solution;
	std::optional<SubactionCertificate> certificate;
	std::optional<SubactionReport> report;
	std::optional<LivsicConstants> constants;
	std::vector<CheckResult> checks;
	std::string failed_stage;
	std::string message;
	bool pass = false;
};

// model -> phi_bar -> weak-KAM -> regularize -> certify; writes artifacts to out_dir unless it is empty.
SolveResult run_solve(const RunConfig &config, const std::string &out_dir);

// Entry point of the command-line tool. Exit codes: 0 pass, 1 property failure, 2 usage or config error.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace wkam
