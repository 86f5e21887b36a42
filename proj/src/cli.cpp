#include "wkam/cli.hpp"
#include "wkam/observables.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace wkam {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string &s)
{
	const auto b = s.find_first_not_of(" \t\r\n");
	if (b == std::string::npos) return "";
	const auto e = s.find_last_not_of(" \t\r\n");
	return s.substr(b, e - b + 1);
}

std::string fmt(double v)
{
	char buf[64];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

double parse_double(const std::string &key, const std::string &v)
{
	char *end = nullptr;
	const double d = std::strtod(v.c_str(), &end);
	if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
		throw ConfigError("config: " + key + " expects a finite number, got '" + v + "'");
	return d;
}

long long parse_int(const std::string &key, const std::string &v)
{
	char *end = nullptr;
	const long long i = std::strtoll(v.c_str(), &end, 10);
	if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
	return i;
}

struct Param {
	std::string key;
	std::string help;
	std::function<void(RunConfig &, const std::string &)> set;
	std::function<std::string(const RunConfig &)> get;
};

template <typename T>
Param number(const std::string &key, T RunConfig::*field, const std::string &help)
{
	Param p;
	p.key = key;
	p.help = help;
	p.set = [key, field](RunConfig &c, const std::string &v) {
		if constexpr (std::is_floating_point_v<T>)
			c.*field = parse_double(key, v);
		else {
			const long long i = parse_int(key, v);
			if constexpr (std::is_unsigned_v<T>) {
				if (i < 0) throw ConfigError("config: " + key + " must be nonnegative");
			}
			c.*field = static_cast<T>(i);
		}
	};
	p.get = [field](const RunConfig &c) {
		if constexpr (std::is_floating_point_v<T>)
			return fmt(c.*field);
		else
			return std::to_string(c.*field);
	};
	return p;
}

Param text(const std::string &key, std::string RunConfig::*field, const std::string &help)
{
	return Param{key, help, [field](RunConfig &c, const std::string &v) { c.*field = v; },
				 [field](const RunConfig &c) { return c.*field; }};
}

const std::vector<Param> &params()
{
	static const std::vector<Param> p = {
		text("matrix", &RunConfig::matrix, "base matrix entries a,b,c,d (row major)"),
		number("roof", &RunConfig::roof, "roof height"),
		text("observable", &RunConfig::observable, "constant | coboundary | distsq | mixed | table"),
		number("value", &RunConfig::value, "value of the constant observable"),
		number("trig_a", &RunConfig::trig_a, "flow amplitude of the trigonometric potential"),
		number("trig_b", &RunConfig::trig_b, "base amplitude of the trigonometric potential"),
		text("table", &RunConfig::table, "node table (i,j,k,value) for the table observable"),
		number("n", &RunConfig::n, "base grid nodes per axis"),
		number("ns", &RunConfig::ns, "flow grid nodes per roof"),
		number("h", &RunConfig::h, "kernel time step (0: one flow step)"),
		number("c", &RunConfig::c, "deviation weight C"),
		number("reach", &RunConfig::reach, "kernel reach multiplier"),
		number("tol", &RunConfig::tol, "weak-KAM sup-change tolerance"),
		number("monotone_tol", &RunConfig::monotone_tol, "Stage-A monotonicity tolerance"),
		number("max_iters", &RunConfig::max_iters, "weak-KAM iteration cap"),
		number("ergodic_tol", &RunConfig::ergodic_tol, "relative tolerance of the ergodic cross-validation"),
		number("max_period", &RunConfig::max_period, "largest period in the periodic-orbit estimate"),
		number("drift_horizon", &RunConfig::drift_horizon, "time horizon of the drift estimate"),
		number("quadrature_step", &RunConfig::quadrature_step, "orbit-integral step"),
		number("seed", &RunConfig::seed, "random seed"),
		text("out", &RunConfig::out, "output directory"),
		number("threads", &RunConfig::threads, "worker thread cap"),
		number("reg_eps", &RunConfig::reg_eps, "regularizer box radius"),
		number("reg_tau", &RunConfig::reg_tau, "regularizer box length (divides the roof)"),
		number("samples", &RunConfig::samples, "off-grid subaction samples"),
		number("subaction_paths", &RunConfig::subaction_paths, "paths in the bounded-action cross-check"),
		number("liv_tau", &RunConfig::liv_tau, "Livsic atlas section spacing"),
		number("liv_rho", &RunConfig::liv_rho, "Livsic atlas chart radius"),
		number("liv_eps", &RunConfig::liv_eps, "Livsic atlas box radius"),
		number("liv_levels", &RunConfig::liv_levels, "Livsic atlas section levels"),
		number("liv_net", &RunConfig::liv_net, "Livsic atlas base net per axis"),
		number("liv_paths", &RunConfig::liv_paths, "paths in the Livsic scan"),
		number("liv_c", &RunConfig::liv_c, "deviation weight of the Livsic scan (0: C_4)"),
		number("sh_orbits", &RunConfig::sh_orbits, "pseudo-orbits in the shadowing suite"),
		number("sh_min_len", &RunConfig::sh_min_len, "shortest pseudo-orbit"),
		number("sh_max_len", &RunConfig::sh_max_len, "longest pseudo-orbit"),
		number("sh_min_noise", &RunConfig::sh_min_noise, "smallest noise scale"),
		number("sh_max_noise", &RunConfig::sh_max_noise, "largest noise scale"),
		number("ap_n", &RunConfig::ap_n, "a priori grid: base nodes per axis"),
		number("ap_ns", &RunConfig::ap_ns, "a priori grid: flow nodes"),
		number("ap_reach", &RunConfig::ap_reach, "a priori kernel reach multiplier"),
		number("ap_sources", &RunConfig::ap_sources, "a priori source nodes"),
		number("ap_pairs", &RunConfig::ap_pairs, "a priori target pairs per source"),
		number("ap_t", &RunConfig::ap_t, "a priori time"),
		number("sg_n", &RunConfig::sg_n, "semigroup grid: base nodes per axis"),
		number("sg_ns", &RunConfig::sg_ns, "semigroup grid: flow nodes"),
		number("sg_c", &RunConfig::sg_c, "semigroup deviation weight"),
		number("sg_horizon", &RunConfig::sg_horizon, "semigroup comparison horizon"),
		number("sg_h", &RunConfig::sg_h, "largest semigroup step"),
		number("sg_halvings", &RunConfig::sg_halvings, "number of step halvings"),
		number("sg_trials", &RunConfig::sg_trials, "random inputs for the min-plus laws"),
		number("atlas_tau", &RunConfig::atlas_tau, "atlas command: section spacing"),
		number("atlas_rho", &RunConfig::atlas_rho, "atlas command: chart radius"),
		number("atlas_eps", &RunConfig::atlas_eps, "atlas command: box radius"),
		number("atlas_net", &RunConfig::atlas_net, "atlas command: base net per axis"),
	};
	return p;
}

std::string dashed(std::string s)
{
	std::replace(s.begin(), s.end(), '_', '-');
	return s;
}

std::string undashed(std::string s)
{
	std::replace(s.begin(), s.end(), '-', '_');
	return s;
}

Mat2l parse_matrix(const std::string &s)
{
	std::vector<long long> v;
	std::stringstream ss(s);
	std::string cell;
	while (std::getline(ss, cell, ',')) v.push_back(parse_int("matrix", trim(cell)));
	if (v.size() != 4) throw ConfigError("config: matrix expects four comma-separated integers");
	Mat2l a;
	a << v[0], v[1], v[2], v[3];
	return a;
}

double node_scale(const Grid &g, const Observable &phi)
{
	double s = 0;
	for (int i = 0; i < g.size(); ++i) s = std::max(s, std::abs(phi(g.point(i))));
	return s > 0 ? s : 1.0;
}

CheckResult check(const std::string &name, double value, double bound, bool pass, const std::string &detail = "")
{
	return CheckResult{name, pass, value, bound, detail};
}

CheckResult at_most(const std::string &name, double value, double bound, const std::string &detail = "")
{
	return check(name, value, bound, value <= bound, detail);
}

CheckResult at_least(const std::string &name, double value, double bound, const std::string &detail = "")
{
	return check(name, value, bound, value >= bound, detail);
}

class CsvWriter {
public:
	CsvWriter(const std::filesystem::path &path, const std::string &header) : out_(path)
	{
		if (!out_) throw std::runtime_error("cannot write " + path.string());
		out_ << header << "\n";
	}
	template <typename... Ts>
	void row(const Ts &...cells)
	{
		bool first = true;
		((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
		out_ << "\n";
	}

private:
	static std::string cell(double v) { return fmt(v); }
	static std::string cell(int v) { return std::to_string(v); }
	static std::string cell(long long v) { return std::to_string(v); }
	static std::string cell(bool v) { return v ? "1" : "0"; }
	static std::string cell(const std::string &v) { return v; }
	static std::string cell(const char *v) { return v; }
	std::ofstream out_;
};

json config_json(const RunConfig &c)
{
	json j = json::object();
	for (const auto &p : params()) j[p.key] = p.get(c);
	return j;
}

json checks_json(const std::vector<CheckResult> &checks)
{
	json a = json::array();
	for (const auto &c : checks) {
		json j;
		j["name"] = c.name;
		j["pass"] = c.pass;
		j["value"] = std::isfinite(c.value) ? json(c.value) : json(fmt(c.value));
		j["bound"] = std::isfinite(c.bound) ? json(c.bound) : json(fmt(c.bound));
		if (!c.detail.empty()) j["detail"] = c.detail;
		a.push_back(j);
	}
	return a;
}

bool all_pass(const std::vector<CheckResult> &checks)
{
	return std::all_of(checks.begin(), checks.end(), [](const CheckResult &c) { return c.pass; });
}

void print_checks(std::ostream &out, const std::vector<CheckResult> &checks)
{
	for (const auto &c : checks)
		out << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << fmt(c.value) << " bound=" << fmt(c.bound)
			<< (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
}

void write_summary(const std::string &dir, const std::string &command, const RunConfig &cfg,
				   const std::vector<CheckResult> &checks, const std::string &status, json extra)
{
	if (dir.empty()) return;
	json j;
	j["command"] = command;
	j["status"] = status;
	j["pass"] = status == "pass";
	j["checks"] = checks_json(checks);
	j["results"] = std::move(extra);
	j["config"] = config_json(cfg);
	std::ofstream out(std::filesystem::path(dir) / "summary.json");
	out << j.dump(2) << "\n";
}

void write_constants(const std::filesystem::path &path, const LivsicConstants &k)
{
	CsvWriter w(path, "name,value");
	w.row("c1", k.c1);
	w.row("c2", k.c2);
	w.row("c3", k.c3);
	w.row("c4", k.c4);
	w.row("a_star", k.a_star);
	w.row("delta_lambda", k.delta_lambda);
	w.row("c_lambda", k.c_lambda_distortion);
	w.row("k_tilde", k.k_gamma);
	w.row("n_gamma", k.n_gamma);
	w.row("lip_gamma", k.lip_gamma);
	w.row("lip_phi", k.lip_phi);
	w.row("diam_omega", k.diam_omega);
	w.row("tau", k.tau);
	w.row("eps", k.eps);
}

json constants_json(const LivsicConstants &k)
{
	json j;
	j["c1"] = k.c1;
	j["c2"] = k.c2;
	j["c3"] = k.c3;
	j["c4"] = k.c4;
	j["a_star"] = k.a_star;
	j["delta_lambda"] = k.delta_lambda;
	j["c_lambda"] = k.c_lambda_distortion;
	j["k_tilde"] = k.k_gamma;
	j["n_gamma"] = k.n_gamma;
	j["lip_gamma"] = k.lip_gamma;
	j["lip_phi"] = k.lip_phi;
	j["diam_omega"] = k.diam_omega;
	return j;
}

} // namespace

std::vector<std::string> config_keys()
{
	std::vector<std::string> k;
	for (const auto &p : params()) k.push_back(p.key);
	return k;
}

void set_config_value(RunConfig &config, const std::string &key_in, const std::string &value)
{
	const std::string key = undashed(trim(key_in));
	for (const auto &p : params())
		if (p.key == key) {
			p.set(config, trim(value));
			return;
		}
	throw ConfigError("config: unknown key '" + key + "'");
}

std::map<std::string, std::string> config_values(const RunConfig &config)
{
	std::map<std::string, std::string> m;
	for (const auto &p : params()) m[p.key] = p.get(config);
	return m;
}

void apply_config_file(RunConfig &config, std::istream &in)
{
	std::string line;
	int number = 0;
	while (std::getline(in, line)) {
		++number;
		const auto hash = line.find('#');
		if (hash != std::string::npos) line.erase(hash);
		line = trim(line);
		if (line.empty()) continue;
		const auto eq = line.find('=');
		if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
		set_config_value(config, line.substr(0, eq), line.substr(eq + 1));
	}
}

void validate(const RunConfig &c)
{
	auto need = [](bool ok, const std::string &what) {
		if (!ok) throw ConfigError("invalid config: " + what);
	};
	make_model(c);
	const std::vector<std::string> families{"constant", "coboundary", "distsq", "mixed", "table"};
	need(std::find(families.begin(), families.end(), c.observable) != families.end(),
		 "observable must be one of constant, coboundary, distsq, mixed, table");
	need(c.observable != "table" || !c.table.empty(), "observable = table needs table = <file>");
	need(c.n >= 5 && c.ns >= 2, "grid needs n >= 5 and ns >= 2");
	need(c.h >= 0 && (c.h > 0 ? c.h : c.roof / c.ns) <= c.roof / 10 * (1 + 1e-12),
		 "0 < h <= roof / 10 (h = 0 means roof / ns, so ns >= 10)");
	need(c.c >= 0, "c >= 0");
	need(c.reach >= 2, "reach >= 2");
	need(c.n >= 2 * static_cast<int>(std::ceil(c.reach - 1e-9)) + 1, "n >= 2 ceil(reach) + 1");
	need(c.observable != "table" || std::filesystem::exists(c.table), "cannot read table " + c.table);
	need(c.tol > 0, "tol > 0");
	need(c.monotone_tol > 0, "monotone_tol > 0");
	need(c.max_iters > 0, "max_iters > 0");
	need(c.ergodic_tol > 0, "ergodic_tol > 0");
	need(c.max_period >= 1, "max_period >= 1");
	need(c.drift_horizon > 0, "drift_horizon > 0");
	need(c.quadrature_step > 0, "quadrature_step > 0");
	need(!c.out.empty(), "out must be a directory name");
	need(c.threads >= 1, "threads >= 1");
	need(c.reg_eps > 0 && c.reg_eps < c.reg_tau / 2, "0 < reg_eps < reg_tau / 2");
	need(c.samples >= 1 && c.subaction_paths >= 0, "samples >= 1 and subaction_paths >= 0");
	need(c.liv_tau > 0 && c.liv_rho > 0 && c.liv_eps > 0, "liv_tau, liv_rho, liv_eps > 0");
	need(c.liv_levels >= 1 && c.liv_net >= 1 && c.liv_paths >= 1, "liv_levels, liv_net, liv_paths >= 1");
	need(c.liv_c >= 0, "liv_c >= 0");
	need(c.sh_orbits >= 1 && c.sh_min_len >= 1 && c.sh_max_len >= c.sh_min_len, "shadowing lengths");
	need(c.sh_min_noise > 0 && c.sh_max_noise >= c.sh_min_noise, "shadowing noise range");
	need(c.ap_n >= 2 * static_cast<int>(std::ceil(c.ap_reach - 1e-9)) + 1 && c.ap_ns >= 10, "a priori grid");
	need(c.ap_reach >= 2 && c.ap_sources >= 1 && c.ap_pairs >= 1 && c.ap_t > 0, "a priori sampling");
	need(c.sg_n >= 5 && c.sg_ns >= 2 && c.sg_c >= 0 && c.sg_horizon > 0 && c.sg_h > 0, "semigroup grid");
	need(c.sg_halvings >= 1 && c.sg_trials >= 1, "semigroup halvings and trials");
	need(c.atlas_tau > 0 && c.atlas_rho > 0 && c.atlas_eps > 0 && c.atlas_net >= 1, "atlas parameters");
}

SuspensionFlow make_model(const RunConfig &config)
{
	try {
		return SuspensionFlow(parse_matrix(config.matrix), config.roof);
	} catch (const ConfigError &) {
		throw;
	} catch (const std::exception &e) {
		throw ConfigError(std::string("invalid config: model: ") + e.what());
	}
}

Observable make_observable(const RunConfig &config, const SuspensionFlow &model)
{
	const std::string &o = config.observable;
	if (o == "constant") return constant_observable(config.value);
	if (o == "distsq") return distance_squared_observable(model);
	const TrigPotential u0(model, config.trig_a, config.trig_b);
	if (o == "coboundary") return coboundary_observable(u0);
	if (o == "mixed") return sum_observable(coboundary_observable(u0), distance_squared_observable(model), "mixed");
	if (o == "table") {
		std::ifstream in(config.table);
		if (!in) throw ConfigError("invalid config: cannot read table " + config.table);
		try {
			return table_observable(read_grid_function(Grid(model, config.n, config.ns), in), "table");
		} catch (const std::invalid_argument &e) {
			throw ConfigError(std::string("invalid config: ") + e.what());
		}
	}
	throw ConfigError("invalid config: unknown observable " + o);
}

std::optional<double> known_ergodic_value(const RunConfig &config)
{
	if (config.observable == "constant") return config.value;
	if (config.observable == "coboundary" || config.observable == "distsq" || config.observable == "mixed") return 0.0;
	return std::nullopt;
}

LivsicSetup livsic_setup(const RunConfig &config, const SuspensionFlow &model, const Observable &phi)
{
	AtlasOptions ao;
	ao.n_levels = config.liv_levels;
	LivsicSetup s;
	s.atlas = build_atlas(model, config.liv_tau, config.liv_rho, config.liv_eps, config.liv_net, ao);
	std::vector<LocalHyperbolicMap> maps;
	for (int x = 0; x < s.atlas.n_gamma; ++x)
		for (int y = 0; y < s.atlas.n_gamma; ++y)
			if (forward_admissible(s.atlas, x, y).admissible) maps.push_back(local_map(s.atlas, x, y));
	if (maps.empty()) throw std::runtime_error("livsic_setup: the atlas has no admissible pair");
	s.k_tilde = estimate_k_gamma(chain_statistics(maps));
	s.constants = compute_constants(s.atlas, phi, s.k_tilde);
	return s;
}

SolveResult run_solve(const RunConfig &config, const std::string &out_dir)
{
	SolveResult r;
	const SuspensionFlow model = make_model(config);
	const Observable phi = make_observable(config, model);
	const Grid grid(model, config.n, config.ns);
	const double h = config.h > 0 ? config.h : grid.ds();
	const double scale = node_scale(grid, phi);
	namespace fs = std::filesystem;
	if (!out_dir.empty()) fs::create_directories(out_dir);
	const fs::path dir(out_dir);
	std::string stage;
	try {
		stage = "kernel";
		ActionKernel kernel = build_kernel(grid, phi, config.c, 0.0, h, config.reach, config.threads);

		stage = "ergodic";
		ErgodicParams ep;
		ep.max_period = config.max_period;
		ep.quadrature_step = config.quadrature_step;
		ep.drift_horizon = config.drift_horizon;
		ep.tolerance = config.ergodic_tol * scale;
		ep.threads = config.threads;
		r.ergodic = cross_validate(model, phi, kernel, ep);
		r.phi_bar = r.ergodic->howard;
		r.checks.push_back(at_most("ergodic_cross_validation", r.ergodic->disagreement, ep.tolerance,
								   "periodic " + fmt(r.ergodic->periodic) + ", drift " + fmt(r.ergodic->drift)));
		if (const auto known = known_ergodic_value(config))
			r.checks.push_back(at_most("ergodic_value_oracle", std::abs(r.phi_bar - *known), 1e-3 * scale));
		kernel = rebase(std::move(kernel), r.phi_bar - kernel.phi_bar);

		stage = "weak_kam";
		WeakKamOptions wo;
		wo.tol = config.tol;
		wo.monotone_tol = config.monotone_tol;
		wo.max_iters = config.max_iters;
		wo.threads = config.threads;
		r.solution = weak_kam_solve(kernel, wo);
		const WeakKamSolution &sol = *r.solution;
		r.checks.push_back(at_most("weak_kam_residual", sol.residual, 1e-6 * scale));
		double min_inc = 0;
		for (double v : sol.increment_history) min_inc = std::min(min_inc, v);
		r.checks.push_back(at_least("weak_kam_monotone", min_inc, -config.monotone_tol));
		r.checks.push_back(at_most("weak_kam_lipschitz", sol.lipschitz, config.c * (1 + grid.diagonal())));
		if (config.observable == "coboundary") {
			const TrigPotential u0(model, config.trig_a, config.trig_b);
			Eigen::VectorXd d(grid.size());
			for (int i = 0; i < grid.size(); ++i) d(i) = sol.u.values(i) - u0(grid.point(i));
			d.array() -= d.mean();
			r.checks.push_back(at_most("coboundary_recovery", d.cwiseAbs().maxCoeff(),
									   5 * grid.diagonal() * u0.lipschitz()));
		}
		if (config.observable == "constant")
			r.checks.push_back(at_most("constant_solution", sol.u.values.maxCoeff() - sol.u.values.minCoeff(),
									   1e-9 * scale));

		stage = "regularize";
		CoverOptions co;
		co.eps = config.reg_eps;
		co.tau = config.reg_tau;
		co.subaction_slack = phi.lipschitz_constant * grid.ds() * grid.ds() / 4 + 10 * config.tol * scale;
		const auto cover = build_cover(grid, phi, co);
		r.certificate = regularize_all(sol.u, cover, phi, r.phi_bar, config.threads);
		const SubactionCertificate &cert = *r.certificate;
		r.checks.push_back(at_least("certificate_margin", cert.min_margin, -cert.slack));
		r.checks.push_back(at_most("certificate_locality", cert.locality_violations, 0));
		r.checks.push_back(check("certificate_lipschitz_lie", cert.lip_lie, std::numeric_limits<double>::infinity(),
								 std::isfinite(cert.lip_lie),
								 "ratio to Lip(phi) " + fmt(cert.ratio_lie)));

		stage = "verify_subaction";
		r.report = verify_subaction(cert, phi, r.phi_bar, config.samples, config.seed + 4, config.subaction_paths);
		r.checks.push_back(at_least("subaction_offgrid", r.report->worst_margin, -r.report->slack,
									std::to_string(r.report->samples) + " samples"));
		r.checks.push_back(at_most("subaction_bounded_action", r.report->justification_violations, 0));

		stage = "constants";
		r.constants = livsic_setup(config, model, phi).constants;
	} catch (const ConfigError &) {
		throw;
	} catch (const std::exception &e) {
		r.failed_stage = stage;
		r.message = e.what();
	}
	r.pass = r.failed_stage.empty() && all_pass(r.checks);

	if (!out_dir.empty()) {
		json res;
		if (r.ergodic) {
			CsvWriter w(dir / "ergodic.csv", "estimator,value");
			w.row("periodic_orbits", r.ergodic->periodic);
			w.row("minplus_drift", r.ergodic->drift);
			w.row("howard", r.ergodic->howard);
			w.row("tolerance", r.ergodic->tolerance);
			w.row("disagreement", r.ergodic->disagreement);
			res["phi_bar"] = r.phi_bar;
			res["phi_bar_periodic"] = r.ergodic->periodic;
			res["phi_bar_drift"] = r.ergodic->drift;
		}
		if (r.solution) {
			std::ofstream wk(dir / "weak_kam.csv");
			write_grid_function(wk, r.solution->u);
			CsvWriter w(dir / "residual_history.csv", "iteration,residual,min_increment");
			for (size_t i = 0; i < r.solution->residual_history.size(); ++i)
				w.row(static_cast<int>(i), r.solution->residual_history[i],
					  i < r.solution->increment_history.size() ? r.solution->increment_history[i] : 0.0);
			res["weak_kam_residual"] = r.solution->residual;
			res["weak_kam_lipschitz"] = r.solution->lipschitz;
			res["stage_a_steps"] = r.solution->stage_a_steps;
			res["stage_b_iterations"] = r.solution->iterations;
		}
		if (r.certificate) {
			const auto &cert = *r.certificate;
			CsvWriter w(dir / "certificate.csv", "i,j,k,x1,x2,s,u,lie,margin");
			for (int idx = 0; idx < grid.size(); ++idx) {
				int i, j, k;
				grid.coords(idx, i, j, k);
				const Vec3 p = grid.point(idx);
				w.row(i, j, k, p(0), p(1), p(2), cert.u.values(idx), cert.lie(idx), cert.margin(idx));
			}
			CsvWriter l(dir / "lipschitz.csv", "quantity,value");
			l.row("lip_phi", cert.lip_phi);
			l.row("lip_u", cert.lip_u);
			l.row("lip_lie", cert.lip_lie);
			l.row("ratio_u", cert.ratio_u);
			l.row("ratio_lie", cert.ratio_lie);
			res["certificate_margin"] = cert.min_margin;
			res["certificate_slack"] = cert.slack;
			res["certificate_boxes"] = cert.boxes;
			res["lip_u"] = cert.lip_u;
			res["lip_lie"] = cert.lip_lie;
		}
		if (r.report) {
			res["offgrid_samples"] = r.report->samples;
			res["offgrid_seam_excluded"] = r.report->excluded_seam;
			res["offgrid_worst_margin"] = r.report->worst_margin;
		}
		if (r.constants) {
			write_constants(dir / "constants.csv", *r.constants);
			res["constants"] = constants_json(*r.constants);
		}
		if (!r.failed_stage.empty()) {
			res["failed_stage"] = r.failed_stage;
			res["message"] = r.message;
		}
		write_summary(out_dir, "solve", config, r.checks, r.pass ? "pass" : "fail", res);
	}
	return r;
}

namespace {

int finish(std::ostream &out, const std::string &dir, const std::string &command, const RunConfig &cfg,
		   const std::vector<CheckResult> &checks, json extra, const std::string &status_override = "")
{
	print_checks(out, checks);
	const std::string status = !status_override.empty() ? status_override : (all_pass(checks) ? "pass" : "fail");
	write_summary(dir, command, cfg, checks, status, std::move(extra));
	out << command << ": " << status << "\n";
	return status == "fail" ? 1 : 0;
}

int cmd_verify(const RunConfig &cfg, const std::string &suite, std::ostream &out)
{
	namespace fs = std::filesystem;
	fs::create_directories(cfg.out);
	const fs::path dir(cfg.out);
	const SuspensionFlow model = make_model(cfg);
	const Observable phi = make_observable(cfg, model);
	std::vector<CheckResult> checks;
	json res;
	if (suite == "semigroup") {
		const Grid grid(model, cfg.n, cfg.ns);
		const double h = cfg.h > 0 ? cfg.h : grid.ds();
		const ActionKernel kernel = build_kernel(grid, phi, cfg.c, 0.0, h, cfg.reach, cfg.threads);
		const MinPlusLawReport laws = check_minplus_laws(kernel, cfg.sg_trials, cfg.seed, cfg.threads);
		checks.push_back(at_most("monotonicity", laws.monotonicity_violations, 0));
		checks.push_back(at_most("constant_equivariance", laws.equivariance_violations, 0,
								 "float deviation " + fmt(laws.float_equivariance_deviation)));
		checks.push_back(at_most("inf_commutation", laws.inf_violations, 0));
		const Grid fine(model, cfg.sg_n, cfg.sg_ns);
		const TrigPotential u0(model, cfg.trig_a, cfg.trig_b);
		Eigen::VectorXd u(fine.size());
		for (int i = 0; i < fine.size(); ++i) u(i) = u0(fine.point(i));
		std::vector<double> hs;
		for (int k = 0; k <= cfg.sg_halvings; ++k) hs.push_back(cfg.sg_h / std::ldexp(1.0, k));
		const SemigroupReport sg = semigroup_consistency(fine, phi, u, cfg.sg_c, cfg.sg_horizon, hs, 2.0, cfg.threads);
		CsvWriter w(dir / "semigroup.csv", "h,defect,ratio");
		for (size_t i = 0; i < sg.h.size(); ++i) w.row(sg.h[i], sg.defects[i], i == 0 ? 0.0 : sg.ratios[i - 1]);
		for (size_t i = 0; i < sg.ratios.size(); ++i)
			checks.push_back(check("semigroup_ratio_" + std::to_string(i + 1), sg.ratios[i], sg.ratio_lo,
								   sg.ratios[i] >= sg.ratio_lo && sg.ratios[i] <= sg.ratio_hi, "range [3, 5]"));
		res["float_equivariance_deviation"] = laws.float_equivariance_deviation;
	} else if (suite == "apriori") {
		AprioriOptions ao;
		ao.n = cfg.ap_n;
		ao.ns = cfg.ap_ns;
		ao.reach_multiplier = cfg.ap_reach;
		ao.n_sources = cfg.ap_sources;
		ao.pairs_per_source = cfg.ap_pairs;
		ao.seed = cfg.seed + 6;
		ao.threads = cfg.threads;
		const AprioriReport r = verify_apriori(model, phi, cfg.c, cfg.ap_t, ao);
		for (int i = 0; i < 3; ++i)
			checks.push_back(at_most("apriori_item_" + std::to_string(i + 1), r.violations[i], 0,
									 "worst excess " + fmt(r.worst_excess[i])));
		checks.push_back(at_most("apriori_unreachable", r.unreachable, 0));
		res["triples"] = r.n_triples;
		res["slack"] = r.slack;
	} else if (suite == "livsic") {
		const LivsicSetup s = livsic_setup(cfg, model, phi);
		const double c = cfg.liv_c > 0 ? cfg.liv_c : s.constants.c4;
		const double phi_bar = known_ergodic_value(cfg).value_or(0.0);
		const ScanReport r = livsic_lower_bound_scan(s.atlas, phi, phi_bar, s.constants, c, cfg.liv_paths, cfg.seed + 2);
		write_constants(dir / "constants.csv", s.constants);
		CsvWriter w(dir / "livsic_families.csv", "family,paths,min_action");
		for (int f = 0; f < 5; ++f) w.row(to_string(static_cast<PathFamily>(f)), r.family_counts[f], r.family_min[f]);
		checks.push_back(at_least("livsic_lower_bound", r.min_action, r.bound,
								  std::to_string(r.violations) + " violations"));
		checks.push_back(at_least("livsic_periodic_bound", r.periodic_min_action, r.periodic_bound,
								  std::to_string(r.periodic_violations) + " violations over " +
									  std::to_string(r.periodic_paths) + " periodic pseudo-orbits"));
		checks.push_back(at_most("livsic_block_certificates", r.certificate_failures + r.decomposition_errors, 0));
		res["c"] = c;
		res["constants"] = constants_json(s.constants);
		res["guaranteed"] = r.guaranteed;
		if (!r.guaranteed) {
			out << "note: C = " << fmt(c) << " < C1 = " << fmt(s.constants.c1) << ": bound not guaranteed\n";
			for (auto &ch : checks) ch.detail += ch.detail.empty() ? "bound not guaranteed" : "; bound not guaranteed";
			return finish(out, cfg.out, "verify livsic", cfg, checks, res, "not_guaranteed");
		}
	} else if (suite == "shadowing") {
		ShadowingSuiteOptions so;
		so.n_orbits = cfg.sh_orbits;
		so.min_length = cfg.sh_min_len;
		so.max_length = cfg.sh_max_len;
		so.min_noise = cfg.sh_min_noise;
		so.max_noise = cfg.sh_max_noise;
		so.seed = cfg.seed;
		const ShadowingSuiteReport r = shadowing_suite(model, so);
		checks.push_back(at_most("shadowing_failures", r.failures, 0, "K_Gamma " + fmt(r.k_gamma)));
		checks.push_back(at_most("shadowing_ratio", r.max_ratio, r.k_gamma));
		checks.push_back(at_most("shadowing_residual", r.max_residual, 1e-10));
	} else if (suite == "subaction") {
		const SolveResult s = run_solve(cfg, "");
		if (!s.failed_stage.empty())
			checks.push_back(check("stage_" + s.failed_stage, 0, 0, false, s.message));
		for (const auto &c : s.checks)
			if (c.name.rfind("certificate", 0) == 0 || c.name.rfind("subaction", 0) == 0) checks.push_back(c);
	} else {
		throw ConfigError("unknown suite " + suite);
	}
	return finish(out, cfg.out, "verify " + suite, cfg, checks, res);
}

int cmd_atlas(const RunConfig &cfg, std::ostream &out)
{
	namespace fs = std::filesystem;
	fs::create_directories(cfg.out);
	const SuspensionFlow model = make_model(cfg);
	const FlowBoxAtlas atlas = build_atlas(model, cfg.atlas_tau, cfg.atlas_rho, cfg.atlas_eps, cfg.atlas_net);
	CsvWriter w(fs::path(cfg.out) / "atlas_boxes.csv", "box,x1,x2,s");
	for (int i = 0; i < atlas.n_gamma; ++i) {
		const Vec3 &c = atlas.boxes[i].center;
		w.row(i, c(0), c(1), c(2));
	}
	std::vector<CheckResult> checks;
	checks.push_back(at_most("covering_radius", atlas.covering_radius, atlas.eps));
	int admissible = 0;
	for (int y = 0; y < atlas.n_gamma; ++y)
		if (forward_admissible(atlas, 0, y).admissible) {
			++admissible;
			const HyperbolicCertificate cert = certify_hyperbolic(local_map(atlas, 0, y), 200, cfg.seed);
			for (const auto &item : cert.items)
				checks.push_back(check("box0_to_" + std::to_string(y) + "_" + item.name, item.measured, item.bound, item.pass));
		}
	json res;
	res["n_gamma"] = atlas.n_gamma;
	res["lip_gamma"] = atlas.lip_gamma;
	res["covering_radius"] = atlas.covering_radius;
	res["eps_rho"] = atlas.hyper.eps_rho;
	res["sigma_u"] = atlas.hyper.sigma_u;
	res["sigma_s"] = atlas.hyper.sigma_s;
	res["eta"] = atlas.hyper.eta;
	res["admissible_from_box0"] = admissible;
	return finish(out, cfg.out, "atlas", cfg, checks, res);
}

int cmd_shadow(const RunConfig &cfg, std::ostream &out)
{
	namespace fs = std::filesystem;
	fs::create_directories(cfg.out);
	ShadowingSuiteOptions so;
	so.n_orbits = cfg.sh_orbits;
	so.min_length = cfg.sh_min_len;
	so.max_length = cfg.sh_max_len;
	so.min_noise = cfg.sh_min_noise;
	so.max_noise = cfg.sh_max_noise;
	so.seed = cfg.seed;
	const ShadowingSuiteReport r = shadowing_suite(make_model(cfg), so);
	CsvWriter w(fs::path(cfg.out) / "shadow_cases.csv",
				"case,length,base_period,noise,error_sum,distance_sum,k_gamma,max_residual,iterations,pass");
	for (size_t i = 0; i < r.cases.size(); ++i) {
		const auto &c = r.cases[i];
		w.row(static_cast<int>(i), c.length, c.base_period, c.noise, c.error_sum, c.distance_sum, c.k_gamma,
			  c.max_residual, c.iterations, c.pass);
	}
	std::vector<CheckResult> checks;
	checks.push_back(at_most("shadowing_failures", r.failures, 0));
	checks.push_back(at_most("shadowing_ratio", r.max_ratio, r.k_gamma));
	json res;
	res["k_gamma"] = r.k_gamma;
	res["max_residual"] = r.max_residual;
	return finish(out, cfg.out, "shadow", cfg, checks, res);
}

int cmd_constants(const RunConfig &cfg, std::ostream &out)
{
	namespace fs = std::filesystem;
	fs::create_directories(cfg.out);
	const SuspensionFlow model = make_model(cfg);
	const LivsicSetup s = livsic_setup(cfg, model, make_observable(cfg, model));
	write_constants(fs::path(cfg.out) / "constants.csv", s.constants);
	const auto &k = s.constants;
	out << "C1 " << fmt(k.c1) << "\nC2 " << fmt(k.c2) << "\nC3 " << fmt(k.c3) << "\nC4 " << fmt(k.c4) << "\nA_* "
		<< fmt(k.a_star) << "\ndelta_Lambda " << fmt(k.delta_lambda) << "\n";
	std::vector<CheckResult> checks;
	checks.push_back(at_least("c4_dominates_c2_c3", k.c4, std::max(k.c2, k.c3)));
	return finish(out, cfg.out, "constants", cfg, checks, constants_json(k));
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err)
{
	CLI::App app{"Weak-KAM solutions and subactions for suspension flows"};
	app.set_help_flag("--help", "print help and exit");
	app.require_subcommand(1);
	app.fallthrough();
	std::map<std::string, std::string> flags;
	for (const auto &p : params()) app.add_option("--" + dashed(p.key), flags[p.key], p.help);
	std::string config_path;
	app.add_option("--config", config_path, "key = value file; its entries override flags");
	auto *solve = app.add_subcommand("solve", "ergodic value, weak-KAM solution, regularized subaction");
	auto *verify = app.add_subcommand("verify", "run a verification suite");
	std::string suite;
	verify->add_option("suite", suite, "semigroup | apriori | livsic | shadowing | subaction")
		->required()
		->check(CLI::IsMember({"semigroup", "apriori", "livsic", "shadowing", "subaction"}));
	auto *atlas = app.add_subcommand("atlas", "build and certify a flow-box atlas");
	auto *shadow = app.add_subcommand("shadow", "shadow randomized periodic pseudo-orbits");
	auto *constants = app.add_subcommand("constants", "positive Livsic constants");
	for (auto *s : {solve, verify, atlas, shadow, constants}) s->fallthrough();

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		const int code = app.exit(e, out, err);
		return code == 0 ? 0 : 2;
	}

	RunConfig cfg;
	try {
		for (const auto &p : params())
			if (app.count("--" + dashed(p.key)) > 0) p.set(cfg, flags[p.key]);
		if (!config_path.empty()) {
			std::ifstream in(config_path);
			if (!in) throw ConfigError("cannot read config file " + config_path);
			apply_config_file(cfg, in);
		}
		validate(cfg);
	} catch (const ConfigError &e) {
		err << e.what() << "\n";
		return 2;
	}

	try {
		if (solve->parsed()) {
			const SolveResult r = run_solve(cfg, cfg.out);
			print_checks(out, r.checks);
			if (!r.failed_stage.empty()) err << "stage " << r.failed_stage << " failed: " << r.message << "\n";
			out << "solve: " << (r.pass ? "pass" : "fail") << "\n";
			return r.pass ? 0 : 1;
		}
		if (verify->parsed()) return cmd_verify(cfg, suite, out);
		if (atlas->parsed()) return cmd_atlas(cfg, out);
		if (shadow->parsed()) return cmd_shadow(cfg, out);
		if (constants->parsed()) return cmd_constants(cfg, out);
	} catch (const ConfigError &e) {
		err << e.what() << "\n";
		return 2;
	} catch (const std::exception &e) {
		err << "error: " << e.what() << "\n";
		return 1;
	}
	return 2;
}

} // namespace wkam
