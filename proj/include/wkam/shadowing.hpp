#pragma once

#include "wkam/geometry_charts.hpp"

#include <limits>
#include <string>
#include <vector>

namespace wkam {

class ShadowingDivergence : public std::runtime_error {
public:
	ShadowingDivergence(const std::string &what, std::vector<double> history)
		: std::runtime_error(what), history_(std::move(history)) {}
	const std::vector<double> &history() const { return history_; }

private:
	std::vector<double> history_;
};

class ShadowingEscape : public std::runtime_error {
public:
	ShadowingEscape(const std::string &what, int index) : std::runtime_error(what), index_(index) {}
	int index() const { return index_; }

private:
	int index_;
};

class ConstantsTooWeakError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

// Cyclic pseudo-orbit in chart coordinates: points[i] lives in box boxes[i], and
// maps[i] in shadow_periodic sends box i to box (i + 1) mod N.
struct DiscretePseudoOrbit {
	std::vector<Vec2> points;
	std::vector<int> boxes;

	int size() const { return static_cast<int>(points.size()); }
};

// e_i = |f_i(q_i) - q_{i+1}| in the adapted norm of the target box.
std::vector<double> step_errors(const DiscretePseudoOrbit &orbit, const std::vector<LocalHyperbolicMap> &maps);

struct ShadowingResult {
	std::vector<Vec2> orbit;
	std::vector<double> residuals;
	std::vector<double> history;
	double distance_sum = 0;
	double error_sum = 0;
	double k_gamma = 0;
	int iterations = 0;
	bool pass = false;

	double max_residual() const;
	// distance_sum / error_sum, or 0 on a true orbit.
	double ratio() const { return error_sum > 0 ? distance_sum / error_sum : 0.0; }
};

struct ChainStatistics {
	double sigma_u = std::numeric_limits<double>::infinity();
	double sigma_s = 0;
	double eta = 0;
};

// Weakest expansion, weakest contraction and strongest coupling over a chain of maps.
ChainStatistics chain_statistics(const std::vector<LocalHyperbolicMap> &maps, int lip_samples = 16);

// K = 2 / min(sigma_u - 1 - 3 eta, 1 - sigma_s - 3 eta), at least 1.
double estimate_k_gamma(const ChainStatistics &stats);

ShadowingResult shadow_periodic(const DiscretePseudoOrbit &orbit, const std::vector<LocalHyperbolicMap> &maps,
								double tol, double k_gamma = std::numeric_limits<double>::quiet_NaN(),
								int max_iters = 50);

struct ShadowingSuiteOptions {
	int n_orbits = 1000;
	int min_length = 2;
	int max_length = 50;
	double min_noise = 1e-6;
	double max_noise = 1e-2;
	// Box centers are offset from a true periodic orbit by up to this much in adapted coordinates.
	double center_jitter = 1e-3;
	double rho = 0.3;
	double eps = 0.2;
	double tol = 1e-12;
	unsigned long long seed = 1;
};

struct ShadowingSuiteCase {
	int length = 0;
	int base_period = 0;
	double noise = 0;
	double error_sum = 0;
	double distance_sum = 0;
	double k_gamma = 0;
	double max_residual = 0;
	double truth_error = 0;
	int iterations = 0;
	bool converged = false;
	bool pass = false;
	bool monotone = false;
	std::string failure;
};

struct ShadowingSuiteReport {
	std::vector<ShadowingSuiteCase> cases;
	int failures = 0;
	double max_ratio = 0;
	double max_residual = 0;
	double k_gamma = 0;
	bool pass = false;
};

// Chains of boxes around jittered periodic orbits of the base map at level 0 with tau = roof; each
// pseudo-orbit perturbs the chain's true periodic orbit by uniform noise drawn log-uniformly in scale.
ShadowingSuiteReport shadowing_suite(const SuspensionFlow &model, const ShadowingSuiteOptions &options = {});

} // namespace wkam
