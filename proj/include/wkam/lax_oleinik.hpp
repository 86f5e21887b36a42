#pragma once

#include "wkam/flow_models.hpp"

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace wkam {

class KernelConnectivityError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class UnreachableError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class DriftError : public std::runtime_error {
public:
	DriftError(const std::string &what, double drift) : std::runtime_error(what), drift_(drift) {}
	double drift() const { return drift_; }

private:
	double drift_;
};

class NonConvergenceError : public std::runtime_error {
public:
	NonConvergenceError(const std::string &what, std::vector<double> history)
		: std::runtime_error(what), history_(std::move(history)) {}
	const std::vector<double> &history() const { return history_; }

private:
	std::vector<double> history_;
};

class InconsistencyError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

// Periodic n x n x ns grid on the suspension: node (i, j, k) sits at (i/n, j/n, k roof/ns).
// The base matrix maps base nodes to base nodes, so crossing the roof stays on the grid.
class Grid {
public:
	Grid(SuspensionFlow model, int n, int ns);

	const SuspensionFlow &model() const { return model_; }
	int n() const { return n_; }
	int ns() const { return ns_; }
	int size() const { return n_ * n_ * ns_; }
	double dx() const { return 1.0 / n_; }
	double ds() const { return model_.roof() / ns_; }
	// Largest metric length of a cell diagonal.
	double diagonal() const { return std::max(std::sqrt(2.0) * dx(), ds()); }

	int index(int i, int j, int k) const { return (k * n_ + j) * n_ + i; }
	void coords(int idx, int &i, int &j, int &k) const;
	Vec3 point(int idx) const;
	int nearest(const Vec3 &p) const;

	// Node reached from idx by shifting the base by (di, dj) cells and then walking dk levels along the flow.
	int offset(int idx, int di, int dj, int dk) const;
	int next_level(int idx) const;
	int prev_level(int idx) const;

private:
	int wrap(long long i) const;
	SuspensionFlow model_;
	int n_, ns_;
	Mat2l a_, a_inv_;
};

// Scalar field on a Grid with trilinear interpolation; the top layer interpolates against level 0 at A x.
struct GridFunction {
	Grid grid;
	Eigen::VectorXd values;

	GridFunction(Grid g, double fill = 0.0) : grid(std::move(g)), values(Eigen::VectorXd::Constant(grid.size(), fill)) {}
	GridFunction(Grid g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {}

	double interpolate(const Vec3 &p) const;
	double operator()(const Vec3 &p) const { return interpolate(p); }
	// Max over the three forward edges of |du| / edge length.
	double discrete_lipschitz() const;
};

GridFunction sample(const Grid &grid, const std::function<double(const Vec3 &)> &f);
Observable table_observable(const GridFunction &table, const std::string &name = "table");

// Comma-separated node table with header i,j,k,x1,x2,s,value; reading needs only i, j, k and value.
void write_grid_function(std::ostream &out, const GridFunction &f);
GridFunction read_grid_function(const Grid &grid, std::istream &in);

// One-step min-plus cost matrix, stored by target in CSR form with sources ascending.
struct ActionKernel {
	explicit ActionKernel(Grid g) : grid(std::move(g)) {}

	Grid grid;
	double h = 0;
	double c = 0;
	double phi_bar = 0;
	double reach_multiplier = 0;
	int reach_base = 0;
	int reach_levels = 0;
	int center_levels = 0;
	// Lower bound on the deviation cost of any omitted transition.
	double truncation_cost = 0;
	std::vector<long long> row_start;
	std::vector<int> sources;
	std::vector<double> costs;

	long long entries() const { return static_cast<long long>(sources.size()); }
	double cost(int source, int target) const;
};

// A_h(p, q) = h (phi(m) - phi_bar) + C |h V - (q - p)|, m the midpoint of the straight segment. When the
// segment crosses the roof the base part of q - p is measured in whichever frame along it is shortest.
// Candidates are within reach_multiplier cells in the base and reach_multiplier (h + ds) along the flow.
ActionKernel build_kernel(const Grid &grid, const Observable &phi, double c, double phi_bar, double h,
						  double reach_multiplier = 2.0, int threads = 1);
// Shift every cost by -h delta, so that the kernel refers to phi_bar + delta.
ActionKernel rebase(ActionKernel kernel, double delta);
// Round costs to multiples of 2^-bits; sums of such costs and dyadic inputs are exact in double precision.
ActionKernel quantize(ActionKernel kernel, int bits = 32);

// (T_h u)(q) = min over entries into q of u(p) + A_h(p, q), ties to the lowest source index.
Eigen::VectorXd apply_operator(const ActionKernel &kernel, const Eigen::VectorXd &u, int threads = 1,
							   std::vector<int> *argmin = nullptr);
GridFunction apply_operator(const ActionKernel &kernel, const GridFunction &u, int threads = 1);
Eigen::VectorXd apply_power(const ActionKernel &kernel, Eigen::VectorXd u, int n, int threads = 1);

struct MinPlusLawReport {
	int trials = 0;
	int monotonicity_violations = 0;
	int equivariance_violations = 0;
	int inf_violations = 0;
	// Largest |T(u + a) - T(u) - a| on the unquantized kernel, for reference.
	double float_equivariance_deviation = 0;
	bool pass = false;
};

// Monotonicity and inf-commutation on the kernel as built; additive-constant equivariance on its 2^-32
// quantization with dyadic inputs, where every sum is exact. All comparisons are bitwise.
MinPlusLawReport check_minplus_laws(const ActionKernel &kernel, int trials, unsigned long long seed = 1,
									int threads = 1);

struct SemigroupReport {
	double horizon = 0;
	std::vector<double> h;
	// |T_h^{2n} u - T_{2h}^n u|_inf with 2 n h = horizon.
	std::vector<double> defects;
	std::vector<double> ratios;
	double ratio_lo = 3;
	double ratio_hi = 5;
	bool pass = false;
};

SemigroupReport semigroup_consistency(const Grid &grid, const Observable &phi, const Eigen::VectorXd &u, double c,
									  double horizon, const std::vector<double> &hs, double reach_multiplier = 2.0,
									  int threads = 1);

struct CycleMean {
	// Minimum cycle mean per step.
	double eta = 0;
	int iterations = 0;
	std::vector<int> cycle;
};

// Policy iteration for the minimum cycle mean of the kernel graph.
CycleMean howard_min_cycle_mean(const ActionKernel &kernel, int max_iters = 1000);

// Shortest path over the undirected 26-neighbour graph with metric edge lengths.
Eigen::VectorXd distances_from(const Grid &grid, int source);
double path_distance(const Grid &grid, int p, int q);
double path_distance(const Grid &grid, const Vec3 &p, const Vec3 &q);

enum class ErgodicMethod { periodic_orbits, minplus_drift, howard };

struct ErgodicParams {
	int max_period = 6;
	double quadrature_step = 1e-3;
	// Horizon n h of the drift estimate; the estimate compares 2n and n steps.
	double drift_horizon = 10.0;
	double tolerance = 1e-2;
	int threads = 1;
};

double ergodic_value_periodic(const SuspensionFlow &model, const Observable &phi, int max_period, double step);
// (min T^{2n}[0] - min T^n[0]) / (n h) + phi_bar of the kernel.
double ergodic_value_drift(const ActionKernel &kernel, int n, int threads = 1);
double ergodic_value_howard(const ActionKernel &kernel);
double ergodic_value(const SuspensionFlow &model, const Observable &phi, const ActionKernel &kernel,
					 ErgodicMethod method, const ErgodicParams &params = {});

struct ErgodicEstimate {
	double periodic = 0;
	double drift = 0;
	double howard = 0;
	double tolerance = 0;
	double disagreement = 0;
	bool consistent = false;
};

// All three estimators; throws InconsistencyError when periodic and drift differ by more than 5 tolerance.
ErgodicEstimate cross_validate(const SuspensionFlow &model, const Observable &phi, const ActionKernel &kernel,
							   const ErgodicParams &params = {});

struct WeakKamSolution {
	explicit WeakKamSolution(GridFunction v) : u(std::move(v)) {}

	GridFunction u;
	double c = 0;
	double phi_bar = 0;
	double residual = 0;
	double lipschitz = 0;
	int stage_a_steps = 0;
	int iterations = 0;
	std::vector<double> residual_history;
	// Smallest pointwise increment of each Stage-B step.
	std::vector<double> increment_history;
};

struct WeakKamOptions {
	double tol = 1e-7;
	double monotone_tol = 1e-9;
	int max_iters = 20000;
	int threads = 1;
};

// Stage A: v = min over n of T^n[0]; Stage B: u_{k+1} = T[u_k] from u_0 = v until the sup-change is below tol.
WeakKamSolution weak_kam_solve(const ActionKernel &kernel, const WeakKamOptions &options = {});

struct AprioriReport {
	int n_triples = 0;
	int violations[3] = {0, 0, 0};
	// Largest value of (lhs - rhs) over the samples, per item; a sample violates its item when this exceeds slack.
	double worst_excess[3] = {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
							  -std::numeric_limits<double>::infinity()};
	double slack = 0;
	double t = 0;
	int unreachable = 0;
	bool pass = false;
};

struct AprioriOptions {
	int n = 16;
	int ns = 10;
	double reach_multiplier = 4.0;
	int n_sources = 50;
	int pairs_per_source = 10;
	unsigned long long seed = 7;
	int threads = 1;
};

// Pairwise actions A^t(p, q) are min-plus powers of the kernel on indicators; endpoint perturbations
// are drawn within one step of reach so that a single transition can absorb them.
AprioriReport verify_apriori(const SuspensionFlow &model, const Observable &phi, double c, double t,
							 const AprioriOptions &options = {});

struct SubactionCheck {
	int checks = 0;
	int violations = 0;
	double worst_excess = -std::numeric_limits<double>::infinity();
	double slack = 0;
	Vec3 witness = Vec3::Zero();
	double witness_time = 0;
	bool pass = false;
};

// u(f^t x) - u(x) <= int_0^t (phi - phi_bar) along random orbits for t = horizon / 2^k.
SubactionCheck verify_integrated_subaction(const GridFunction &u, const Observable &phi, double phi_bar,
										   int n_orbits, double horizon, unsigned long long seed = 11,
										   int levels = 6);

} // namespace wkam
