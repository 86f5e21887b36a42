#pragma once

#include "wkam/geometry_charts.hpp"
#include "wkam/lax_oleinik.hpp"

#include <limits>
#include <string>
#include <vector>

namespace wkam {

class PreconditionError : public std::runtime_error {
public:
	PreconditionError(const std::string &what, int node, double excess)
		: std::runtime_error(what), node_(node), excess_(excess) {}
	int node() const { return node_; }
	double excess() const { return excess_; }

private:
	int node_;
	double excess_;
};

class UncoveredRegionError : public std::runtime_error {
public:
	UncoveredRegionError(const std::string &what, int node, const Vec3 &witness)
		: std::runtime_error(what), node_(node), witness_(witness) {}
	int node() const { return node_; }
	const Vec3 &witness() const { return witness_; }

private:
	int node_;
	Vec3 witness_;
};

// Quintic smoothstep 6x^5 - 15x^4 + 10x^3 clamped to [0, 1], and its derivative.
double smoothstep5(double x);
double smoothstep5_prime(double x);

// alpha(q) = a(|q_1|) a(|q_2|), a = 1 on [0, eps] and 0 beyond (1 + w) eps.
// beta = 1 on [0, tau] and 0 outside (-w eps, tau + w eps). The default w = 3/4 keeps both supports strictly
// inside B(2 eps) and (-eps, tau + eps).
struct BumpPair {
	double eps = 0.1;
	double tau = 0.5;
	double width = 0.75;
	// Scales alpha; zero gives the degenerate bump.
	double alpha_scale = 1.0;

	double alpha(const Vec2 &q) const;
	double beta(double t) const;
	double beta_prime(double t) const;
	double alpha_support() const { return (1 + width) * eps; }
	double beta_support_lo() const { return -width * eps; }
	double beta_support_hi() const { return tau + width * eps; }
};

// Nested boxes D = (0, tau) x B(eps), D' = (-eps, tau + eps) x B(2 eps), D'' = (-2 eps, tau + 2 eps) x B(3 eps)
// in the chart of `box`.
struct RegularizerSpec {
	int index = 0;
	FlowBox box;
	BumpPair bumps;
	double fd_step = 0;
	// Allowed excess of u(next) - u(node) over the edge integral of phi - phi_bar.
	double subaction_slack = 0;

	double tau() const { return bumps.tau; }
	double eps() const { return bumps.eps; }
	bool in_d(const ChartCoords &c) const;
	bool in_d_prime(const ChartCoords &c) const;
	bool in_d_second(const ChartCoords &c) const;
};

struct CoverOptions {
	double eps = 0.1;
	// Section spacing; must divide the roof.
	double tau = 0.5;
	int max_net = 40;
	double subaction_slack = std::numeric_limits<double>::quiet_NaN();
};

// Boxes on the levels k tau with the coarsest m x m base net whose plateaus cover every grid column.
std::vector<RegularizerSpec> build_cover(const Grid &grid, const Observable &phi, const CoverOptions &options = {});

// Largest u(next) - u(node) - ds (phi - phi_bar)(midpoint) over all flow edges, with its node.
double subaction_excess(const GridFunction &u, const Observable &phi, double phi_bar, int *node = nullptr);

GridFunction regularize_once(const GridFunction &u, const RegularizerSpec &spec, const Observable &phi, double phi_bar,
							 int threads = 1);

struct SubactionCertificate {
	explicit SubactionCertificate(GridFunction v) : u(std::move(v)) {}

	GridFunction u;
	// Backward difference along the flow at each node; NaN where uncertified.
	Eigen::VectorXd lie;
	Eigen::VectorXd margin;
	double min_margin = std::numeric_limits<double>::infinity();
	Vec3 worst_node = Vec3::Zero();
	double slack = 0;
	double lip_u = 0;
	double lip_lie = 0;
	double lip_phi = 0;
	double ratio_u = 0;
	double ratio_lie = 0;
	int certified_nodes = 0;
	int changed_nodes = 0;
	// Nodes outside every D'' whose value changed; must be zero.
	int locality_violations = 0;
	int boxes = 0;
	// Minimum margin over the plateaus handled so far, after each step.
	std::vector<double> step_margins;
	double input_excess = 0;
	bool pass = false;
};

SubactionCertificate regularize_all(const GridFunction &u0, const std::vector<RegularizerSpec> &cover,
									const Observable &phi, double phi_bar, int threads = 1);

struct SubactionReport {
	int samples = 0;
	int excluded_seam = 0;
	int violations = 0;
	double worst_margin = std::numeric_limits<double>::infinity();
	double slack = 0;
	Vec3 witness = Vec3::Zero();
	int justification_paths = 0;
	int justification_violations = 0;
	double justification_worst = std::numeric_limits<double>::infinity();
	bool pass = false;
};

// Off-grid re-check by central differences of the interpolant over 2 delta, delta = 2 ds. Samples whose
// stencil meets the top cell layer (where interpolation switches to A x) are counted as seam and skipped.
SubactionReport verify_subaction(const SubactionCertificate &cert, const Observable &phi, double phi_bar,
								 int n_samples, unsigned long long seed = 5, int n_paths = 100);

} // namespace wkam
