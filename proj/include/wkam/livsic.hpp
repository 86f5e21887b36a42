#pragma once

#include "wkam/geometry_charts.hpp"

#include <random>
#include <string>
#include <vector>

namespace wkam {

class PathDomainError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

class UncoveredStartError : public std::runtime_error {
public:
	UncoveredStartError(const std::string &what, const Vec3 &witness) : std::runtime_error(what), witness_(witness) {}
	const Vec3 &witness() const { return witness_; }

private:
	Vec3 witness_;
};

// Piecewise-linear path through time-stamped nodes; each segment is the straight displacement in the
// local frame of its first node.
struct PathSample {
	std::vector<double> times;
	std::vector<Vec3> points;

	int nodes() const { return static_cast<int>(points.size()); }
	double duration() const { return times.empty() ? 0.0 : times.back() - times.front(); }
	double max_step() const;
	void validate(const SuspensionFlow &model) const;
	// Appends other, whose first node must coincide with the last node of this path.
	void append(const PathSample &other);
};

// Nodes of the true orbit of x at spacing close to step over [0, t].
PathSample orbit_path(const SuspensionFlow &model, const Vec3 &x, double t, double step);

// Integral of (phi - phi_bar) o z + C |V o z - z'| by the midpoint rule on each segment.
double weighted_action(const SuspensionFlow &model, const PathSample &path, const Observable &phi, double c,
					   double phi_bar);

struct ConstantInputs {
	double tau = 0;
	double eps = 0;
	double lip_phi = 0;
	double lip_gamma = 1;
	double diam_omega = 0;
	double n_gamma = 0;
	double k_tilde = 1;
};

struct LivsicConstants {
	double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
	double a_star = 0;
	double delta_lambda = 0;
	double c_lambda_distortion = 0;
	double k_gamma = 0;
	double n_gamma = 0;
	double lip_gamma = 0;
	double lip_phi = 0;
	double diam_omega = 0;
	double tau = 0;
	double eps = 0;
};

LivsicConstants compute_constants(const ConstantInputs &in);
// k_tilde serves both as the chain shadowing constant and as the shadowing constant inside C_3.
LivsicConstants compute_constants(const FlowBoxAtlas &atlas, const Observable &phi, double k_tilde);

enum class SegmentKind { pseudo, escaped, trapped };
std::string to_string(SegmentKind kind);

struct SegmentClassification {
	SegmentKind kind = SegmentKind::trapped;
	int box = -1;
	// Exit face: +1 forward boundary, -1 backward boundary, 0 none.
	int exit_face = 0;
	double exit_time = 0;
	PathSample segment;
	double action = 0;
	double lower_bound = 0;
	bool bound_holds = false;
	// Pseudo case.
	int target_box = -1;
	bool target_within_eps = false;
	bool target_admissible = false;
	ChartCoords start_coords, end_coords;
	double phi_xy = 0, psi_x = 0, psi_y = 0, shadow_term = 0;
};

// Classifies the path from its first node in the box whose U(eps) contains it, stopping at the first
// crossing of the trap-box boundary. Exits are located by linear interpolation in chart coordinates.
SegmentClassification classify_segment(const PathSample &path, const FlowBoxAtlas &atlas, const Observable &phi,
									   double phi_bar, double c, const LivsicConstants &constants,
									   int box = -1);

enum class BlockType { escaped = 1, pseudo_then_escaped = 2, terminal = 3 };

struct PathBlock {
	BlockType type = BlockType::terminal;
	int first_segment = 0;
	int last_segment = 0;
	double action = 0;
	double lower_bound = 0;
	bool bound_holds = false;
};

struct PathDecomposition {
	std::vector<SegmentClassification> segments;
	std::vector<PathBlock> blocks;
	std::vector<int> cutting_boxes;
	std::vector<double> cutting_times;
	bool all_bounds_hold = false;
};

PathDecomposition decompose_path(const PathSample &path, const FlowBoxAtlas &atlas, const Observable &phi,
								 double phi_bar, double c, const LivsicConstants &constants, int max_segments = 10000);

// Splitting 0 = i_0 < ... < i_r = N of a cutting-point sequence x_0..x_N.
struct Factorization {
	std::vector<int> indices;
	int r() const { return static_cast<int>(indices.size()) - 1; }
};

Factorization factor_pseudo_orbit(const std::vector<int> &cutting_points);

// Splitting conditions: distinct heads, the inner return condition, and the terminal condition.
// With relaxed_terminal the terminal item also accepts x_{i_r - 1} = x_{i_{r-1}}, which is what the
// maximal last-occurrence induction produces when the last occurrence sits at N - 1.
bool factorization_valid(const std::vector<int> &cutting_points, const Factorization &f, bool relaxed_terminal = true);
// Every valid splitting, by exhaustive search.
std::vector<Factorization> all_factorizations(const std::vector<int> &cutting_points, bool relaxed_terminal = true);

enum class PathFamily { flow, antiflow, biased_walk, boundary_hugging, pseudo_orbit };
std::string to_string(PathFamily family);

struct GeneratedPath {
	PathFamily family = PathFamily::flow;
	PathSample path;
	bool periodic_pseudo = false;
};

struct PathGeneratorOptions {
	double step = 0.02;
	double min_length = 0.2;
	double max_length = 4.0;
	int max_pseudo_steps = 6;
	double max_jump = 1e-3;
};

GeneratedPath generate_path(const FlowBoxAtlas &atlas, PathFamily family, std::mt19937_64 &rng,
							const PathGeneratorOptions &options = {});

struct ScanReport {
	int n_paths = 0;
	double c = 0;
	double min_action = 0;
	double bound = 0;
	double margin = 0;
	int violations = 0;
	int periodic_paths = 0;
	double periodic_min_action = 0;
	double periodic_bound = 0;
	int periodic_violations = 0;
	int certificate_failures = 0;
	int decomposition_errors = 0;
	// C below C_1: the lower bound is not guaranteed and violations are expected data, not failures.
	bool guaranteed = true;
	bool pass = false;
	std::vector<int> family_counts;
	std::vector<double> family_min;
};

ScanReport livsic_lower_bound_scan(const FlowBoxAtlas &atlas, const Observable &phi, double phi_bar,
								   const LivsicConstants &constants, double c, int n_paths,
								   unsigned long long seed = 3, const PathGeneratorOptions &options = {},
								   bool certify = true);

} // namespace wkam
