#pragma once

#include "wkam/flow_models.hpp"

#include <limits>
#include <string>
#include <vector>

namespace wkam {

class ConstantConsistencyError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

class UncoveredPointError : public std::runtime_error {
public:
	UncoveredPointError(const std::string &what, const Vec3 &witness) : std::runtime_error(what), witness_(witness) {}
	const Vec3 &witness() const { return witness_; }

private:
	Vec3 witness_;
};

class NoIntersectionError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class AdmissibilityError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

struct HyperbolicConstants {
	double sigma_u = 0;
	double sigma_s = 0;
	double eta = 0;
	double rho = 0;
	double eps_rho = 0;
};

struct ChartCoords {
	double s = 0;
	Vec2 u = Vec2::Zero();
};

// Adapted norm on chart coordinates: max over the (unstable, stable) components.
template <typename Derived>
typename Derived::Scalar adapted_norm(const Eigen::MatrixBase<Derived> &u)
{
	return u.cwiseAbs().maxCoeff();
}

// Chart gamma_x(s, u) = f^s(x + iota_x(u)), iota_x embedding u along the eigen-splitting of the fiber
// through x, with the unstable and stable components rescaled by |mu|^(-level/roof) and |mu|^(level/roof).
struct FlowBox {
	Vec3 center = Vec3::Zero();
	Mat2 to_adapted = Mat2::Identity();
	Mat2 from_adapted = Mat2::Identity();
	// Section Sigma_x = { gamma_x(tilt . u, u) }.
	Vec2 tilt = Vec2::Zero();
};

struct FlowBoxAtlas {
	SuspensionFlow model;
	std::vector<FlowBox> boxes;
	double tau = 0;
	double rho = 0;
	double eps = 0;
	double eps_as = 0;
	double lip_gamma = 1;
	int n_gamma = 0;
	double diam_omega = 0;
	HyperbolicConstants hyper;
	// Largest sampled box radius needed to cover the manifold; covering holds when it is < eps.
	double covering_radius = 0;
	int covering_samples = 0;
};

struct AtlasOptions {
	double sigma_u = std::numeric_limits<double>::quiet_NaN();
	double sigma_s = std::numeric_limits<double>::quiet_NaN();
	double eta = std::numeric_limits<double>::quiet_NaN();
	int n_levels = 0;
	int covering_samples = 12;
	bool check_covering = true;
};

FlowBox make_box(const SuspensionFlow &model, const Vec3 &center, const Vec2 &tilt = Vec2::Zero());
Vec3 chart(const SuspensionFlow &model, const FlowBox &box, double s, const Vec2 &u);
// Inverse chart; among the lifts of p the one with flow coordinate closest to s_hint.
ChartCoords chart_inverse(const SuspensionFlow &model, const FlowBox &box, const Vec3 &p, double s_hint = 0);

// Default hyperbolicity constants for a section spacing tau, strictly inside the admissible ranges.
HyperbolicConstants default_constants(const SuspensionFlow &model, double tau, double rho);
// Throws ConstantConsistencyError naming the first violated inequality.
void check_constants(const SuspensionFlow &model, double tau, double eps, const HyperbolicConstants &c);
double eps_of_rho(const HyperbolicConstants &c);

FlowBoxAtlas atlas_from_centers(const SuspensionFlow &model, const std::vector<Vec3> &centers, double tau,
								double rho, double eps, const AtlasOptions &options = {});
// Uniform net: n_points x n_points base centers on each of the section levels.
FlowBoxAtlas build_atlas(const SuspensionFlow &model, double tau, double rho, double eps, int n_points,
						 const AtlasOptions &options = {});

// Lowest-radius box containing p, or -1. radius = max(|s|, |u|) in that box's chart.
int locate_box(const FlowBoxAtlas &atlas, const Vec3 &p, double *radius = nullptr, ChartCoords *coords = nullptr);

double return_time(const FlowBoxAtlas &atlas, int x, int y, const Vec2 &q);
Vec2 poincare_map_unchecked(const FlowBoxAtlas &atlas, int x, int y, const Vec2 &q);
Vec2 poincare_map(const FlowBoxAtlas &atlas, int x, int y, const Vec2 &q);

struct Admissibility {
	bool admissible = false;
	std::string failed;
	ChartCoords target;
	Vec2 image_of_origin = Vec2::Zero();
};
Admissibility forward_admissible(const FlowBoxAtlas &atlas, int x, int y,
								 double rho = std::numeric_limits<double>::quiet_NaN());

// Largest sampled dual-norm of the gradient of the return time over B_x(rho).
double return_time_gradient_bound(const FlowBoxAtlas &atlas, int x, int y, int n_samples, unsigned long long seed = 1);

// Blocks of `linear` in adapted coordinates: (0,0) = A^u, (1,1) = A^s, (0,1) = D^u, (1,0) = D^s.
struct LocalHyperbolicMap {
	std::function<Vec2(const Vec2 &)> f;
	std::function<Mat2(const Vec2 &)> jacobian;
	Mat2 linear = Mat2::Identity();
	HyperbolicConstants required;
};

LocalHyperbolicMap affine_map(const Mat2 &linear, const Vec2 &offset, const HyperbolicConstants &required);
LocalHyperbolicMap local_map(const FlowBoxAtlas &atlas, int x, int y);

struct CertificateItem {
	std::string name;
	double measured = 0;
	double bound = 0;
	bool pass = false;
};

struct HyperbolicCertificate {
	std::vector<CertificateItem> items;
	bool pass = false;
	const CertificateItem &item(const std::string &name) const;
};

HyperbolicCertificate certify_hyperbolic(const LocalHyperbolicMap &map, int n_samples, unsigned long long seed = 1);

} // namespace wkam
