#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace wkam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat2l = Eigen::Matrix<long long, 2, 2>;
using Vec2l = Eigen::Matrix<long long, 2, 1>;

class DomainEscape : public std::runtime_error {
public:
	DomainEscape(const std::string &what, double exit_time)
		: std::runtime_error(what), exit_time_(exit_time) {}
	double exit_time() const { return exit_time_; }

private:
	double exit_time_;
};

// Max-combination of the Euclidean base part and the flow coordinate.
template <typename Derived>
typename Derived::Scalar metric_norm(const Eigen::MatrixBase<Derived> &d)
{
	using std::abs;
	using std::max;
	return max(d.template head<2>().norm(), abs(d(2)));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 2, 1> wrap_unit(const Eigen::MatrixBase<Derived> &x)
{
	using std::floor;
	Eigen::Matrix<typename Derived::Scalar, 2, 1> r = x - x.array().floor().matrix();
	for (int i = 0; i < 2; ++i)
		if (r(i) >= 1) r(i) -= 1;
	return r;
}

// Representative of x mod Z^2 in [-1/2, 1/2)^2.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 2, 1> min_image(const Eigen::MatrixBase<Derived> &x)
{
	using std::floor;
	Eigen::Matrix<typename Derived::Scalar, 2, 1> r;
	for (int i = 0; i < 2; ++i) r(i) = x(i) - floor(x(i) + 0.5);
	return r;
}

struct HyperbolicityData {
	double lambda_s;
	double lambda_u;
	double c_hyp;
	int du;
	int ds;
};

// Constant-roof suspension of a hyperbolic toral automorphism.
// Points are (x1, x2, s) with x in [0,1)^2, s in [0, roof), and (x, roof) ~ (A x, 0).
class SuspensionFlow {
public:
	explicit SuspensionFlow(const Mat2l &base = cat_matrix(), double roof = 1.0);

	static Mat2l cat_matrix();

	const Mat2l &base_matrix_int() const { return a_int_; }
	const Mat2 &base_matrix() const { return a_; }
	const Mat2 &base_inverse() const { return a_inv_; }
	double roof() const { return roof_; }

	double unstable_eigenvalue() const { return mu_u_; }
	double stable_eigenvalue() const { return mu_s_; }
	const Vec2 &unstable_direction() const { return e_u_; }
	const Vec2 &stable_direction() const { return e_s_; }
	// Columns are the unstable and stable directions.
	const Mat2 &eigen_basis() const { return e_; }
	const Mat2 &eigen_basis_inverse() const { return e_inv_; }

	// Growth rate per unit time of the unstable direction, log|mu_u| / roof.
	double lyapunov_rate() const { return std::log(std::abs(mu_u_)) / roof_; }
	HyperbolicityData hyperbolicity() const;

	double sup_norm_bound() const { return 1.0; }
	double lipschitz_bound() const { return 0.0; }
	Vec3 velocity(const Vec3 &) const { return Vec3(0, 0, 1); }

	Vec2 apply_base(const Vec2 &x, long k) const;
	Vec3 normalize(const Vec3 &p) const;
	Vec3 flow(const Vec3 &p, double t) const;

	// q - p expressed in the local frame at p, using the lift with the smallest norm.
	Vec3 difference(const Vec3 &p, const Vec3 &q) const;
	Vec3 displace(const Vec3 &p, const Vec3 &d) const { return normalize(p + d); }
	double distance(const Vec3 &p, const Vec3 &q) const;
	double diameter() const;

private:
	Mat2l a_int_;
	Mat2 a_, a_inv_;
	double roof_;
	double mu_u_, mu_s_;
	Vec2 e_u_, e_s_;
	Mat2 e_, e_inv_;
};

// Generic flow of a vector field on a box with per-axis periodicity.
struct VectorFieldSpec {
	int dimension = 0;
	std::function<Eigen::VectorXd(const Eigen::VectorXd &)> evaluate;
	Eigen::VectorXd lower, upper;
	std::vector<bool> periodic;
	double sup_norm_bound = 0;
	double lipschitz_bound = 0;
};

class VectorFieldFlow {
public:
	explicit VectorFieldFlow(VectorFieldSpec spec, double step = 1e-3);

	const VectorFieldSpec &spec() const { return spec_; }
	double step() const { return step_; }
	Eigen::VectorXd velocity(const Eigen::VectorXd &x) const { return spec_.evaluate(x); }
	Eigen::VectorXd normalize(const Eigen::VectorXd &x) const;
	// Fixed-step RK4; throws DomainEscape when a non-periodic axis leaves the box.
	Eigen::VectorXd flow(const Eigen::VectorXd &x, double t) const;

private:
	bool inside(const Eigen::VectorXd &x) const;
	VectorFieldSpec spec_;
	double step_;
};

struct Observable {
	std::string name;
	std::function<double(const Vec3 &)> evaluate;
	double lipschitz_constant = 0;
	double sup_bound = 0;

	double operator()(const Vec3 &p) const { return evaluate(p); }
};

template <typename Model, typename Point>
auto flow_map(const Model &model, const Point &x, double t)
{
	return model.flow(x, t);
}

// Central difference of u along the flow.
template <typename Model, typename Point, typename Fn>
double lie_derivative(const Model &model, const Fn &u, const Point &x, double delta)
{
	if (!(delta > 0)) throw std::invalid_argument("lie_derivative: delta must be positive");
	const auto fwd = model.flow(x, delta);
	const auto bwd = model.flow(x, -delta);
	return (u(fwd) - u(bwd)) / (2 * delta);
}

// Composite midpoint rule for the integral of phi along the orbit of x over [0, t].
// Negative t integrates backwards and returns the signed value.
template <typename Model, typename Point, typename Fn>
double birkhoff_integral(const Model &model, const Fn &phi, const Point &x, double t, double step)
{
	if (!(step > 0)) throw std::invalid_argument("birkhoff_integral: step must be positive");
	if (t == 0) return 0.0;
	const double len = std::abs(t);
	const long n = std::max<long>(1, static_cast<long>(std::ceil(len / step - 1e-9)));
	const double h = len / static_cast<double>(n);
	const double sign = t > 0 ? 1.0 : -1.0;
	const auto start = t > 0 ? model.flow(x, 0.0) : model.flow(x, t);
	double sum = 0;
	for (long i = 0; i < n; ++i) sum += phi(model.flow(start, (static_cast<double>(i) + 0.5) * h));
	return sign * sum * h;
}

struct PeriodicOrbit {
	Vec2 base;
	int period;
	std::vector<Vec2> points;
};

// All points of Fix(A^n) on the torus, computed exactly over the rationals.
std::vector<Vec2> fixed_points(const SuspensionFlow &model, int n);
// One entry per orbit of minimal period n <= max_period.
std::vector<PeriodicOrbit> periodic_orbits(const SuspensionFlow &model, int max_period);

// Integer matrix power and |det(A^n - I)|, used by enumeration and tests.
Mat2l int_power(const Mat2l &a, int n);
long long fixed_point_count(const Mat2l &a, int n);

} // namespace wkam
