#include "generators.hpp"
#include "wkam/observables.hpp"

#include <doctest.h>

using namespace wkam;
using wkam::test::Gen;

namespace {

double base_gap(const Vec3 &a, const Vec3 &b)
{
	return std::max(min_image(Vec2(a.head<2>() - b.head<2>())).norm(), std::abs(a(2) - b(2)));
}

// |det(A^n - I)| by integer arithmetic, independent of the library's enumeration.
long long det_oracle(const Mat2l &a, int n)
{
	long long p = 1, q = 0, r = 0, s = 1;
	for (int i = 0; i < n; ++i) {
		const long long np = p * a(0, 0) + q * a(1, 0), nq = p * a(0, 1) + q * a(1, 1);
		const long long nr = r * a(0, 0) + s * a(1, 0), ns = r * a(0, 1) + s * a(1, 1);
		p = np, q = nq, r = nr, s = ns;
	}
	return std::llabs((p - 1) * (s - 1) - q * r);
}

} // namespace

TEST_SUITE("flow_models")
{
	TEST_CASE("roof crossings apply the base matrix")
	{
		const SuspensionFlow m;
		CHECK(base_gap(m.flow(Vec3(0, 0, 0), m.roof()), Vec3(0, 0, 0)) < 1e-15);
		const Vec3 p = m.flow(Vec3(0.3, 0.7, 0.25), 0.5);
		CHECK(base_gap(p, Vec3(0.3, 0.7, 0.75)) < 1e-15);
		// [[2,1],[1,1]] (0.2, 0.4) = (0.8, 0.6).
		CHECK(base_gap(m.flow(Vec3(0.2, 0.4, 0), 1.0), Vec3(0.8, 0.6, 0)) < 1e-14);
	}

	TEST_CASE("group law on random points")
	{
		const SuspensionFlow m;
		Gen g(11);
		for (int i = 0; i < 100; ++i) {
			const Vec3 x = g.point(m);
			const double s = g.uniform(-3, 3), t = g.uniform(-3, 3);
			CHECK(base_gap(m.flow(m.flow(x, t), s), m.flow(x, s + t)) < 1e-9);
		}
	}

	TEST_CASE("eigen-splitting is equivariant")
	{
		const SuspensionFlow m;
		const double lam = (3 + std::sqrt(5.0)) / 2;
		CHECK(m.unstable_eigenvalue() == doctest::Approx(lam).epsilon(1e-14));
		CHECK(std::abs(m.unstable_eigenvalue() * m.stable_eigenvalue()) == doctest::Approx(1).epsilon(1e-12));
		const Vec2 eu = m.unstable_direction();
		CHECK((m.base_matrix() * eu - m.unstable_eigenvalue() * eu).norm() < 1e-12);
		const Vec2 es = m.stable_direction();
		CHECK((m.base_matrix() * es - m.stable_eigenvalue() * es).norm() < 1e-12);
		const HyperbolicityData h = m.hyperbolicity();
		CHECK(h.lambda_s < 0);
		CHECK(h.lambda_u > 0);
		CHECK(h.c_hyp >= 1);
		CHECK(h.du >= 1);
	}

	TEST_CASE("non-hyperbolic or non-unimodular matrices are rejected")
	{
		Mat2l id = Mat2l::Identity();
		CHECK_THROWS(SuspensionFlow(id, 1.0));
		Mat2l two;
		two << 2, 0, 0, 1;
		CHECK_THROWS(SuspensionFlow(two, 1.0));
		CHECK_THROWS(SuspensionFlow(SuspensionFlow::cat_matrix(), -1.0));
	}

	TEST_CASE("lie derivative")
	{
		const SuspensionFlow m;
		const auto constant = [](const Vec3 &) { return 4.2; };
		CHECK(lie_derivative(m, constant, Vec3(0.1, 0.2, 0.3), 1e-3) == 0.0);
		const auto height = [](const Vec3 &p) { return p(2); };
		CHECK(lie_derivative(m, height, Vec3(0.1, 0.2, 0.5), 1e-3) == doctest::Approx(1).epsilon(1e-12));
		const TrigPotential u0(m);
		Gen g(3);
		double worst = 0;
		for (int i = 0; i < 20; ++i) {
			const Vec3 x = g.point(m);
			worst = std::max(worst, std::abs(lie_derivative(m, u0, x, 1e-4) - u0.lie(x)));
		}
		CHECK(worst <= 1e-6);
		CHECK_THROWS_AS(lie_derivative(m, u0, Vec3(0, 0, 0), 0.0), std::invalid_argument);
	}

	TEST_CASE("trigonometric potential is continuous across the roof")
	{
		const SuspensionFlow m;
		const TrigPotential u0(m);
		Gen g(5);
		for (int i = 0; i < 50; ++i) {
			const Vec2 x = g.vec2(0, 1);
			const Vec3 below(x(0), x(1), m.roof() - 1e-9);
			CHECK(std::abs(u0(below) - u0(m.normalize(Vec3(x(0), x(1), m.roof())))) < 1e-7);
		}
	}

	TEST_CASE("periodic points match determinant counts")
	{
		const SuspensionFlow m;
		CHECK(fixed_points(m, 1).size() == 1);
		CHECK(fixed_points(m, 1)[0].norm() < 1e-15);
		CHECK(fixed_points(m, 2).size() == 5);
		CHECK(fixed_points(m, 3).size() == 16);
		for (int n = 1; n <= 6; ++n) {
			CHECK(static_cast<long long>(fixed_points(m, n).size()) == det_oracle(m.base_matrix_int(), n));
			CHECK(fixed_point_count(m.base_matrix_int(), n) == det_oracle(m.base_matrix_int(), n));
		}
		// Orbits of minimal period dividing n partition Fix(A^n).
		const auto orbits = periodic_orbits(m, 6);
		for (int n = 1; n <= 6; ++n) {
			long long covered = 0;
			for (const auto &o : orbits)
				if (n % o.period == 0) covered += o.period;
			CHECK(covered == det_oracle(m.base_matrix_int(), n));
		}
		for (const auto &o : orbits) {
			const Vec2 back = m.apply_base(o.base, o.period);
			CHECK(min_image(Vec2(back - o.base)).norm() < 1e-9);
		}
		CHECK_THROWS(periodic_orbits(m, 13));
	}

	TEST_CASE("birkhoff integrals")
	{
		const SuspensionFlow m;
		const auto c = [](const Vec3 &) { return 0.75; };
		CHECK(birkhoff_integral(m, c, Vec3(0.3, 0.1, 0.2), 2.5, 1e-2) == doctest::Approx(0.75 * 2.5).epsilon(1e-14));
		const Observable d = distance_squared_observable(m);
		CHECK(birkhoff_integral(m, d, Vec3(0, 0, 0.1), 3.0, 1e-2) == 0.0);
		const TrigPotential u0(m);
		const Observable phi = coboundary_observable(u0);
		Gen g(7);
		for (int i = 0; i < 10; ++i) {
			const Vec3 x = g.point(m);
			const double t = g.uniform(0.5, 4);
			CHECK(std::abs(birkhoff_integral(m, phi, x, t, 1e-4) - (u0(m.flow(x, t)) - u0(x))) < 1e-8);
		}
	}

	TEST_CASE("birkhoff integrals are additive in time")
	{
		const SuspensionFlow m;
		const Observable phi = distance_squared_observable(m);
		Gen g(9);
		for (int i = 0; i < 30; ++i) {
			const Vec3 x = g.point(m);
			const double s = g.uniform(0.1, 2), t = g.uniform(0.1, 2);
			const double whole = birkhoff_integral(m, phi, x, s + t, 1e-3);
			const double parts = birkhoff_integral(m, phi, x, s, 1e-3) + birkhoff_integral(m, phi, m.flow(x, s), t, 1e-3);
			CHECK(std::abs(whole - parts) < 1e-5);
		}
	}

	TEST_CASE("observable Lipschitz constants dominate sampled quotients")
	{
		const SuspensionFlow m;
		const TrigPotential u0(m);
		for (const Observable &phi : {distance_squared_observable(m), coboundary_observable(u0)}) {
			const double sampled = sampled_lipschitz(m, phi.evaluate, 4000, 13, 1e-3);
			CHECK(sampled <= phi.lipschitz_constant * (1 + 1e-6));
		}
		CHECK(sampled_lipschitz(m, u0, 4000, 13, 1e-3) <= u0.lipschitz() * (1 + 1e-6));
	}

	TEST_CASE("vector-field flow")
	{
		VectorFieldSpec spec;
		spec.dimension = 2;
		spec.evaluate = [](const Eigen::VectorXd &x) {
			Eigen::VectorXd v(2);
			v << 1.0 + 0.3 * std::sin(2 * std::numbers::pi * x(1)), 0.5;
			return v;
		};
		spec.lower = Eigen::VectorXd::Zero(2);
		spec.upper = Eigen::VectorXd::Ones(2);
		spec.periodic = {true, true};
		spec.sup_norm_bound = 1.5;
		spec.lipschitz_bound = 2;
		const VectorFieldFlow f(spec);
		Gen g(2);
		for (int i = 0; i < 100; ++i) {
			Eigen::VectorXd x(2);
			x << g.uniform(), g.uniform();
			const double s = g.uniform(0, 1), t = g.uniform(0, 1);
			const Eigen::VectorXd a = f.flow(f.flow(x, t), s), b = f.flow(x, s + t);
			Eigen::VectorXd d = a - b;
			for (int k = 0; k < 2; ++k) d(k) -= std::round(d(k));
			CHECK(d.norm() < 1e-9);
			CHECK(f.velocity(x).norm() <= spec.sup_norm_bound);
		}

		spec.periodic = {true, false};
		const VectorFieldFlow bounded(spec);
		Eigen::VectorXd x(2);
		x << 0.5, 0.5;
		try {
			bounded.flow(x, 5.0);
			FAIL("expected a domain escape");
		} catch (const DomainEscape &e) {
			CHECK(e.exit_time() == doctest::Approx(1.0).epsilon(1e-2));
		}
	}
}
