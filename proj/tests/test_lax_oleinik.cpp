#include "generators.hpp"
#include "wkam/lax_oleinik.hpp"
#include "wkam/observables.hpp"

#include <doctest.h>

#include <sstream>

using namespace wkam;
using wkam::test::Gen;

namespace {

// Flat distance on the base torus times the section interval, ignoring the roof identification.
double flat_distance(const Vec3 &p, const Vec3 &q)
{
	return std::max(min_image(Vec2(p.head<2>() - q.head<2>())).norm(), std::abs(p(2) - q(2)));
}

Eigen::VectorXd random_vector(Gen &g, int n, double lo, double hi)
{
	Eigen::VectorXd v(n);
	for (int i = 0; i < n; ++i) v(i) = g.uniform(lo, hi);
	return v;
}

struct SmallProblem {
	SuspensionFlow model;
	Grid grid{model, 16, 10};
	TrigPotential u0{model};
	Observable phi = coboundary_observable(u0);
	double c = 2.0;
	ActionKernel kernel = build_kernel(grid, phi, c, 0.0, grid.ds());
};

const SmallProblem &small()
{
	static const SmallProblem p;
	return p;
}

} // namespace

TEST_SUITE("lax_oleinik")
{
	TEST_CASE("grid indexing and interpolation")
	{
		const Grid g(SuspensionFlow(), 8, 6);
		CHECK(g.size() == 8 * 8 * 6);
		for (int idx = 0; idx < g.size(); idx += 7) {
			CHECK(g.nearest(g.point(idx)) == idx);
			CHECK(g.prev_level(g.next_level(idx)) == idx);
			CHECK(g.offset(idx, 0, 0, 1) == g.next_level(idx));
		}
		// Walking ns levels crosses the roof, which applies the base matrix to the node.
		int i, j, k;
		int top = g.index(1, 2, 0);
		for (int s = 0; s < g.ns(); ++s) top = g.next_level(top);
		g.coords(top, i, j, k);
		CHECK(k == 0);
		CHECK(i == (2 * 1 + 1 * 2) % 8);
		CHECK(j == (1 * 1 + 1 * 2) % 8);

		Gen gen(41);
		const GridFunction f(g, random_vector(gen, g.size(), -1, 1));
		for (int idx = 0; idx < g.size(); ++idx) CHECK(f(g.point(idx)) == doctest::Approx(f.values(idx)).epsilon(1e-12));
		const GridFunction lin = sample(g, [](const Vec3 &p) { return p(2); });
		CHECK(lin(Vec3(0.3, 0.4, 0.37)) == doctest::Approx(0.37).epsilon(1e-12));
	}

	TEST_CASE("grid tables round trip")
	{
		const Grid g(SuspensionFlow(), 6, 4);
		Gen gen(43);
		const GridFunction f(g, random_vector(gen, g.size(), -1e3, 1e3));
		std::stringstream ss;
		write_grid_function(ss, f);
		const GridFunction back = read_grid_function(g, ss);
		CHECK((back.values.array() == f.values.array()).all());

		std::stringstream missing("i,j,k,value\n0,0,0,1.0\n");
		CHECK_THROWS_WITH(read_grid_function(g, missing), doctest::Contains("missing node"));
		std::stringstream no_column("i,j,value\n");
		CHECK_THROWS_WITH(read_grid_function(g, no_column), doctest::Contains("missing column k"));
		std::stringstream range("i,j,k,value\n9,0,0,1.0\n");
		CHECK_THROWS_WITH(read_grid_function(g, range), doctest::Contains("out of range"));
	}

	TEST_CASE("path distance")
	{
		const Grid g(SuspensionFlow(), 12, 8);
		Gen gen(45);
		const double diag = g.diagonal();
		for (int t = 0; t < 100; ++t) {
			const int p = gen.integer(0, g.size() - 1), q = gen.integer(0, g.size() - 1);
			CHECK(path_distance(g, p, p) == 0.0);
			CHECK(path_distance(g, p, q) == doctest::Approx(path_distance(g, q, p)).epsilon(1e-12));
			// The 8-neighbour base stencil overestimates Euclidean length by at most 1/cos(pi/8).
			const double flat = flat_distance(g.point(p), g.point(q));
			CHECK(path_distance(g, p, q) <= flat / std::cos(std::numbers::pi / 8) + diag);
		}
		for (int t = 0; t < 100; ++t) {
			// Within one flow-box level range the roof is never crossed, so the flat distance is a lower bound.
			const Vec3 a(gen.uniform(), gen.uniform(), gen.uniform(0.3, 0.45));
			const Vec3 b = a + Vec3(gen.uniform(-0.1, 0.1), gen.uniform(-0.1, 0.1), gen.uniform(0, 0.2));
			const int p = g.nearest(a), q = g.nearest(g.model().normalize(b));
			CHECK(path_distance(g, p, q) >= flat_distance(g.point(p), g.point(q)) - diag);
		}
	}

	TEST_CASE("kernel examples")
	{
		const SuspensionFlow m;
		const Grid g(m, 8, 10);
		const double h = g.ds(), c = 3.0;
		const ActionKernel k = build_kernel(g, constant_observable(0.5), c, 0.5, h);
		for (int p = 0; p < g.size(); p += 11) {
			CHECK(std::abs(k.cost(p, g.next_level(p))) < 1e-14);
			CHECK(k.cost(p, p) == doctest::Approx(c * h * m.sup_norm_bound()).epsilon(1e-12));
		}
		CHECK(k.row_start.size() == static_cast<size_t>(g.size() + 1));

		const SmallProblem &s = small();
		double phi_gap = 0;
		for (int p = 0; p < s.grid.size(); ++p) phi_gap = std::max(phi_gap, std::abs(s.phi(s.grid.point(p))));
		std::vector<double> row_min(s.grid.size(), std::numeric_limits<double>::infinity());
		for (int q = 0; q < s.grid.size(); ++q)
			for (long long e = s.kernel.row_start[q]; e < s.kernel.row_start[q + 1]; ++e)
				row_min[s.kernel.sources[e]] = std::min(row_min[s.kernel.sources[e]], s.kernel.costs[e]);
		for (int p = 0; p < s.grid.size(); ++p)
			CHECK(row_min[p] <= s.kernel.h * phi_gap + s.c * s.grid.diagonal());
		CHECK(s.kernel.truncation_cost > 0);
	}

	TEST_CASE("min-plus laws hold exactly")
	{
		const SmallProblem &s = small();
		const MinPlusLawReport r = check_minplus_laws(s.kernel, 20);
		CHECK(r.pass);
		CHECK(r.trials == 20);

		const ActionKernel q = quantize(s.kernel);
		const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(s.grid.size(), -2.0, 2.0).unaryExpr([](double x) {
			return std::ldexp(std::round(std::ldexp(x, 16)), -16);
		});
		const Eigen::VectorXd shifted = (u.array() + 5.0).matrix();
		CHECK((apply_operator(q, shifted).array() == apply_operator(q, u).array() + 5.0).all());

		Gen g(47);
		const Eigen::VectorXd a = random_vector(g, s.grid.size(), -1, 1);
		const Eigen::VectorXd b = a + random_vector(g, s.grid.size(), 0, 1);
		CHECK((apply_operator(s.kernel, a).array() <= apply_operator(s.kernel, b).array()).all());
		const Eigen::VectorXd d = random_vector(g, s.grid.size(), -1, 1);
		CHECK((apply_operator(s.kernel, a.cwiseMin(d)).array() ==
			   apply_operator(s.kernel, a).cwiseMin(apply_operator(s.kernel, d)).array())
				  .all());
	}

	TEST_CASE("application is deterministic and picks the lowest source on ties")
	{
		const SmallProblem &s = small();
		const Eigen::VectorXd zero = Eigen::VectorXd::Zero(s.grid.size());
		std::vector<int> arg1, arg2;
		const Eigen::VectorXd a = apply_operator(s.kernel, zero, 1, &arg1);
		const Eigen::VectorXd b = apply_operator(s.kernel, zero, 2, &arg2);
		CHECK((a.array() == b.array()).all());
		CHECK(arg1 == arg2);
		for (int q = 0; q < s.grid.size(); ++q)
			for (long long e = s.kernel.row_start[q]; e < s.kernel.row_start[q + 1]; ++e)
				if (s.kernel.costs[e] == a(q)) {
					CHECK(s.kernel.sources[e] == arg1[q]);
					break;
				}
	}

	TEST_CASE("one step output is C-Lipschitz up to a grid diagonal")
	{
		const SmallProblem &s = small();
		Gen g(49);
		for (int t = 0; t < 5; ++t) {
			const GridFunction u(s.grid, random_vector(g, s.grid.size(), 0, 0.05));
			const GridFunction tu = apply_operator(s.kernel, u);
			CHECK(tu.discrete_lipschitz() <= s.c * (1 + s.grid.diagonal()));
		}
	}

	TEST_CASE("ergodic values")
	{
		const SuspensionFlow m;
		const Grid g(m, 8, 10);
		ErgodicParams p;
		p.drift_horizon = 4;
		const ActionKernel kc = build_kernel(g, constant_observable(0.7), 2.0, 0.0, g.ds());
		CHECK(ergodic_value(m, constant_observable(0.7), kc, ErgodicMethod::periodic_orbits, p) ==
			  doctest::Approx(0.7).epsilon(1e-12));
		CHECK(ergodic_value(m, constant_observable(0.7), kc, ErgodicMethod::minplus_drift, p) ==
			  doctest::Approx(0.7).epsilon(1e-9));
		CHECK(ergodic_value(m, constant_observable(0.7), kc, ErgodicMethod::howard, p) == doctest::Approx(0.7).epsilon(1e-9));

		const SmallProblem &s = small();
		const ErgodicEstimate e = cross_validate(m, s.phi, s.kernel, p);
		CHECK(std::abs(e.periodic) < 1e-9);
		CHECK(e.consistent);
		CHECK(std::abs(e.howard) <= p.tolerance);

		const Observable d = distance_squared_observable(m);
		CHECK(std::abs(ergodic_value_periodic(m, d, 6, 1e-3)) < 1e-12);
		for (const auto &o : periodic_orbits(m, 4)) {
			const Vec3 x(o.base(0), o.base(1), 0);
			CHECK(birkhoff_integral(m, d, x, o.period * m.roof(), 1e-3) >= 0);
		}

		CHECK_THROWS_AS(cross_validate(m, constant_observable(1.0), kc, p), InconsistencyError);
	}

	TEST_CASE("weak-KAM solutions")
	{
		const SuspensionFlow m;
		const Grid g(m, 8, 10);
		SUBCASE("constant observable gives a constant solution")
		{
			const ActionKernel k = build_kernel(g, constant_observable(0.25), 2.0, 0.25, g.ds());
			const WeakKamSolution sol = weak_kam_solve(k);
			CHECK(sol.residual == 0.0);
			CHECK(sol.u.values.maxCoeff() - sol.u.values.minCoeff() < 1e-12);
		}
		SUBCASE("a coboundary recovers its potential up to a constant")
		{
			const SmallProblem &s = small();
			const ActionKernel k = rebase(s.kernel, ergodic_value_howard(s.kernel));
			WeakKamOptions o;
			o.tol = 1e-9;
			const WeakKamSolution sol = weak_kam_solve(k, o);
			CHECK(sol.residual <= o.tol);
			for (double inc : sol.increment_history) CHECK(inc >= -o.monotone_tol);
			const Eigen::VectorXd diff = sol.u.values - sample(s.grid, s.u0).values;
			const double mean = diff.mean();
			CHECK((diff.array() - mean).abs().maxCoeff() <= 5 * s.grid.diagonal() * s.u0.lipschitz());
			const Eigen::VectorXd again = apply_operator(k, sol.u.values);
			CHECK((again - sol.u.values).cwiseAbs().maxCoeff() <= o.tol);
			CHECK(sol.lipschitz <= s.c * (1 + s.grid.diagonal()));

			const SubactionCheck sub = verify_integrated_subaction(sol.u, s.phi, k.phi_bar, 100, 10.0);
			CHECK(sub.pass);
			CHECK(sub.checks == 600);
		}
		SUBCASE("a wrong phi_bar is detected")
		{
			WeakKamOptions o;
			o.max_iters = 40;
			CHECK_THROWS_AS(weak_kam_solve(build_kernel(g, constant_observable(0.25), 2.0, 0.5, g.ds()), o), DriftError);
			CHECK_THROWS_AS(weak_kam_solve(build_kernel(g, constant_observable(0.25), 2.0, 0.0, g.ds()), o),
							NonConvergenceError);
			o.tol = -1;
			CHECK_THROWS_AS(weak_kam_solve(build_kernel(g, constant_observable(0.25), 2.0, 0.25, g.ds()), o),
							std::invalid_argument);
		}
	}

	TEST_CASE("integrated subaction falsifiability")
	{
		const SmallProblem &s = small();
		const GridFunction flat(s.grid, 3.0);
		CHECK(verify_integrated_subaction(flat, constant_observable(1.0), 0.5, 50, 2.0).pass);

		// A tall bump away from the roof; its own Lipschitz constant enters the slack, so only its
		// height relative to its width matters.
		const Grid fine(s.model, 16, 20);
		const Vec2 c(0.5, 0.5);
		const GridFunction broken = sample(fine, [&](const Vec3 &p) {
			const double r = std::max(min_image(Vec2(p.head<2>() - c)).norm() / 0.45, std::abs(p(2) - 0.5) / 0.3);
			return s.u0(p) + 30.0 * std::max(0.0, 1.0 - r);
		});
		const SubactionCheck r = verify_integrated_subaction(broken, s.phi, 0.0, 200, 1.0);
		CHECK_FALSE(r.pass);
		CHECK(r.violations > 0);
		CHECK(r.worst_excess > 0);
	}

	TEST_CASE("a priori action estimates")
	{
		const SuspensionFlow m;
		const TrigPotential u0(m);
		AprioriOptions o;
		o.n = 12;
		o.ns = 10;
		o.n_sources = 20;
		const AprioriReport r = verify_apriori(m, coboundary_observable(u0), 2.0, 0.5, o);
		CHECK(r.n_triples == 200);
		CHECK(r.unreachable == 0);
		for (int i = 0; i < 3; ++i) CHECK(r.violations[i] == 0);
		CHECK(r.pass);
		CHECK(r.t == doctest::Approx(0.5));
	}
}
