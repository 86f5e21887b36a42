#include "generators.hpp"
#include "wkam/geometry_charts.hpp"

#include <doctest.h>

using namespace wkam;
using wkam::test::Gen;

namespace {

double torus_gap(const Vec3 &a, const Vec3 &b)
{
	return std::max(min_image(Vec2(a.head<2>() - b.head<2>())).norm(), std::abs(a(2) - b(2)));
}

AtlasOptions no_covering()
{
	AtlasOptions o;
	o.check_covering = false;
	return o;
}

} // namespace

TEST_SUITE("geometry_charts")
{
	TEST_CASE("admissible expansion at tau = roof is capped by exp(tau lambda_u / 2)")
	{
		const SuspensionFlow m;
		const double lam = std::log((3 + std::sqrt(5.0)) / 2);
		CHECK(m.lyapunov_rate() == doctest::Approx(lam).epsilon(1e-14));
		CHECK(std::exp(lam / 2) == doctest::Approx(1.618).epsilon(1e-3));
		HyperbolicConstants c = default_constants(m, 1.0, 0.3);
		CHECK_NOTHROW(check_constants(m, 1.0, 0.2, c));
		c.sigma_u = 1.62;
		c.eta = 0.01;
		c.eps_rho = eps_of_rho(c);
		CHECK_THROWS_AS(check_constants(m, 1.0, 0.2, c), ConstantConsistencyError);
		c.sigma_u = 1.6;
		c.eps_rho = eps_of_rho(c);
		CHECK_NOTHROW(check_constants(m, 1.0, 0.2, c));
	}

	TEST_CASE("eta cap for sigma_u = 1.5, sigma_s = 0.7")
	{
		const SuspensionFlow m;
		HyperbolicConstants c;
		c.sigma_u = 1.5;
		c.sigma_s = 0.7;
		c.rho = 0.3;
		c.eta = 0.0499;
		c.eps_rho = eps_of_rho(c);
		CHECK_NOTHROW(check_constants(m, 1.0, 0.2, c));
		c.eta = 0.0501;
		CHECK_THROWS_WITH_AS(check_constants(m, 1.0, 0.2, c), doctest::Contains("eta <"), ConstantConsistencyError);
		c.eta = 0.01;
		c.rho = 0.34;
		c.eps_rho = eps_of_rho(c);
		CHECK_THROWS_WITH_AS(check_constants(m, 1.0, 0.2, c), doctest::Contains("rho < tau/3"), ConstantConsistencyError);
		CHECK(eps_of_rho(c) == doctest::Approx(0.34 * std::min(0.25, 0.3 / 8)));
	}

	TEST_CASE("atlas boxes are centered and cover the suspension")
	{
		const SuspensionFlow m;
		const FlowBoxAtlas a = build_atlas(m, 1.0, 0.3, 0.2, 5);
		CHECK(a.n_gamma == static_cast<int>(a.boxes.size()));
		CHECK(a.covering_radius < a.eps);
		CHECK(a.lip_gamma >= 1);
		for (const auto &b : a.boxes) CHECK(torus_gap(chart(m, b, 0, Vec2::Zero()), b.center) < 1e-14);
		CHECK_THROWS_AS(build_atlas(m, 1.0, 0.3, 0.2, 1), UncoveredPointError);
	}

	TEST_CASE("chart round trip and flow conjugacy")
	{
		const SuspensionFlow m;
		const FlowBoxAtlas a = build_atlas(m, 0.5, 0.15, 0.16, 5, [] {
			AtlasOptions o;
			o.n_levels = 4;
			return o;
		}());
		Gen g(4);
		for (int b = 0; b < a.n_gamma; b += 7) {
			const FlowBox &box = a.boxes[b];
			double worst_round = 0, worst_conj = 0;
			for (int i = 0; i < 1000; ++i) {
				const double s = g.uniform(-0.9, 0.9);
				const Vec2 u = g.vec2(-0.2, 0.2);
				const Vec3 p = chart(m, box, s, u);
				const ChartCoords c = chart_inverse(m, box, p, s);
				worst_round = std::max({worst_round, std::abs(c.s - s), adapted_norm(Vec2(c.u - u))});
				worst_conj = std::max(worst_conj, torus_gap(m.flow(chart(m, box, 0, u), s), p));
			}
			CHECK(worst_round < 1e-10);
			CHECK(worst_conj < 1e-9);
		}
	}

	TEST_CASE("return times on the constant-roof suspension")
	{
		const SuspensionFlow m;
		const Vec3 x(0.1, 0.2, 0.0);
		const Vec2 ax = wrap_unit(Vec2(m.base_matrix() * x.head<2>()));
		const FlowBoxAtlas one_roof = atlas_from_centers(m, {x, Vec3(ax(0), ax(1), 0)}, 1.0, 0.3, 0.2, no_covering());
		Gen g(8);
		for (int i = 0; i < 20; ++i) CHECK(return_time(one_roof, 0, 1, g.vec2(-0.25, 0.25)) == doctest::Approx(1.0).epsilon(1e-12));

		const FlowBoxAtlas along = atlas_from_centers(m, {x, m.flow(x, 0.45)}, 0.5, 0.15, 0.16, no_covering());
		CHECK(return_time(along, 0, 1, Vec2::Zero()) == doctest::Approx(0.45).epsilon(1e-12));
		CHECK(adapted_norm(poincare_map(along, 0, 1, Vec2::Zero())) < 1e-12);
	}

	TEST_CASE("tilted sections keep the return-time gradient below one")
	{
		const SuspensionFlow m;
		const Vec3 x(0.3, 0.6, 0.0);
		FlowBoxAtlas a = atlas_from_centers(m, {x, m.flow(x, 0.5)}, 0.5, 0.15, 0.16, no_covering());
		a.boxes[1] = make_box(m, a.boxes[1].center, Vec2(0.1, -0.1));
		const double t0 = return_time(a, 0, 1, Vec2::Zero());
		Gen g(10);
		for (int i = 0; i < 100; ++i) {
			const Vec2 q = g.vec2(-0.14, 0.14);
			CHECK(std::abs(return_time(a, 0, 1, q) - t0) <= adapted_norm(q) + 1e-10);
		}
		CHECK(return_time_gradient_bound(a, 0, 1, 100) <= 1.0);
	}

	TEST_CASE("Poincare maps are the cat map in adapted coordinates")
	{
		const SuspensionFlow m;
		const Vec3 x(0.1, 0.2, 0.0);
		const Vec2 ax = wrap_unit(Vec2(m.base_matrix() * x.head<2>()));
		const FlowBoxAtlas a = atlas_from_centers(m, {x, Vec3(ax(0), ax(1), 0)}, 1.0, 0.3, 0.2, no_covering());
		const LocalHyperbolicMap f = local_map(a, 0, 1);
		CHECK(std::abs(f.linear(0, 0)) >= 2.61);
		CHECK(std::abs(f.linear(1, 1)) <= 0.382);
		CHECK(std::abs(f.linear(0, 1)) < 1e-9);
		CHECK(std::abs(f.linear(1, 0)) < 1e-9);
		const HyperbolicCertificate cert = certify_hyperbolic(f, 200);
		CHECK(cert.pass);
		CHECK(cert.item("lip_residual").measured < 1e-6);
		CHECK(cert.item("D_u").measured < 1e-9);
	}

	TEST_CASE("Poincare maps compose")
	{
		const SuspensionFlow m;
		const Vec3 x(0.4, 0.1, 0.1);
		const Vec3 y = m.displace(m.flow(x, 0.3), Vec3(0.01, -0.005, 0));
		const Vec3 z = m.displace(m.flow(x, 0.6), Vec3(-0.004, 0.008, 0));
		const FlowBoxAtlas a = atlas_from_centers(m, {x, y, z}, 0.5, 0.15, 0.16, no_covering());
		Gen g(12);
		for (int i = 0; i < 50; ++i) {
			const Vec2 q = g.vec2(-0.02, 0.02);
			const Vec2 direct = poincare_map_unchecked(a, 0, 2, q);
			const Vec2 composed = poincare_map_unchecked(a, 1, 2, poincare_map_unchecked(a, 0, 1, q));
			CHECK(adapted_norm(Vec2(direct - composed)) < 1e-9);
		}
	}

	TEST_CASE("inadmissible pairs name the failed condition")
	{
		const SuspensionFlow m;
		const Vec3 x(0.4, 0.1, 0.1);
		const FlowBoxAtlas a = atlas_from_centers(m, {x, m.flow(x, 0.1)}, 0.5, 0.15, 0.16, no_covering());
		const Admissibility adm = forward_admissible(a, 0, 1);
		CHECK_FALSE(adm.admissible);
		CHECK(adm.failed.find("tau - rho") != std::string::npos);
		CHECK_THROWS_AS(poincare_map(a, 0, 1, Vec2::Zero()), AdmissibilityError);
	}

	TEST_CASE("admissibility survives halving rho when the origin image is small")
	{
		const SuspensionFlow m;
		AtlasOptions o;
		o.n_levels = 4;
		const FlowBoxAtlas a = build_atlas(m, 0.5, 0.15, 0.16, 5, o);
		int checked = 0;
		for (int x = 0; x < a.n_gamma; x += 3)
			for (int y = 0; y < a.n_gamma; ++y) {
				const Admissibility full = forward_admissible(a, x, y);
				if (!full.admissible) continue;
				HyperbolicConstants half = a.hyper;
				half.rho = a.rho / 2;
				if (!(adapted_norm(full.image_of_origin) < eps_of_rho(half) / 2)) continue;
				const Admissibility target_in = forward_admissible(a, x, y, a.rho / 2);
				if (std::abs(full.target.s - a.tau) < a.rho / 2 && adapted_norm(full.target.u) < a.rho / 2) {
					CHECK(target_in.admissible);
					++checked;
				}
			}
		CHECK(checked > 0);
	}

	TEST_CASE("hyperbolic certificates")
	{
		HyperbolicConstants req;
		req.sigma_u = 1.5;
		req.sigma_s = 0.7;
		req.eta = 0.04;
		req.rho = 0.3;
		req.eps_rho = eps_of_rho(req);
		const HyperbolicCertificate id = certify_hyperbolic(affine_map(Mat2::Identity(), Vec2::Zero(), req), 100);
		CHECK_FALSE(id.pass);
		CHECK_FALSE(id.item("sigma_u").pass);

		const double eta = 0.03;
		Mat2 a;
		a << 2.0, 0.0, 0.0, 0.5;
		LocalHyperbolicMap f;
		f.linear = a;
		f.required = req;
		f.f = [a, eta](const Vec2 &v) -> Vec2 { return a * v + eta * Vec2(std::sin(v(0)), std::sin(v(1))); };
		f.jacobian = [a, eta](const Vec2 &v) -> Mat2 {
			Mat2 j = a;
			j(0, 0) += eta * std::cos(v(0));
			j(1, 1) += eta * std::cos(v(1));
			return j;
		};
		const HyperbolicCertificate c = certify_hyperbolic(f, 2000);
		const double lip = c.item("lip_residual").measured;
		CHECK(lip >= 0.9 * eta);
		CHECK(lip <= 1.1 * eta);
		CHECK(c.pass);
	}

	TEST_CASE("locate_box finds the lowest-radius box")
	{
		const SuspensionFlow m;
		const FlowBoxAtlas a = build_atlas(m, 1.0, 0.3, 0.2, 5);
		Gen g(14);
		for (int i = 0; i < 200; ++i) {
			const Vec3 p = g.point(m);
			double r;
			const int b = locate_box(a, p, &r);
			REQUIRE(b >= 0);
			for (int k = 0; k < a.n_gamma; ++k) {
				const ChartCoords c = chart_inverse(m, a.boxes[k], p, 0);
				CHECK(std::max(std::abs(c.s), adapted_norm(c.u)) >= r - 1e-12);
			}
		}
	}
}
