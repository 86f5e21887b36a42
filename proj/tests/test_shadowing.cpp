#include "generators.hpp"
#include "wkam/shadowing.hpp"

#include <doctest.h>

using namespace wkam;
using wkam::test::Gen;

namespace {

AtlasOptions no_covering()
{
	AtlasOptions o;
	o.check_covering = false;
	return o;
}

// Base point of minimal period 6, from (A^6 - I) x = k solved over the rationals.
Vec2 period_six_point(const SuspensionFlow &m)
{
	Mat2 p = Mat2::Identity();
	for (int i = 0; i < 6; ++i) p = m.base_matrix() * p;
	const Vec2 x = wrap_unit(Vec2((p - Mat2::Identity()).inverse() * Vec2(1, 0)));
	for (int n = 1; n < 6; ++n) REQUIRE(min_image(Vec2(m.apply_base(x, n) - x)).norm() > 1e-6);
	return x;
}

} // namespace

TEST_SUITE("shadowing")
{
	TEST_CASE("K estimate")
	{
		ChainStatistics s;
		s.sigma_u = (3 + std::sqrt(5.0)) / 2;
		s.sigma_s = (3 - std::sqrt(5.0)) / 2;
		s.eta = 0;
		CHECK(estimate_k_gamma(s) == doctest::Approx(2 / (1 - s.sigma_s)).epsilon(1e-14));
		CHECK(estimate_k_gamma(s) == doctest::Approx(3.236).epsilon(1e-3));
		s.sigma_u = 1.6;
		s.sigma_s = 0.4;
		s.eta = (s.sigma_u - 1) / 6;
		CHECK(estimate_k_gamma(s) == doctest::Approx(4 / (s.sigma_u - 1)).epsilon(1e-12));
		s.sigma_u = 1.0;
		s.eta = 0;
		CHECK_THROWS_AS(estimate_k_gamma(s), ConstantsTooWeakError);
		s.sigma_u = 50;
		s.sigma_s = 0.01;
		CHECK(estimate_k_gamma(s) >= 1.0);
	}

	TEST_CASE("near the fixed point the orbit collapses to it")
	{
		const SuspensionFlow m;
		const FlowBoxAtlas a = atlas_from_centers(m, {Vec3(0, 0, 0)}, 1.0, 0.3, 0.2, no_covering());
		const std::vector<LocalHyperbolicMap> maps{local_map(a, 0, 0)};
		const double d = 1e-3;
		const DiscretePseudoOrbit q{{Vec2(d, d)}, {0}};
		const ShadowingResult r = shadow_periodic(q, maps, 1e-13);
		CHECK(adapted_norm(r.orbit[0]) < 1e-12);
		CHECK(r.distance_sum == doctest::Approx(d).epsilon(1e-9));
		// Oracle: the only solution of (A - I) p = 0 is p = 0, so the error is |(A - I) q|.
		const Mat2 lin = maps[0].linear;
		CHECK(r.error_sum == doctest::Approx(adapted_norm(Vec2((lin - Mat2::Identity()) * Vec2(d, d)))).epsilon(1e-6));
		CHECK(r.pass);
		CHECK(r.distance_sum <= r.k_gamma * r.error_sum);
	}

	TEST_CASE("true orbits are returned unchanged")
	{
		const SuspensionFlow m;
		const Vec2 x = period_six_point(m);
		std::vector<Vec3> centers;
		for (int i = 0; i < 6; ++i) {
			const Vec2 y = wrap_unit(m.apply_base(x, i));
			centers.emplace_back(y(0), y(1), 0);
		}
		const FlowBoxAtlas a = atlas_from_centers(m, centers, 1.0, 0.3, 0.2, no_covering());
		std::vector<LocalHyperbolicMap> maps;
		for (int i = 0; i < 6; ++i) maps.push_back(local_map(a, i, (i + 1) % 6));
		const DiscretePseudoOrbit exact{std::vector<Vec2>(6, Vec2::Zero()), {0, 1, 2, 3, 4, 5}};
		const ShadowingResult r = shadow_periodic(exact, maps, 1e-12);
		CHECK(r.iterations == 0);
		CHECK(r.distance_sum == 0.0);
		CHECK(r.error_sum < 1e-12);
	}

	TEST_CASE("perturbed period-six orbit is recovered")
	{
		const SuspensionFlow m;
		const Vec2 x = period_six_point(m);
		std::vector<Vec3> centers;
		for (int i = 0; i < 6; ++i) {
			const Vec2 y = wrap_unit(m.apply_base(x, i));
			centers.emplace_back(y(0), y(1), 0);
		}
		const FlowBoxAtlas a = atlas_from_centers(m, centers, 1.0, 0.3, 0.2, no_covering());
		std::vector<LocalHyperbolicMap> maps;
		for (int i = 0; i < 6; ++i) maps.push_back(local_map(a, i, (i + 1) % 6));
		Gen g(21);
		for (int trial = 0; trial < 10; ++trial) {
			DiscretePseudoOrbit q;
			for (int i = 0; i < 6; ++i) {
				q.points.push_back(1e-4 * g.vec2());
				q.boxes.push_back(i);
			}
			const ShadowingResult r = shadow_periodic(q, maps, 1e-13);
			for (const Vec2 &p : r.orbit) CHECK(adapted_norm(p) < 1e-9);
			CHECK(r.max_residual() < 1e-10);
			CHECK(r.pass);
		}
	}

	TEST_CASE("randomized suite holds the summed bound")
	{
		const SuspensionFlow m;
		ShadowingSuiteOptions o;
		o.n_orbits = 1000;
		const ShadowingSuiteReport r = shadowing_suite(m, o);
		CHECK(r.cases.size() == 1000);
		CHECK(r.failures == 0);
		CHECK(r.max_residual <= 1e-10);
		CHECK(r.max_ratio <= r.k_gamma);
		int min_len = 1000, max_len = 0;
		double min_noise = 1, max_noise = 0;
		for (const auto &c : r.cases) {
			CHECK(c.monotone);
			CHECK(c.distance_sum <= c.k_gamma * c.error_sum + 1e-12);
			min_len = std::min(min_len, c.length);
			max_len = std::max(max_len, c.length);
			min_noise = std::min(min_noise, c.noise);
			max_noise = std::max(max_noise, c.noise);
		}
		CHECK(min_len >= 2);
		CHECK(max_len <= 50);
		CHECK(min_noise >= 1e-6);
		CHECK(max_noise <= 1e-2);
	}

	TEST_CASE("failure modes")
	{
		HyperbolicConstants req;
		req.sigma_u = 1.5;
		req.sigma_s = 0.7;
		req.eta = 0.04;
		req.rho = 0.3;
		req.eps_rho = eps_of_rho(req);
		Mat2 lin;
		lin << 2.0, 0.0, 0.0, 0.5;
		// Fixed point of v -> lin v + c sits at (-1, 2), outside B(rho).
		const std::vector<LocalHyperbolicMap> far{affine_map(lin, Vec2(1.0, 1.0), req)};
		CHECK_THROWS_AS(shadow_periodic(DiscretePseudoOrbit{{Vec2::Zero()}, {0}}, far, 1e-12), ShadowingEscape);
		LocalHyperbolicMap bent;
		bent.linear = lin;
		bent.required = req;
		bent.f = [lin](const Vec2 &v) -> Vec2 { return lin * v + 0.03 * Vec2(std::sin(v(0)), std::sin(v(1))); };
		bent.jacobian = [lin](const Vec2 &v) -> Mat2 {
			Mat2 j = lin;
			j(0, 0) += 0.03 * std::cos(v(0));
			j(1, 1) += 0.03 * std::cos(v(1));
			return j;
		};
		const DiscretePseudoOrbit start{{Vec2(0.05, 0.05)}, {0}};
		CHECK_THROWS_AS(shadow_periodic(start, {bent}, 1e-14, 2.0, 1), ShadowingDivergence);
		CHECK(adapted_norm(shadow_periodic(start, {bent}, 1e-14, 2.0).orbit[0]) < 1e-12);
	}
}
