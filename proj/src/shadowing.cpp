#include "wkam/shadowing.hpp"

#include <random>
#include <sstream>

namespace wkam {

std::vector<double> step_errors(const DiscretePseudoOrbit &orbit, const std::vector<LocalHyperbolicMap> &maps)
{
	const int n = orbit.size();
	std::vector<double> e(n);
	for (int i = 0; i < n; ++i) e[i] = adapted_norm(Vec2(maps[i].f(orbit.points[i]) - orbit.points[(i + 1) % n]));
	return e;
}

double ShadowingResult::max_residual() const
{
	double r = 0;
	for (double v : residuals) r = std::max(r, v);
	return r;
}

ChainStatistics chain_statistics(const std::vector<LocalHyperbolicMap> &maps, int lip_samples)
{
	ChainStatistics s;
	unsigned long long seed = 1;
	for (const auto &m : maps) {
		const Mat2 &a = m.linear;
		s.sigma_u = std::min(s.sigma_u, std::abs(a(0, 0)));
		s.sigma_s = std::max(s.sigma_s, std::abs(a(1, 1)));
		s.eta = std::max({s.eta, std::abs(a(0, 1)), std::abs(a(1, 0))});
		if (lip_samples > 0) s.eta = std::max(s.eta, certify_hyperbolic(m, lip_samples, seed++).item("lip_residual").measured);
	}
	return s;
}

double estimate_k_gamma(const ChainStatistics &stats)
{
	const double gap = std::min(stats.sigma_u - 1 - 3 * stats.eta, 1 - stats.sigma_s - 3 * stats.eta);
	if (!(gap > 0)) {
		std::ostringstream os;
		os << "estimate_k_gamma: hyperbolicity gap is not positive (sigma_u = " << stats.sigma_u
		   << ", sigma_s = " << stats.sigma_s << ", eta = " << stats.eta << ")";
		throw ConstantsTooWeakError(os.str());
	}
	return std::max(1.0, 2.0 / gap);
}

ShadowingResult shadow_periodic(const DiscretePseudoOrbit &orbit, const std::vector<LocalHyperbolicMap> &maps,
								double tol, double k_gamma, int max_iters)
{
	const int n = orbit.size();
	if (n < 1 || static_cast<int>(maps.size()) != n)
		throw std::invalid_argument("shadow_periodic: need one map per orbit point");
	if (!(tol > 0)) throw std::invalid_argument("shadow_periodic: tol must be positive");
	if (std::isnan(k_gamma)) k_gamma = estimate_k_gamma(chain_statistics(maps));

	ShadowingResult r;
	r.k_gamma = k_gamma;
	std::vector<Vec2> p = orbit.points;
	std::vector<Vec2> g(n);
	auto residual = [&]() {
		double worst = 0;
		for (int i = 0; i < n; ++i) {
			g[i] = p[(i + 1) % n] - maps[i].f(p[i]);
			worst = std::max(worst, adapted_norm(g[i]));
		}
		return worst;
	};

	double res = residual();
	r.history.push_back(res);
	int stalled = 0;
	while (res >= tol) {
		if (r.iterations >= max_iters)
			throw ShadowingDivergence("shadow_periodic: iteration limit reached", r.history);
		// Cyclic block-bidiagonal Jacobian of G(p)_i = p_{i+1} - f_i(p_i).
		Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);
		Eigen::VectorXd rhs(2 * n);
		for (int i = 0; i < n; ++i) {
			jac.block<2, 2>(2 * i, 2 * i) -= maps[i].jacobian(p[i]);
			jac.block<2, 2>(2 * i, 2 * ((i + 1) % n)) += Mat2::Identity();
			rhs.segment<2>(2 * i) = -g[i];
		}
		const Eigen::VectorXd step = jac.partialPivLu().solve(rhs);
		for (int i = 0; i < n; ++i) p[i] += step.segment<2>(2 * i);
		const double next = residual();
		++r.iterations;
		stalled = next < 0.5 * res ? 0 : stalled + 1;
		res = next;
		r.history.push_back(res);
		if (stalled >= 5 || !std::isfinite(res))
			throw ShadowingDivergence("shadow_periodic: residual failed to halve for 5 steps", r.history);
	}

	for (int i = 0; i < n; ++i) {
		const double rho = maps[i].required.rho;
		if (rho > 0 && !(adapted_norm(p[i]) < rho)) {
			std::ostringstream os;
			os << "shadow_periodic: solution left B_i(rho) at index " << i;
			throw ShadowingEscape(os.str(), i);
		}
	}

	r.orbit = p;
	r.residuals.resize(n);
	for (int i = 0; i < n; ++i) r.residuals[i] = adapted_norm(g[i]);
	for (int i = 0; i < n; ++i) r.distance_sum += adapted_norm(Vec2(orbit.points[i] - p[i]));
	for (double e : step_errors(orbit, maps)) r.error_sum += e;
	r.pass = r.distance_sum <= k_gamma * r.error_sum;
	return r;
}

} // namespace wkam

namespace wkam {

ShadowingSuiteReport shadowing_suite(const SuspensionFlow &model, const ShadowingSuiteOptions &options)
{
	std::mt19937_64 rng(options.seed);
	std::uniform_real_distribution<double> unit(-1.0, 1.0);
	std::uniform_int_distribution<int> length_dist(options.min_length, options.max_length);
	std::uniform_real_distribution<double> log_noise(std::log(options.min_noise), std::log(options.max_noise));

	std::vector<PeriodicOrbit> base_orbits = periodic_orbits(model, 5);
	AtlasOptions atlas_options;
	atlas_options.check_covering = false;

	ShadowingSuiteReport report;
	for (int k = 0; k < options.n_orbits; ++k) {
		ShadowingSuiteCase c;
		c.length = length_dist(rng);
		c.noise = std::exp(log_noise(rng));
		std::vector<const PeriodicOrbit *> fitting;
		for (const auto &o : base_orbits)
			if (c.length % o.period == 0) fitting.push_back(&o);
		const PeriodicOrbit &base = *fitting[std::uniform_int_distribution<size_t>(0, fitting.size() - 1)(rng)];
		c.base_period = base.period;

		std::vector<Vec3> centers;
		const FlowBox level0 = make_box(model, Vec3::Zero());
		for (int i = 0; i < c.length; ++i) {
			const Vec2 jitter = options.center_jitter * Vec2(unit(rng), unit(rng));
			const Vec2 x = base.points[i % base.period] + level0.from_adapted * jitter;
			centers.emplace_back(x(0), x(1), 0.0);
		}
		const FlowBoxAtlas atlas =
			atlas_from_centers(model, centers, model.roof(), options.rho, options.eps, atlas_options);
		std::vector<LocalHyperbolicMap> maps;
		for (int i = 0; i < c.length; ++i) {
			const int j = (i + 1) % c.length;
			const Admissibility adm = forward_admissible(atlas, i, j);
			if (!adm.admissible) c.failure = "inadmissible pair: " + adm.failed;
			maps.push_back(local_map(atlas, i, j));
		}
		try {
			if (!c.failure.empty()) throw std::runtime_error(c.failure);
			c.k_gamma = estimate_k_gamma(chain_statistics(maps));
			DiscretePseudoOrbit truth_seed;
			truth_seed.points.assign(c.length, Vec2::Zero());
			for (int i = 0; i < c.length; ++i) truth_seed.boxes.push_back(i);
			const ShadowingResult truth = shadow_periodic(truth_seed, maps, options.tol, c.k_gamma);

			DiscretePseudoOrbit q = truth_seed;
			std::vector<Vec2> offsets(c.length);
			for (int i = 0; i < c.length; ++i) {
				offsets[i] = c.noise * Vec2(unit(rng), unit(rng));
				q.points[i] = truth.orbit[i] + offsets[i];
				if (!(adapted_norm(q.points[i]) < options.rho / 2))
					throw std::runtime_error("pseudo-orbit point outside B(rho/2)");
			}
			const ShadowingResult r = shadow_periodic(q, maps, options.tol, c.k_gamma);
			c.converged = true;
			c.iterations = r.iterations;
			c.error_sum = r.error_sum;
			c.distance_sum = r.distance_sum;
			c.max_residual = r.max_residual();
			for (int i = 0; i < c.length; ++i)
				c.truth_error = std::max(c.truth_error, adapted_norm(Vec2(r.orbit[i] - truth.orbit[i])));

			DiscretePseudoOrbit half = q;
			for (int i = 0; i < c.length; ++i) half.points[i] = truth.orbit[i] + 0.5 * offsets[i];
			const ShadowingResult rh = shadow_periodic(half, maps, options.tol, c.k_gamma);
			c.monotone = rh.distance_sum <= r.distance_sum + 10 * options.tol * c.length;
			c.pass = r.pass && c.monotone;
			if (!r.pass) c.failure = "shadowing bound violated";
			else if (!c.monotone) c.failure = "halving the noise increased the distance sum";
		} catch (const std::exception &e) {
			c.failure = e.what();
			c.pass = false;
		}
		if (!c.pass) ++report.failures;
		report.max_ratio = std::max(report.max_ratio, c.error_sum > 0 ? c.distance_sum / c.error_sum : 0.0);
		report.max_residual = std::max(report.max_residual, c.max_residual);
		report.k_gamma = std::max(report.k_gamma, c.k_gamma);
		report.cases.push_back(c);
	}
	report.pass = report.failures == 0;
	return report;
}

} // namespace wkam
