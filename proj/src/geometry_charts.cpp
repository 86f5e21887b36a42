#include "wkam/geometry_charts.hpp"

#include <random>
#include <sstream>

namespace wkam {

namespace {

Mat2 level_scaling(const SuspensionFlow &model, double level)
{
	const double g = std::pow(std::abs(model.unstable_eigenvalue()), level / model.roof());
	Mat2 d = Mat2::Zero();
	d(0, 0) = g;
	d(1, 1) = 1.0 / g;
	return d;
}

Mat2 base_power(const SuspensionFlow &model, long j)
{
	Mat2 r = Mat2::Identity();
	const Mat2 &m = j >= 0 ? model.base_matrix() : model.base_inverse();
	for (long i = 0; i < std::abs(j); ++i) r = m * r;
	return r;
}

double norm_max_to_2(const Mat2 &j)
{
	return std::max((j * Vec2(1, 1)).norm(), (j * Vec2(1, -1)).norm());
}

double norm_2_to_max(const Mat2 &j) { return std::max(j.row(0).norm(), j.row(1).norm()); }

std::string fmt(double v)
{
	std::ostringstream os;
	os.precision(6);
	os << v;
	return os.str();
}

} // namespace

FlowBox make_box(const SuspensionFlow &model, const Vec3 &center, const Vec2 &tilt)
{
	FlowBox b;
	b.center = model.normalize(center);
	b.to_adapted = level_scaling(model, b.center(2)) * model.eigen_basis_inverse();
	b.from_adapted = b.to_adapted.inverse();
	b.tilt = tilt;
	return b;
}

Vec3 chart(const SuspensionFlow &model, const FlowBox &box, double s, const Vec2 &u)
{
	Vec3 p;
	p.head<2>() = box.center.head<2>() + box.from_adapted * u;
	p(2) = box.center(2) + s;
	return model.normalize(p);
}

ChartCoords chart_inverse(const SuspensionFlow &model, const FlowBox &box, const Vec3 &p_in, double s_hint)
{
	const Vec3 p = model.normalize(p_in);
	const double roof = model.roof();
	const long j0 = std::lround((s_hint + box.center(2) - p(2)) / roof);
	ChartCoords best;
	double best_gap = std::numeric_limits<double>::infinity();
	long best_j = j0;
	for (long j = j0 - 1; j <= j0 + 1; ++j) {
		const double r = p(2) + static_cast<double>(j) * roof - box.center(2);
		const double gap = std::abs(r - s_hint);
		if (gap < best_gap) {
			best_gap = gap;
			best_j = j;
			best.s = r;
		}
	}
	const Vec2 lifted = model.apply_base(p.head<2>(), -best_j);
	const Vec2 delta = min_image(lifted - box.center.head<2>());
	double best_norm = std::numeric_limits<double>::infinity();
	for (int a = -1; a <= 1; ++a)
		for (int b = -1; b <= 1; ++b) {
			const Vec2 u = box.to_adapted * (delta + Vec2(a, b));
			const double n = adapted_norm(u);
			if (n < best_norm) {
				best_norm = n;
				best.u = u;
			}
		}
	return best;
}

double eps_of_rho(const HyperbolicConstants &c)
{
	return c.rho * std::min((c.sigma_u - 1) / 2, (1 - c.sigma_s) / 8);
}

HyperbolicConstants default_constants(const SuspensionFlow &model, double tau, double rho)
{
	const double lu = model.lyapunov_rate();
	HyperbolicConstants c;
	c.sigma_u = 0.5 * (1 + std::exp(tau * lu / 2));
	c.sigma_s = 0.5 * (1 + std::exp(-tau * lu / 2));
	c.eta = 0.5 * std::min((c.sigma_u - 1) / 6, (1 - c.sigma_s) / 6);
	c.rho = rho;
	c.eps_rho = eps_of_rho(c);
	return c;
}

void check_constants(const SuspensionFlow &model, double tau, double eps, const HyperbolicConstants &c)
{
	const double lu = model.lyapunov_rate();
	const double ls = -lu;
	auto fail = [](const std::string &msg) { throw ConstantConsistencyError("constant-consistency: " + msg); };
	if (!(tau > 0)) fail("tau > 0");
	if (!(std::exp(tau * ls / 2) < c.sigma_s))
		fail("exp(tau lambda_s / 2) < sigma_s (sigma_s = " + fmt(c.sigma_s) + ", lower = " + fmt(std::exp(tau * ls / 2)) + ")");
	if (!(c.sigma_s < 1)) fail("sigma_s < 1 (sigma_s = " + fmt(c.sigma_s) + ")");
	if (!(1 < c.sigma_u)) fail("1 < sigma_u (sigma_u = " + fmt(c.sigma_u) + ")");
	if (!(c.sigma_u < std::exp(tau * lu / 2)))
		fail("sigma_u < exp(tau lambda_u / 2) (sigma_u = " + fmt(c.sigma_u) + ", upper = " + fmt(std::exp(tau * lu / 2)) + ")");
	const double eta_max = std::min((c.sigma_u - 1) / 6, (1 - c.sigma_s) / 6);
	if (!(c.eta >= 0 && c.eta < eta_max)) fail("eta < min((sigma_u-1)/6, (1-sigma_s)/6) (eta = " + fmt(c.eta) + ", cap = " + fmt(eta_max) + ")");
	if (!(c.rho > 0 && c.rho < tau / 3)) fail("rho < tau/3 (rho = " + fmt(c.rho) + ")");
	if (std::abs(c.eps_rho - eps_of_rho(c)) > 1e-15 * std::max(1.0, c.eps_rho))
		fail("eps(rho) = rho min((sigma_u-1)/2, (1-sigma_s)/8)");
	if (!(eps > 0 && eps < tau / 2)) fail("eps < tau/2 (eps = " + fmt(eps) + ")");
}

FlowBoxAtlas atlas_from_centers(const SuspensionFlow &model, const std::vector<Vec3> &centers, double tau,
								double rho, double eps, const AtlasOptions &options)
{
	HyperbolicConstants c = default_constants(model, tau, rho);
	if (!std::isnan(options.sigma_u)) c.sigma_u = options.sigma_u;
	if (!std::isnan(options.sigma_s)) c.sigma_s = options.sigma_s;
	if (!std::isnan(options.eta))
		c.eta = options.eta;
	else
		c.eta = 0.5 * std::min((c.sigma_u - 1) / 6, (1 - c.sigma_s) / 6);
	c.eps_rho = eps_of_rho(c);
	check_constants(model, tau, eps, c);

	FlowBoxAtlas atlas;
	atlas.model = model;
	atlas.tau = tau;
	atlas.rho = rho;
	atlas.eps = eps;
	atlas.eps_as = eps / 2;
	atlas.hyper = c;
	atlas.diam_omega = model.diameter();
	for (const auto &x : centers) atlas.boxes.push_back(make_box(model, x));
	atlas.n_gamma = static_cast<int>(atlas.boxes.size());

	// Lipschitz constant of the charts and their inverses over (-2 tau, 2 tau) x B(1).
	double lip = 1;
	const int ns = 200;
	for (const auto &box : atlas.boxes)
		for (int k = 0; k <= ns; ++k) {
			const double s = -2 * tau + 4 * tau * k / ns;
			const long j = static_cast<long>(std::floor((box.center(2) + s) / model.roof()));
			const Mat2 jac = base_power(model, j) * box.from_adapted;
			lip = std::max({lip, norm_max_to_2(jac), norm_2_to_max(jac.inverse())});
		}
	atlas.lip_gamma = lip;

	if (options.check_covering) {
		const int n = 2 * std::max(1, options.covering_samples);
		atlas.covering_samples = n * n * n;
		for (int i = 0; i < n; ++i)
			for (int j = 0; j < n; ++j)
				for (int k = 0; k < n; ++k) {
					const Vec3 p(static_cast<double>(i) / n, static_cast<double>(j) / n, model.roof() * k / n);
					double r;
					locate_box(atlas, p, &r);
					atlas.covering_radius = std::max(atlas.covering_radius, r);
					if (!(r < eps)) {
						std::ostringstream os;
						os << "uncovered point (" << p(0) << ", " << p(1) << ", " << p(2) << "): nearest box radius " << r
						   << " >= eps " << eps;
						throw UncoveredPointError(os.str(), p);
					}
				}
	}
	return atlas;
}

FlowBoxAtlas build_atlas(const SuspensionFlow &model, double tau, double rho, double eps, int n_points,
						 const AtlasOptions &options)
{
	if (n_points < 1) throw std::invalid_argument("build_atlas: n_points must be positive");
	const int levels = options.n_levels > 0 ? options.n_levels
											: static_cast<int>(std::ceil(model.roof() / (1.8 * eps)));
	std::vector<Vec3> centers;
	for (int k = 0; k < levels; ++k)
		for (int i = 0; i < n_points; ++i)
			for (int j = 0; j < n_points; ++j)
				centers.emplace_back(static_cast<double>(i) / n_points, static_cast<double>(j) / n_points,
									 model.roof() * k / levels);
	return atlas_from_centers(model, centers, tau, rho, eps, options);
}

int locate_box(const FlowBoxAtlas &atlas, const Vec3 &p, double *radius, ChartCoords *coords)
{
	int best = -1;
	double best_r = std::numeric_limits<double>::infinity();
	ChartCoords best_c;
	for (size_t i = 0; i < atlas.boxes.size(); ++i) {
		const ChartCoords c = chart_inverse(atlas.model, atlas.boxes[i], p, 0.0);
		const double r = std::max(std::abs(c.s), adapted_norm(c.u));
		if (r < best_r) {
			best_r = r;
			best = static_cast<int>(i);
			best_c = c;
		}
	}
	if (radius) *radius = best_r;
	if (coords) *coords = best_c;
	return best;
}

namespace {

// Sheet index and lattice shift that continue the inverse chart of y from the image of x's center,
// so that Poincare maps are defined on all of B_x(rho) rather than the injectivity domain of y.
struct PairLift {
	long sheet = 0;
	Mat2 power = Mat2::Identity();
	Vec2 shift = Vec2::Zero();
};

PairLift pair_lift(const FlowBoxAtlas &atlas, const FlowBox &bx, const FlowBox &by)
{
	const SuspensionFlow &m = atlas.model;
	PairLift l;
	l.sheet = std::lround((bx.center(2) + atlas.tau - by.center(2)) / m.roof());
	l.power = base_power(m, l.sheet);
	const Vec2 d = l.power * bx.center.head<2>() - by.center.head<2>();
	const Vec2 n0 = d.array().round().matrix();
	double best = std::numeric_limits<double>::infinity();
	for (int a = -1; a <= 1; ++a)
		for (int b = -1; b <= 1; ++b) {
			const Vec2 n = n0 + Vec2(a, b);
			const double v = adapted_norm(Vec2(by.to_adapted * (d - n)));
			if (v < best) {
				best = v;
				l.shift = n;
			}
		}
	return l;
}

// Coordinates in y's chart of f^t(gamma_x(tilt_x . q, q)).
ChartCoords lifted_coords(const FlowBoxAtlas &atlas, const FlowBox &bx, const FlowBox &by, const PairLift &l,
						  const Vec2 &q, double t)
{
	ChartCoords c;
	const Vec2 b = bx.center.head<2>() + bx.from_adapted * q;
	c.s = bx.center(2) + bx.tilt.dot(q) + t - static_cast<double>(l.sheet) * atlas.model.roof() - by.center(2);
	c.u = by.to_adapted * (l.power * b - by.center.head<2>() - l.shift);
	return c;
}

} // namespace

double return_time(const FlowBoxAtlas &atlas, int x, int y, const Vec2 &q)
{
	const FlowBox &bx = atlas.boxes.at(x);
	const FlowBox &by = atlas.boxes.at(y);
	const PairLift lift = pair_lift(atlas, bx, by);
	const double t_max = 2 * atlas.tau;
	auto crossing = [&](double t) {
		const ChartCoords c = lifted_coords(atlas, bx, by, lift, q, t);
		return c.s - by.tilt.dot(c.u);
	};
	if (by.tilt.isZero(0)) {
		const double t = -lifted_coords(atlas, bx, by, lift, q, 0.0).s;
		if (!(t > 0 && t < t_max)) throw NoIntersectionError("return_time: no section crossing in (0, 2 tau)");
		return t;
	}
	const int n_bracket = 100;
	double lo = 0, f_lo = crossing(0);
	for (int k = 1; k <= n_bracket; ++k) {
		const double hi = t_max * k / n_bracket;
		const double f_hi = crossing(hi);
		if (f_lo < 0 && f_hi >= 0) {
			double a = lo, b = hi;
			while (b - a > 1e-12 * atlas.tau) {
				const double mid = 0.5 * (a + b);
				if (crossing(mid) < 0)
					a = mid;
				else
					b = mid;
			}
			return 0.5 * (a + b);
		}
		lo = hi;
		f_lo = f_hi;
	}
	throw NoIntersectionError("return_time: no section crossing in (0, 2 tau)");
}

Vec2 poincare_map_unchecked(const FlowBoxAtlas &atlas, int x, int y, const Vec2 &q)
{
	const FlowBox &bx = atlas.boxes.at(x);
	const FlowBox &by = atlas.boxes.at(y);
	const double t = return_time(atlas, x, y, q);
	return lifted_coords(atlas, bx, by, pair_lift(atlas, bx, by), q, t).u;
}

Admissibility forward_admissible(const FlowBoxAtlas &atlas, int x, int y, double rho)
{
	if (std::isnan(rho)) rho = atlas.rho;
	HyperbolicConstants c = atlas.hyper;
	c.rho = rho;
	const double eps_r = eps_of_rho(c);
	Admissibility a;
	a.target = chart_inverse(atlas.model, atlas.boxes.at(x), atlas.boxes.at(y).center, atlas.tau);
	if (!(a.target.s > atlas.tau - rho && a.target.s < atlas.tau + rho)) {
		a.failed = "target section time outside (tau - rho, tau + rho)";
		return a;
	}
	if (!(adapted_norm(a.target.u) < rho)) {
		a.failed = "target center outside B_x(rho)";
		return a;
	}
	try {
		a.image_of_origin = poincare_map_unchecked(atlas, x, y, Vec2::Zero());
	} catch (const NoIntersectionError &e) {
		a.failed = e.what();
		return a;
	}
	if (!(adapted_norm(a.image_of_origin) < eps_r)) {
		a.failed = "f_{x,y}(0) outside B_y(eps(rho))";
		return a;
	}
	a.admissible = true;
	return a;
}

Vec2 poincare_map(const FlowBoxAtlas &atlas, int x, int y, const Vec2 &q)
{
	const Admissibility a = forward_admissible(atlas, x, y);
	if (!a.admissible) throw AdmissibilityError("poincare_map: pair not forward admissible: " + a.failed);
	return poincare_map_unchecked(atlas, x, y, q);
}

double return_time_gradient_bound(const FlowBoxAtlas &atlas, int x, int y, int n_samples, unsigned long long seed)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> ball(-atlas.rho, atlas.rho);
	const double h = 1e-6;
	double best = 0;
	for (int i = 0; i < n_samples; ++i) {
		const Vec2 q(0.9 * ball(rng), 0.9 * ball(rng));
		double g = 0;
		for (int k = 0; k < 2; ++k) {
			Vec2 e = Vec2::Zero();
			e(k) = h;
			g += std::abs(return_time(atlas, x, y, q + e) - return_time(atlas, x, y, q - e)) / (2 * h);
		}
		best = std::max(best, g);
	}
	return best;
}

LocalHyperbolicMap affine_map(const Mat2 &linear, const Vec2 &offset, const HyperbolicConstants &required)
{
	LocalHyperbolicMap m;
	m.linear = linear;
	m.required = required;
	m.f = [linear, offset](const Vec2 &q) -> Vec2 { return linear * q + offset; };
	m.jacobian = [linear](const Vec2 &) -> Mat2 { return linear; };
	return m;
}

LocalHyperbolicMap local_map(const FlowBoxAtlas &atlas, int x, int y)
{
	LocalHyperbolicMap m;
	m.required = atlas.hyper;
	m.f = [&atlas, x, y](const Vec2 &q) { return poincare_map_unchecked(atlas, x, y, q); };
	m.jacobian = [f = m.f](const Vec2 &q) {
		const double h = 1e-4;
		Mat2 j;
		for (int k = 0; k < 2; ++k) {
			Vec2 e = Vec2::Zero();
			e(k) = h;
			j.col(k) = (f(q + e) - f(q - e)) / (2 * h);
		}
		return j;
	};
	m.linear = m.jacobian(Vec2::Zero());
	return m;
}

const CertificateItem &HyperbolicCertificate::item(const std::string &name) const
{
	for (const auto &i : items)
		if (i.name == name) return i;
	throw std::out_of_range("certificate item not found: " + name);
}

HyperbolicCertificate certify_hyperbolic(const LocalHyperbolicMap &map, int n_samples, unsigned long long seed)
{
	const HyperbolicConstants &r = map.required;
	const Mat2 &a = map.linear;
	HyperbolicCertificate cert;
	auto add = [&](const std::string &name, double measured, double bound, bool pass) {
		cert.items.push_back({name, measured, bound, pass});
	};
	add("sigma_u", std::abs(a(0, 0)), r.sigma_u, std::abs(a(0, 0)) >= r.sigma_u);
	add("sigma_s", std::abs(a(1, 1)), r.sigma_s, std::abs(a(1, 1)) <= r.sigma_s);
	add("D_u", std::abs(a(0, 1)), r.eta, std::abs(a(0, 1)) <= r.eta);
	add("D_s", std::abs(a(1, 0)), r.eta, std::abs(a(1, 0)) <= r.eta);

	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> ball(-r.rho, r.rho);
	std::uniform_real_distribution<double> dir(-1.0, 1.0);
	const Vec2 f0 = map.f(Vec2::Zero());
	auto residual = [&](const Vec2 &q) -> Vec2 { return map.f(q) - a * q - f0; };
	double lip = 0;
	for (int i = 0; i < n_samples; ++i) {
		const Vec2 p(ball(rng), ball(rng));
		Vec2 q;
		if (i % 2 == 0) {
			q = p + 1e-3 * r.rho * Vec2(dir(rng), dir(rng));
		} else {
			q = Vec2(ball(rng), ball(rng));
		}
		const double d = adapted_norm(p - q);
		if (d <= 0) continue;
		lip = std::max(lip, adapted_norm(Vec2(residual(p) - residual(q))) / d);
	}
	add("lip_residual", lip, r.eta, lip <= r.eta);
	add("f0", adapted_norm(f0), r.eps_rho, adapted_norm(f0) <= r.eps_rho);
	cert.pass = true;
	for (const auto &i : cert.items) cert.pass = cert.pass && i.pass;
	return cert;
}

} // namespace wkam
