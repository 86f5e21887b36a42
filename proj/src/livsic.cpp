#include "wkam/livsic.hpp"

#include <algorithm>
#include <sstream>

namespace wkam {

namespace {

bool finite(const Vec3 &p) { return p.allFinite(); }

double uniform(std::mt19937_64 &rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

double log_uniform(std::mt19937_64 &rng, double a, double b)
{
	return std::exp(uniform(rng, std::log(a), std::log(b)));
}

Vec3 random_point(const SuspensionFlow &m, std::mt19937_64 &rng)
{
	return Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, m.roof()));
}

// Sum over segments of Lip |dz| dt / 4, the midpoint-rule error bound for a Lipschitz integrand,
// plus the rounding of the deviation term.
double quadrature_slack(const SuspensionFlow &m, const PathSample &p, double lip, double c)
{
	double s = 0;
	for (int k = 0; k + 1 < p.nodes(); ++k) {
		const double dt = p.times[k + 1] - p.times[k];
		const double len = std::max(dt, metric_norm(m.difference(p.points[k], p.points[k + 1])));
		s += lip * len * dt / 4 + 1e-15 * c * len;
	}
	return s;
}

double integral_slack(double lip, double len, double step) { return lip * std::abs(len) * step / 4; }

Observable centered(const Observable &phi, double phi_bar)
{
	Observable o = phi;
	o.evaluate = [f = phi.evaluate, phi_bar](const Vec3 &p) { return f(p) - phi_bar; };
	return o;
}

long sheet_of(const SuspensionFlow &m, const FlowBox &box, const Vec3 &p, double s)
{
	return std::lround((s + box.center(2) - m.normalize(p)(2)) / m.roof());
}

Mat2 inverse_power(const SuspensionFlow &m, long j)
{
	Mat2 r = Mat2::Identity();
	const Mat2 &step = j >= 0 ? m.base_inverse() : m.base_matrix();
	for (long i = 0; i < std::abs(j); ++i) r = step * r;
	return r;
}

// Reduces a chart displacement modulo the lattice of the box.
Vec2 reduce(const FlowBox &box, const Vec2 &d)
{
	Vec2 best = d;
	double best_n = adapted_norm(d);
	for (int a = -2; a <= 2; ++a)
		for (int b = -2; b <= 2; ++b) {
			const Vec2 e = d - box.to_adapted * Vec2(a, b);
			if (adapted_norm(e) < best_n) {
				best_n = adapted_norm(e);
				best = e;
			}
		}
	return best;
}

} // namespace

double PathSample::max_step() const
{
	double h = 0;
	for (size_t k = 1; k < times.size(); ++k) h = std::max(h, times[k] - times[k - 1]);
	return h;
}

void PathSample::validate(const SuspensionFlow &model) const
{
	if (times.size() != points.size()) throw PathDomainError("path: times and points differ in length");
	if (points.size() < 2) throw PathDomainError("path: at least two nodes are required");
	for (size_t k = 0; k < points.size(); ++k) {
		if (!finite(points[k]) || !std::isfinite(times[k])) throw PathDomainError("path: non-finite node");
		const Vec3 n = model.normalize(points[k]);
		if (model.distance(n, points[k]) > 1e-9) throw PathDomainError("path: node outside the fundamental domain");
		if (k > 0 && !(times[k] > times[k - 1])) throw PathDomainError("path: times must increase strictly");
	}
}

void PathSample::append(const PathSample &other)
{
	if (other.points.empty()) return;
	if (points.empty()) {
		*this = other;
		return;
	}
	if (other.times.front() != times.back()) throw PathDomainError("path append: times do not join");
	for (size_t k = 1; k < other.points.size(); ++k) {
		times.push_back(other.times[k]);
		points.push_back(other.points[k]);
	}
}

PathSample orbit_path(const SuspensionFlow &model, const Vec3 &x, double t, double step)
{
	if (!(t > 0) || !(step > 0)) throw PathDomainError("orbit_path: t and step must be positive");
	const long n = std::max<long>(1, static_cast<long>(std::ceil(t / step - 1e-9)));
	PathSample p;
	const Vec3 start = model.normalize(x);
	for (long k = 0; k <= n; ++k) {
		const double s = t * static_cast<double>(k) / static_cast<double>(n);
		p.times.push_back(s);
		p.points.push_back(model.flow(start, s));
	}
	return p;
}

double weighted_action(const SuspensionFlow &model, const PathSample &path, const Observable &phi, double c,
					   double phi_bar)
{
	path.validate(model);
	double sum = 0;
	for (int k = 0; k + 1 < path.nodes(); ++k) {
		const double dt = path.times[k + 1] - path.times[k];
		const Vec3 d = model.difference(path.points[k], path.points[k + 1]);
		const Vec3 mid = model.displace(path.points[k], 0.5 * d);
		sum += dt * (phi(mid) - phi_bar) + c * metric_norm(Vec3(dt * model.velocity(mid) - d));
	}
	return sum;
}

LivsicConstants compute_constants(const ConstantInputs &in)
{
	if (!(in.tau > 0) || !(in.eps > 0) || !(in.lip_gamma >= 1) || !(in.n_gamma >= 1) || !(in.k_tilde > 0) ||
		!(in.lip_phi >= 0) || !(in.diam_omega >= 0))
		throw std::invalid_argument("compute_constants: inputs out of range");
	LivsicConstants k;
	const double t = in.tau, e = in.eps, lf = in.lip_phi, lg = in.lip_gamma, d1 = 1 + in.diam_omega;
	const double n = in.n_gamma, kt = in.k_tilde;
	k.tau = t;
	k.eps = e;
	k.lip_phi = lf;
	k.lip_gamma = lg;
	k.diam_omega = in.diam_omega;
	k.n_gamma = n;
	k.k_gamma = kt;
	k.c1 = 6 * (1 + t) * lf * lg * lg * d1;
	k.a_star = 9 * t * (1 + t) * lf * lg * d1 * n;
	k.c2 = std::max(32 * (t / e) * (1 + t) * lf * lg * lg * d1, 4 * (k.a_star / e) * lg);
	k.c3 = 12 * std::sqrt(2.0) * (1 + t) * kt * lf * std::pow(lg, 4) * d1;
	k.c_lambda_distortion = 36 * (t / e) * (1 + t) * kt * std::pow(lg, 4) * d1 * n;
	k.c4 = k.c_lambda_distortion * lf;
	k.delta_lambda = 8 * t * (1 + t) * lg * d1;
	return k;
}

LivsicConstants compute_constants(const FlowBoxAtlas &atlas, const Observable &phi, double k_tilde)
{
	ConstantInputs in;
	in.tau = atlas.tau;
	in.eps = atlas.eps;
	in.lip_phi = phi.lipschitz_constant;
	in.lip_gamma = atlas.lip_gamma;
	in.diam_omega = atlas.diam_omega;
	in.n_gamma = atlas.n_gamma;
	in.k_tilde = k_tilde;
	return compute_constants(in);
}

std::string to_string(SegmentKind kind)
{
	switch (kind) {
	case SegmentKind::pseudo: return "pseudo";
	case SegmentKind::escaped: return "escaped";
	case SegmentKind::trapped: return "trapped";
	}
	return "?";
}

std::string to_string(PathFamily family)
{
	switch (family) {
	case PathFamily::flow: return "flow";
	case PathFamily::antiflow: return "antiflow";
	case PathFamily::biased_walk: return "biased_walk";
	case PathFamily::boundary_hugging: return "boundary_hugging";
	case PathFamily::pseudo_orbit: return "pseudo_orbit";
	}
	return "?";
}

SegmentClassification classify_segment(const PathSample &path, const FlowBoxAtlas &atlas, const Observable &phi,
									   double phi_bar, double c, const LivsicConstants &constants, int box)
{
	const SuspensionFlow &m = atlas.model;
	path.validate(m);
	const double eps = atlas.eps, tau = atlas.tau;
	const Vec3 z0 = path.points[0];
	ChartCoords c0;
	if (box < 0) {
		double r;
		box = locate_box(atlas, z0, &r, &c0);
		if (box < 0 || !(r < eps)) {
			std::ostringstream os;
			os << "path start (" << z0.transpose() << ") lies in no U_x(eps): nearest radius " << r;
			throw UncoveredStartError(os.str(), z0);
		}
	} else {
		c0 = chart_inverse(m, atlas.boxes.at(box), z0, 0.0);
		if (!(std::abs(c0.s) < eps && adapted_norm(c0.u) < eps))
			throw UncoveredStartError("path start lies outside U_x(eps) of the requested box", z0);
	}
	const FlowBox &bx = atlas.boxes[box];

	SegmentClassification out;
	out.box = box;
	out.start_coords = c0;
	auto inside = [&](const ChartCoords &q) { return q.s > -2 * eps && q.s < tau && adapted_norm(q.u) < 2 * eps; };

	ChartCoords cur = c0;
	int exit_node = -1;
	double lambda = 1;
	int face = 0;
	for (int k = 0; k + 1 < path.nodes(); ++k) {
		const Vec3 d = m.difference(path.points[k], path.points[k + 1]);
		const long j = sheet_of(m, bx, path.points[k], cur.s);
		ChartCoords next;
		next.s = cur.s + d(2);
		next.u = cur.u + bx.to_adapted * (inverse_power(m, j) * d.head<2>());
		if (!inside(next)) {
			double best = std::numeric_limits<double>::infinity();
			double l_fwd = std::numeric_limits<double>::infinity();
			if (next.s >= tau) l_fwd = (tau - cur.s) / (next.s - cur.s);
			if (next.s <= -2 * eps) best = std::min(best, (-2 * eps - cur.s) / (next.s - cur.s));
			for (int i = 0; i < 2; ++i)
				if (std::abs(next.u(i)) >= 2 * eps) {
					const double target = next.u(i) > 0 ? 2 * eps : -2 * eps;
					best = std::min(best, (target - cur.u(i)) / (next.u(i) - cur.u(i)));
				}
			face = l_fwd < best ? 1 : -1;
			lambda = std::clamp(std::min(l_fwd, best), 0.0, 1.0);
			exit_node = k;
			cur.s += lambda * (next.s - cur.s);
			cur.u += lambda * (next.u - cur.u);
			break;
		}
		cur = next;
	}

	if (exit_node < 0) {
		out.kind = SegmentKind::trapped;
		out.segment = path;
		out.end_coords = cur;
		out.exit_time = path.times.back();
	} else {
		out.exit_face = face;
		out.kind = face > 0 ? SegmentKind::pseudo : SegmentKind::escaped;
		const Vec3 d = m.difference(path.points[exit_node], path.points[exit_node + 1]);
		const Vec3 exit_point = m.displace(path.points[exit_node], lambda * d);
		const double t_exit = path.times[exit_node] + lambda * (path.times[exit_node + 1] - path.times[exit_node]);
		out.exit_time = t_exit;
		for (int k = 0; k <= exit_node; ++k) {
			out.segment.times.push_back(path.times[k]);
			out.segment.points.push_back(path.points[k]);
		}
		if (t_exit > out.segment.times.back()) {
			out.segment.times.push_back(t_exit);
			out.segment.points.push_back(exit_point);
		}
		out.end_coords = cur;
	}

	if (out.segment.nodes() < 2) {
		// Exit at the first node: a zero-length segment.
		out.action = 0;
	} else {
		out.action = weighted_action(m, out.segment, phi, c, phi_bar);
	}
	const double lip = phi.lipschitz_constant;
	double tol = 1e-9 * (1 + std::abs(out.action));
	if (out.segment.nodes() >= 2) tol += quadrature_slack(m, out.segment, lip, c);

	const double d1 = 1 + atlas.diam_omega;
	switch (out.kind) {
	case SegmentKind::escaped: out.lower_bound = constants.a_star; break;
	case SegmentKind::trapped: out.lower_bound = -8 * tau * (1 + tau) * lip * atlas.lip_gamma * d1; break;
	case SegmentKind::pseudo: {
		const Vec3 zt = out.segment.points.back();
		double r;
		ChartCoords cy;
		out.target_box = locate_box(atlas, zt, &r, &cy);
		out.target_within_eps = r < eps;
		const FlowBox &by = atlas.boxes[out.target_box];
		out.end_coords = cy;
		const Observable f = centered(phi, phi_bar);
		const double step = std::min(0.005, std::max(1e-4, path.max_step()));
		const double rx = c0.s - bx.tilt.dot(c0.u);
		const double ry = cy.s - by.tilt.dot(cy.u);
		const Vec3 base_x = m.flow(z0, -rx);
		try {
			const double t_ret = return_time(atlas, box, out.target_box, c0.u);
			out.target_admissible = forward_admissible(atlas, box, out.target_box).admissible;
			out.phi_xy = birkhoff_integral(m, f, base_x, t_ret, step);
			out.psi_x = birkhoff_integral(m, f, base_x, rx, step);
			out.psi_y = birkhoff_integral(m, f, m.flow(zt, -ry), ry, step);
			const Vec2 image = poincare_map_unchecked(atlas, box, out.target_box, c0.u);
			out.shadow_term = c / (std::sqrt(8.0) * std::pow(atlas.lip_gamma, 3)) * adapted_norm(reduce(by, image - cy.u));
			out.lower_bound = out.phi_xy + out.psi_y - out.psi_x + out.shadow_term;
			tol += integral_slack(lip, t_ret, step) + integral_slack(lip, rx, step) + integral_slack(lip, ry, step);
		} catch (const NoIntersectionError &) {
			out.lower_bound = std::numeric_limits<double>::quiet_NaN();
		}
		break;
	}
	}
	out.bound_holds = out.action >= out.lower_bound - tol;
	return out;
}

PathDecomposition decompose_path(const PathSample &path, const FlowBoxAtlas &atlas, const Observable &phi,
								 double phi_bar, double c, const LivsicConstants &constants, int max_segments)
{
	const SuspensionFlow &m = atlas.model;
	path.validate(m);
	PathDecomposition out;
	PathSample rest = path;
	while (true) {
		if (static_cast<int>(out.segments.size()) >= max_segments)
			throw std::runtime_error("decompose_path: segment limit reached");
		SegmentClassification seg = classify_segment(rest, atlas, phi, phi_bar, c, constants);
		out.cutting_boxes.push_back(seg.box);
		out.cutting_times.push_back(rest.times.front());
		const bool trapped = seg.kind == SegmentKind::trapped;
		const double t_exit = seg.exit_time;
		const Vec3 exit_point = seg.segment.points.back();
		out.segments.push_back(std::move(seg));
		if (trapped) break;
		PathSample next;
		next.times.push_back(t_exit);
		next.points.push_back(exit_point);
		for (int k = 0; k < rest.nodes(); ++k)
			if (rest.times[k] > t_exit) {
				next.times.push_back(rest.times[k]);
				next.points.push_back(rest.points[k]);
			}
		if (next.nodes() < 2) break;
		rest = std::move(next);
	}

	const double lip = phi.lipschitz_constant;
	auto close_block = [&](BlockType type, int first, int last, double lower) {
		PathBlock b;
		b.type = type;
		b.first_segment = first;
		b.last_segment = last;
		double slack = 1e-9;
		for (int i = first; i <= last; ++i) {
			b.action += out.segments[i].action;
			if (out.segments[i].segment.nodes() >= 2) slack += quadrature_slack(m, out.segments[i].segment, lip, c);
		}
		b.lower_bound = lower;
		b.bound_holds = b.action >= lower - slack - 1e-9 * std::abs(b.action);
		out.blocks.push_back(b);
	};
	int run_start = 0;
	const int n = static_cast<int>(out.segments.size());
	for (int i = 0; i < n; ++i) {
		const SegmentKind k = out.segments[i].kind;
		if (k == SegmentKind::pseudo) continue;
		if (k == SegmentKind::escaped)
			close_block(i == run_start ? BlockType::escaped : BlockType::pseudo_then_escaped, run_start, i,
						i == run_start ? constants.a_star : 0.0);
		else
			close_block(BlockType::terminal, run_start, i, -constants.delta_lambda * lip);
		run_start = i + 1;
	}
	if (run_start < n) close_block(BlockType::terminal, run_start, n - 1, -constants.delta_lambda * lip);

	out.all_bounds_hold = true;
	for (const auto &s : out.segments) out.all_bounds_hold = out.all_bounds_hold && s.bound_holds;
	for (const auto &b : out.blocks) out.all_bounds_hold = out.all_bounds_hold && b.bound_holds;
	return out;
}

Factorization factor_pseudo_orbit(const std::vector<int> &x)
{
	const int n = static_cast<int>(x.size()) - 1;
	if (n < 1) throw std::invalid_argument("factor_pseudo_orbit: need at least two cutting points");
	Factorization f;
	f.indices.push_back(0);
	int i = 0;
	while (i < n) {
		int last = -1;
		for (int m = n; m > i; --m)
			if (x[m] == x[i]) {
				last = m;
				break;
			}
		const int next = last < 0 ? i + 1 : (last < n ? last + 1 : n);
		f.indices.push_back(next);
		i = next;
	}
	return f;
}

bool factorization_valid(const std::vector<int> &x, const Factorization &f, bool relaxed_terminal)
{
	const int n = static_cast<int>(x.size()) - 1;
	const auto &idx = f.indices;
	const int r = f.r();
	if (n < 1 || r < 1 || idx.front() != 0 || idx.back() != n) return false;
	for (int k = 1; k <= r; ++k)
		if (idx[k] <= idx[k - 1]) return false;
	for (int a = 0; a < r; ++a)
		for (int b = a + 1; b < r; ++b)
			if (x[idx[a]] == x[idx[b]]) return false;
	for (int k = 1; k < r; ++k)
		if (idx[k] > idx[k - 1] + 1 && x[idx[k] - 1] != x[idx[k - 1]]) return false;
	if (idx[r] > idx[r - 1] + 1) {
		const bool printed = x[idx[r]] == x[idx[r - 1]];
		const bool relaxed = relaxed_terminal && x[idx[r] - 1] == x[idx[r - 1]];
		if (!printed && !relaxed) return false;
	}
	return true;
}

std::vector<Factorization> all_factorizations(const std::vector<int> &x, bool relaxed_terminal)
{
	const int n = static_cast<int>(x.size()) - 1;
	if (n < 1 || n > 24) throw std::invalid_argument("all_factorizations: length out of range");
	std::vector<Factorization> out;
	for (unsigned long mask = 0; mask < (1ul << (n - 1)); ++mask) {
		Factorization f;
		f.indices.push_back(0);
		for (int i = 1; i < n; ++i)
			if (mask & (1ul << (i - 1))) f.indices.push_back(i);
		f.indices.push_back(n);
		if (factorization_valid(x, f, relaxed_terminal)) out.push_back(std::move(f));
	}
	return out;
}

namespace {

PathSample chart_path(const FlowBoxAtlas &atlas, int box, const std::vector<ChartCoords> &nodes, double step)
{
	PathSample p;
	for (size_t k = 0; k < nodes.size(); ++k) {
		p.times.push_back(step * static_cast<double>(k));
		p.points.push_back(chart(atlas.model, atlas.boxes[box], nodes[k].s, nodes[k].u));
	}
	return p;
}

// Box at (base, level) from the regular net used by build_atlas, or -1.
int find_box(const FlowBoxAtlas &atlas, const Vec2 &base, double level)
{
	for (size_t i = 0; i < atlas.boxes.size(); ++i) {
		const Vec3 &c = atlas.boxes[i].center;
		if (min_image(Vec2(c.head<2>() - base)).norm() < 1e-9 && std::abs(c(2) - level) < 1e-9)
			return static_cast<int>(i);
	}
	return -1;
}

GeneratedPath periodic_pseudo_path(const FlowBoxAtlas &atlas, std::mt19937_64 &rng, const PathGeneratorOptions &o)
{
	const SuspensionFlow &m = atlas.model;
	GeneratedPath g;
	g.family = PathFamily::pseudo_orbit;
	const double per_roof = m.roof() / atlas.tau;
	const int sections = static_cast<int>(std::lround(per_roof));
	std::vector<std::vector<int>> cycles;
	if (std::abs(per_roof - sections) < 1e-9)
		for (const auto &orbit : periodic_orbits(m, 2)) {
			std::vector<int> cyc;
			for (const auto &b : orbit.points)
				for (int k = 0; k < sections; ++k) cyc.push_back(find_box(atlas, b, k * atlas.tau));
			if (std::find(cyc.begin(), cyc.end(), -1) == cyc.end()) cycles.push_back(cyc);
		}
	std::vector<int> chain;
	if (!cycles.empty()) {
		const auto &cyc = cycles[std::uniform_int_distribution<size_t>(0, cycles.size() - 1)(rng)];
		const int reps = std::uniform_int_distribution<int>(1, std::max(1, o.max_pseudo_steps / static_cast<int>(cyc.size())))(rng);
		for (int r = 0; r < reps; ++r) chain.insert(chain.end(), cyc.begin(), cyc.end());
		chain.push_back(chain.front());
		g.periodic_pseudo = true;
	}
	if (chain.empty()) {
		// No periodic chain on this net: a generic spliced orbit.
		const int steps = std::uniform_int_distribution<int>(1, o.max_pseudo_steps)(rng);
		Vec3 z = random_point(m, rng);
		PathSample p;
		p.times.push_back(0);
		p.points.push_back(z);
		for (int i = 0; i < steps; ++i) {
			PathSample piece = orbit_path(m, p.points.back(), atlas.tau, o.step);
			for (auto &t : piece.times) t += p.times.back();
			const double jump = log_uniform(rng, 1e-12, o.max_jump);
			piece.points.back() = m.displace(piece.points.back(),
											 Vec3(uniform(rng, -jump, jump), uniform(rng, -jump, jump), 0));
			p.append(piece);
		}
		g.path = p;
		return g;
	}
	std::vector<Vec2> q(chain.size());
	for (size_t i = 0; i + 1 < chain.size(); ++i) {
		const double jump = log_uniform(rng, 1e-12, o.max_jump);
		q[i] = Vec2(uniform(rng, -jump, jump), uniform(rng, -jump, jump));
	}
	q.back() = q.front();
	PathSample p;
	p.times.push_back(0);
	p.points.push_back(chart(m, atlas.boxes[chain[0]], 0, q[0]));
	for (size_t i = 0; i + 1 < chain.size(); ++i) {
		const double t_ret = return_time(atlas, chain[i], chain[i + 1], q[i]);
		PathSample piece = orbit_path(m, p.points.back(), t_ret, o.step);
		for (auto &t : piece.times) t += p.times.back();
		piece.points.back() = chart(m, atlas.boxes[chain[i + 1]], 0, q[i + 1]);
		p.append(piece);
	}
	g.path = p;
	return g;
}

GeneratedPath hugging_path(const FlowBoxAtlas &atlas, std::mt19937_64 &rng, const PathGeneratorOptions &o)
{
	const SuspensionFlow &m = atlas.model;
	const double eps = atlas.eps, tau = atlas.tau;
	GeneratedPath g;
	g.family = PathFamily::boundary_hugging;
	double r;
	ChartCoords c0;
	Vec3 z0;
	int box;
	do {
		z0 = random_point(m, rng);
		box = locate_box(atlas, z0, &r, &c0);
	} while (!(r < eps));
	const int axis = std::uniform_int_distribution<int>(0, 1)(rng);
	const double sign = uniform(rng, 0, 1) < 0.5 ? -1 : 1;
	const double delta = log_uniform(rng, 1e-6, 1e-2);
	const int variant = std::uniform_int_distribution<int>(0, 2)(rng);
	const double dt = o.step;
	std::vector<ChartCoords> nodes{c0};
	// Drift to the side face, just inside.
	ChartCoords target = c0;
	target.u(axis) = sign * 2 * eps * (1 - delta);
	target.u(1 - axis) = std::clamp(target.u(1 - axis), -2 * eps * (1 - delta), 2 * eps * (1 - delta));
	const int n_drift = 5;
	for (int k = 1; k <= n_drift; ++k) {
		ChartCoords c;
		c.s = c0.s + k * dt;
		c.u = c0.u + (target.u - c0.u) * (static_cast<double>(k) / n_drift);
		nodes.push_back(c);
	}
	const double s_stop = variant == 2 ? tau - 0.25 * (tau - nodes.back().s) : tau + dt;
	int wiggle = 0;
	while (nodes.back().s + dt < s_stop + 0.5 * dt) {
		ChartCoords c = nodes.back();
		c.s += dt;
		if (variant == 1) c.u(axis) = sign * 2 * eps * (1 + (wiggle++ % 2 == 0 ? 1 : -1) * delta);
		nodes.push_back(c);
	}
	g.path = chart_path(atlas, box, nodes, dt);
	return g;
}

} // namespace

GeneratedPath generate_path(const FlowBoxAtlas &atlas, PathFamily family, std::mt19937_64 &rng,
							const PathGeneratorOptions &o)
{
	const SuspensionFlow &m = atlas.model;
	GeneratedPath g;
	g.family = family;
	const double len = uniform(rng, o.min_length, o.max_length);
	switch (family) {
	case PathFamily::flow: g.path = orbit_path(m, random_point(m, rng), len, o.step); break;
	case PathFamily::antiflow: {
		const PathSample fwd = orbit_path(m, random_point(m, rng), len, o.step);
		for (int k = fwd.nodes() - 1; k >= 0; --k) {
			g.path.times.push_back(fwd.times.back() - fwd.times[k]);
			g.path.points.push_back(fwd.points[k]);
		}
		break;
	}
	case PathFamily::biased_walk: {
		const double sigma = log_uniform(rng, 1e-4, 1.0);
		const long n = std::max<long>(1, static_cast<long>(std::ceil(len / o.step)));
		const double dt = len / static_cast<double>(n);
		g.path.times.push_back(0);
		g.path.points.push_back(random_point(m, rng));
		for (long k = 0; k < n; ++k) {
			const Vec3 xi(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
			const Vec3 d = dt * (m.velocity(g.path.points.back()) + sigma * xi);
			g.path.times.push_back(dt * static_cast<double>(k + 1));
			g.path.points.push_back(m.displace(g.path.points.back(), d));
		}
		break;
	}
	case PathFamily::boundary_hugging: return hugging_path(atlas, rng, o);
	case PathFamily::pseudo_orbit: return periodic_pseudo_path(atlas, rng, o);
	}
	return g;
}

ScanReport livsic_lower_bound_scan(const FlowBoxAtlas &atlas, const Observable &phi, double phi_bar,
								   const LivsicConstants &constants, double c, int n_paths, unsigned long long seed,
								   const PathGeneratorOptions &options, bool certify)
{
	const SuspensionFlow &m = atlas.model;
	ScanReport rep;
	rep.n_paths = n_paths;
	rep.c = c;
	rep.guaranteed = c >= constants.c1;
	const double lip = phi.lipschitz_constant;
	rep.bound = -constants.delta_lambda * lip;
	rep.periodic_bound = -2 * atlas.eps * lip * atlas.diam_omega;
	rep.min_action = std::numeric_limits<double>::infinity();
	rep.periodic_min_action = std::numeric_limits<double>::infinity();
	const int n_fam = 5;
	rep.family_counts.assign(n_fam, 0);
	rep.family_min.assign(n_fam, std::numeric_limits<double>::infinity());
	std::mt19937_64 rng(seed);
	for (int i = 0; i < n_paths; ++i) {
		const auto family = static_cast<PathFamily>(i % n_fam);
		const GeneratedPath g = generate_path(atlas, family, rng, options);
		const double a = weighted_action(m, g.path, phi, c, phi_bar);
		const double tol = 1e-9 * (1 + std::abs(a)) + quadrature_slack(m, g.path, lip, c);
		rep.min_action = std::min(rep.min_action, a);
		rep.family_counts[i % n_fam]++;
		rep.family_min[i % n_fam] = std::min(rep.family_min[i % n_fam], a);
		if (a < rep.bound - tol) rep.violations++;
		if (g.periodic_pseudo) {
			rep.periodic_paths++;
			rep.periodic_min_action = std::min(rep.periodic_min_action, a);
			if (a < rep.periodic_bound - tol) rep.periodic_violations++;
		}
		if (certify) {
			try {
				if (!decompose_path(g.path, atlas, phi, phi_bar, c, constants).all_bounds_hold)
					rep.certificate_failures++;
			} catch (const std::exception &) {
				rep.decomposition_errors++;
			}
		}
	}
	rep.margin = rep.min_action - rep.bound;
	rep.pass = rep.guaranteed && rep.violations == 0 && rep.periodic_violations == 0 && rep.certificate_failures == 0 &&
			   rep.decomposition_errors == 0;
	return rep;
}

} // namespace wkam
