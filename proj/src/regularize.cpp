#include "wkam/regularize.hpp"
#include "wkam/detail/parallel.hpp"
#include "wkam/livsic.hpp"

#include <random>
#include <sstream>

namespace wkam {

namespace {

long long mod_pos(long long a, long long m)
{
	const long long r = a % m;
	return r < 0 ? r + m : r;
}

// One grid column through the chart of a box, from chart time t0 in (-eps - ds, -eps] to past tau + eps.
struct Fiber {
	std::vector<int> nodes;
	Vec2 q = Vec2::Zero();
	double alpha = 0;
};

struct FiberLayout {
	int k0 = 0;
	int k_level = 0;
	int k_tau = 0;
	double t0 = 0;
	int steps = 0;
};

FiberLayout layout(const Grid &g, const RegularizerSpec &spec, double t_lo, double t_hi)
{
	const double ds = g.ds();
	FiberLayout l;
	l.k_level = static_cast<int>(std::lround(spec.box.center(2) / ds));
	l.k_tau = static_cast<int>(std::lround(spec.tau() / ds));
	l.k0 = l.k_level + static_cast<int>(std::floor(t_lo / ds + 1e-9));
	l.t0 = (l.k0 - l.k_level) * ds;
	l.steps = static_cast<int>(std::ceil((t_hi - l.t0) / ds - 1e-9));
	return l;
}

// Columns of the grid whose transverse chart coordinate has max-component below radius.
std::vector<Fiber> fibers(const Grid &g, const RegularizerSpec &spec, const FiberLayout &l, double radius)
{
	const SuspensionFlow &m = g.model();
	const int layer = static_cast<int>(mod_pos(l.k0, g.ns()));
	std::vector<Fiber> out;
	for (int j = 0; j < g.n(); ++j)
		for (int i = 0; i < g.n(); ++i) {
			const int idx0 = g.index(i, j, layer);
			const ChartCoords c = chart_inverse(m, spec.box, g.point(idx0), l.t0);
			if (!(adapted_norm(c.u) < radius)) continue;
			Fiber f;
			f.q = c.u;
			f.alpha = spec.bumps.alpha(c.u);
			f.nodes.reserve(l.steps + 1);
			int idx = idx0;
			f.nodes.push_back(idx);
			for (int s = 0; s < l.steps; ++s) {
				idx = g.next_level(idx);
				f.nodes.push_back(idx);
			}
			out.push_back(std::move(f));
		}
	return out;
}

// (phi - phi_bar) at the midpoint of the flow edge ending at each node.
Eigen::VectorXd edge_integrand(const Grid &g, const Observable &phi, double phi_bar)
{
	const SuspensionFlow &m = g.model();
	Eigen::VectorXd r(g.size());
	for (int idx = 0; idx < g.size(); ++idx) r(idx) = phi(m.flow(g.point(g.prev_level(idx)), 0.5 * g.ds())) - phi_bar;
	return r;
}

double scale_of(const Eigen::VectorXd &v) { return 1 + v.cwiseAbs().maxCoeff(); }

std::string node_text(const Grid &g, int idx)
{
	std::ostringstream os;
	const Vec3 p = g.point(idx);
	os << "node " << idx << " (" << p(0) << ", " << p(1) << ", " << p(2) << ")";
	return os.str();
}

} // namespace

double smoothstep5(double x)
{
	if (x <= 0) return 0;
	if (x >= 1) return 1;
	return x * x * x * (10 + x * (-15 + 6 * x));
}

double smoothstep5_prime(double x)
{
	if (x <= 0 || x >= 1) return 0;
	return 30 * x * x * (1 - x) * (1 - x);
}

double BumpPair::alpha(const Vec2 &q) const
{
	auto a = [&](double r) { return 1 - smoothstep5((std::abs(r) - eps) / (width * eps)); };
	return alpha_scale * a(q(0)) * a(q(1));
}

double BumpPair::beta(double t) const
{
	const double w = width * eps;
	if (t <= tau) return smoothstep5((t + w) / w);
	return 1 - smoothstep5((t - tau) / w);
}

double BumpPair::beta_prime(double t) const
{
	const double w = width * eps;
	if (t <= tau) return smoothstep5_prime((t + w) / w) / w;
	return -smoothstep5_prime((t - tau) / w) / w;
}

bool RegularizerSpec::in_d(const ChartCoords &c) const
{
	return c.s > 0 && c.s < tau() && adapted_norm(c.u) < eps();
}

bool RegularizerSpec::in_d_prime(const ChartCoords &c) const
{
	return c.s > -eps() && c.s < tau() + eps() && adapted_norm(c.u) < 2 * eps();
}

bool RegularizerSpec::in_d_second(const ChartCoords &c) const
{
	return c.s > -2 * eps() && c.s < tau() + 2 * eps() && adapted_norm(c.u) < 3 * eps();
}

std::vector<RegularizerSpec> build_cover(const Grid &grid, const Observable &phi, const CoverOptions &o)
{
	const SuspensionFlow &m = grid.model();
	const double ds = grid.ds();
	const int n_levels = static_cast<int>(std::lround(m.roof() / o.tau));
	if (!(o.tau > 0) || std::abs(n_levels * o.tau - m.roof()) > 1e-9 * m.roof())
		throw std::invalid_argument("build_cover: tau must divide the roof");
	if (std::abs(std::lround(o.tau / ds) * ds - o.tau) > 1e-9 * o.tau)
		throw std::invalid_argument("build_cover: tau must be a multiple of the grid step ds");
	if (!(o.eps > 0) || !(o.eps < o.tau / 2)) throw std::invalid_argument("build_cover: need 0 < eps < tau/2");
	const double slack =
		std::isnan(o.subaction_slack) ? phi.lipschitz_constant * ds * ds / 4 + 1e-9 : o.subaction_slack;

	std::vector<RegularizerSpec> cover;
	for (int lv = 0; lv < n_levels; ++lv) {
		const double level = lv * o.tau;
		bool done = false;
		for (int net = 2; net <= o.max_net && !done; ++net) {
			std::vector<FlowBox> boxes;
			for (int j = 0; j < net; ++j)
				for (int i = 0; i < net; ++i)
					boxes.push_back(make_box(m, Vec3(static_cast<double>(i) / net, static_cast<double>(j) / net, level)));
			bool covered = true;
			for (int j = 0; j < grid.n() && covered; ++j)
				for (int i = 0; i < grid.n() && covered; ++i) {
					const Vec2 b(static_cast<double>(i) / grid.n(), static_cast<double>(j) / grid.n());
					bool hit = false;
					for (const auto &bx : boxes) {
						const Vec2 d = min_image(Vec2(b - bx.center.head<2>()));
						for (int a = -1; a <= 1 && !hit; ++a)
							for (int c = -1; c <= 1 && !hit; ++c)
								hit = adapted_norm(Vec2(bx.to_adapted * (d + Vec2(a, c)))) <= o.eps;
						if (hit) break;
					}
					covered = hit;
				}
			if (!covered) continue;
			for (auto &bx : boxes) {
				RegularizerSpec s;
				s.index = static_cast<int>(cover.size());
				s.box = bx;
				s.bumps.eps = o.eps;
				s.bumps.tau = o.tau;
				s.fd_step = ds;
				s.subaction_slack = slack;
				cover.push_back(s);
			}
			done = true;
		}
		if (!done) throw std::runtime_error("build_cover: no base net up to max_net covers the grid");
	}
	return cover;
}

double subaction_excess(const GridFunction &u, const Observable &phi, double phi_bar, int *node)
{
	const Grid &g = u.grid;
	const Eigen::VectorXd f = edge_integrand(g, phi, phi_bar);
	double worst = -std::numeric_limits<double>::infinity();
	int at = -1;
	for (int idx = 0; idx < g.size(); ++idx) {
		const double e = u.values(idx) - u.values(g.prev_level(idx)) - g.ds() * f(idx);
		if (e > worst) {
			worst = e;
			at = idx;
		}
	}
	if (node) *node = at;
	return worst;
}

GridFunction regularize_once(const GridFunction &u, const RegularizerSpec &spec, const Observable &phi, double phi_bar,
							 int threads)
{
	const Grid &g = u.grid;
	const SuspensionFlow &m = g.model();
	const double ds = g.ds();
	if (std::abs(spec.fd_step - ds) > 1e-12) throw std::invalid_argument("regularize_once: fd_step must equal ds");
	const double eps = spec.eps(), tau = spec.tau();
	const FiberLayout l = layout(g, spec, -eps, tau + eps);
	const std::vector<Fiber> fib = fibers(g, spec, l, spec.bumps.alpha_support());

	GridFunction v = u;
	std::vector<double> worst(fib.size(), -std::numeric_limits<double>::infinity());
	std::vector<int> worst_node(fib.size(), -1);
	detail::parallel_for(static_cast<int>(fib.size()), threads, [&](int begin, int end) {
		std::vector<double> s_acc(l.steps + 1), b_acc(l.steps + 1);
		for (int f = begin; f < end; ++f) {
			const Fiber &fb = fib[f];
			if (fb.alpha == 0) continue;
			s_acc[0] = 0;
			b_acc[0] = 0;
			for (int k = 1; k <= l.steps; ++k) {
				const int a = fb.nodes[k - 1], b = fb.nodes[k];
				const double du = u.values(b) - u.values(a);
				const double integral = ds * (phi(m.flow(g.point(a), 0.5 * ds)) - phi_bar);
				if (du - integral > worst[f]) {
					worst[f] = du - integral;
					worst_node[f] = b;
				}
				const double beta = spec.bumps.beta(l.t0 + (k - 0.5) * ds);
				s_acc[k] = s_acc[k - 1] + beta * (integral - du);
				b_acc[k] = b_acc[k - 1] + beta * ds;
			}
			const double mean = s_acc[l.steps] / b_acc[l.steps];
			for (int k = 0; k <= l.steps; ++k) {
				const double t = l.t0 + k * ds;
				if (!(t > -eps && t < tau + eps)) continue;
				const int node = fb.nodes[k];
				v.values(node) = u.values(node) + fb.alpha * (s_acc[k] - b_acc[k] * mean);
			}
		}
	});
	for (size_t f = 0; f < fib.size(); ++f)
		if (worst[f] > spec.subaction_slack) {
			size_t w = f;
			for (size_t h = 0; h < fib.size(); ++h)
				if (worst[h] > worst[w]) w = h;
			std::ostringstream os;
			os << "regularize_once: input is not an integrated subaction within slack " << spec.subaction_slack
			   << " on box " << spec.index << "; worst excess " << worst[w] << " at " << node_text(g, worst_node[w]);
			throw PreconditionError(os.str(), worst_node[w], worst[w]);
		}
	return v;
}

SubactionCertificate regularize_all(const GridFunction &u0, const std::vector<RegularizerSpec> &cover,
									const Observable &phi, double phi_bar, int threads)
{
	const Grid &g = u0.grid;
	const double ds = g.ds();
	if (cover.empty()) throw std::invalid_argument("regularize_all: empty cover");
	std::vector<const RegularizerSpec *> order;
	for (const auto &s : cover) order.push_back(&s);
	std::stable_sort(order.begin(), order.end(), [](auto *a, auto *b) { return a->index < b->index; });

	int bad_node;
	const double excess = subaction_excess(u0, phi, phi_bar, &bad_node);
	double allowed = 0;
	for (const auto *s : order) allowed = std::max(allowed, s->subaction_slack);
	if (excess > allowed) {
		std::ostringstream os;
		os << "regularize_all: input is not an integrated subaction within slack " << allowed << "; worst excess "
		   << excess << " at " << node_text(g, bad_node);
		throw PreconditionError(os.str(), bad_node, excess);
	}

	// Plateau masks (backward edge inside D with alpha = beta = 1) and D'' masks, per box.
	std::vector<std::vector<int>> plateau(order.size()), outer(order.size());
	std::vector<char> covered(g.size(), 0), in_outer(g.size(), 0);
	for (size_t b = 0; b < order.size(); ++b) {
		const RegularizerSpec &s = *order[b];
		const FiberLayout lp = layout(g, s, 0.0, s.tau());
		for (const auto &f : fibers(g, s, lp, s.eps() * (1 + 1e-12)))
			for (int k = 1; k <= lp.steps; ++k) {
				const int kk = lp.k0 + k;
				if (kk - 1 >= lp.k_level && kk <= lp.k_level + lp.k_tau && f.alpha == 1) {
					plateau[b].push_back(f.nodes[k]);
					covered[f.nodes[k]] = 1;
				}
			}
		const FiberLayout lo = layout(g, s, -2 * s.eps(), s.tau() + 2 * s.eps());
		for (const auto &f : fibers(g, s, lo, 3 * s.eps()))
			for (int k = 0; k <= lo.steps; ++k) {
				const double t = lo.t0 + k * ds;
				if (t > -2 * s.eps() && t < s.tau() + 2 * s.eps()) {
					outer[b].push_back(f.nodes[k]);
					in_outer[f.nodes[k]] = 1;
				}
			}
	}
	for (int idx = 0; idx < g.size(); ++idx)
		if (!covered[idx])
			throw UncoveredRegionError("regularize_all: cover gap at " + node_text(g, idx), idx, g.point(idx));

	const Eigen::VectorXd f_node = [&] {
		Eigen::VectorXd r(g.size());
		for (int idx = 0; idx < g.size(); ++idx) r(idx) = phi(g.point(idx)) - phi_bar;
		return r;
	}();

	SubactionCertificate cert(u0);
	cert.boxes = static_cast<int>(order.size());
	cert.input_excess = excess;
	cert.lip_phi = phi.lipschitz_constant;
	std::vector<char> handled(g.size(), 0);
	GridFunction v = u0;
	for (size_t b = 0; b < order.size(); ++b) {
		GridFunction next = regularize_once(v, *order[b], phi, phi_bar, threads);
		std::vector<char> mask(g.size(), 0);
		for (int idx : outer[b]) mask[idx] = 1;
		for (int idx = 0; idx < g.size(); ++idx)
			if (next.values(idx) != v.values(idx) && !mask[idx]) ++cert.locality_violations;
		v = std::move(next);
		for (int idx : plateau[b]) handled[idx] = 1;
		double mm = std::numeric_limits<double>::infinity();
		for (int idx = 0; idx < g.size(); ++idx)
			if (handled[idx]) mm = std::min(mm, f_node(idx) - (v.values(idx) - v.values(g.prev_level(idx))) / ds);
		cert.step_margins.push_back(mm);
	}
	for (int idx = 0; idx < g.size(); ++idx) {
		if (v.values(idx) != u0.values(idx)) ++cert.changed_nodes;
		if (!in_outer[idx] && v.values(idx) != u0.values(idx)) ++cert.locality_violations;
	}

	cert.u = v;
	cert.lie.resize(g.size());
	cert.margin.resize(g.size());
	for (int idx = 0; idx < g.size(); ++idx) {
		cert.lie(idx) = (v.values(idx) - v.values(g.prev_level(idx))) / ds;
		cert.margin(idx) = f_node(idx) - cert.lie(idx);
		if (cert.margin(idx) < cert.min_margin) {
			cert.min_margin = cert.margin(idx);
			cert.worst_node = g.point(idx);
		}
	}
	cert.certified_nodes = g.size();
	cert.slack = phi.lipschitz_constant * ds / 2 + std::max(0.0, excess) / ds + 1e-12 * scale_of(v.values) / ds;
	cert.lip_u = v.discrete_lipschitz();
	double lip = 0;
	for (int idx = 0; idx < g.size(); ++idx) {
		int i, j, k;
		g.coords(idx, i, j, k);
		const int nx = g.index((i + 1) % g.n(), j, k), ny = g.index(i, (j + 1) % g.n(), k);
		lip = std::max({lip, std::abs(cert.lie(nx) - cert.lie(idx)) / g.dx(),
						std::abs(cert.lie(ny) - cert.lie(idx)) / g.dx(),
						std::abs(cert.lie(g.next_level(idx)) - cert.lie(idx)) / ds});
	}
	cert.lip_lie = lip;
	cert.ratio_u = cert.lip_phi > 0 ? cert.lip_u / cert.lip_phi : 0;
	cert.ratio_lie = cert.lip_phi > 0 ? cert.lip_lie / cert.lip_phi : 0;
	cert.pass = cert.min_margin >= -cert.slack && cert.locality_violations == 0 && std::isfinite(cert.lip_u) &&
				std::isfinite(cert.lip_lie);
	return cert;
}

SubactionReport verify_subaction(const SubactionCertificate &cert, const Observable &phi, double phi_bar,
								 int n_samples, unsigned long long seed, int n_paths)
{
	const GridFunction &v = cert.u;
	const Grid &g = v.grid;
	const SuspensionFlow &m = g.model();
	const double ds = g.ds(), delta = 2 * ds, diag = g.diagonal();
	const double lip = phi.lipschitz_constant;
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	SubactionReport r;
	r.slack = cert.slack + lip * (delta + diag);
	const int max_draws = 100 * std::max(1, n_samples);
	for (int draw = 0; r.samples < n_samples && draw < max_draws; ++draw) {
		const Vec3 x(unit(rng), unit(rng), unit(rng) * m.roof());
		if (x(2) - delta < 0 || x(2) + delta >= m.roof() - ds) {
			++r.excluded_seam;
			continue;
		}
		++r.samples;
		const double lie = (v(m.flow(x, delta)) - v(m.flow(x, -delta))) / (2 * delta);
		const double margin = phi(x) - phi_bar - lie;
		if (margin < r.worst_margin) {
			r.worst_margin = margin;
			r.witness = x;
		}
		if (margin < -r.slack) ++r.violations;
	}

	// Paths of bounded action: A(z) >= -osc(u) with C = Lip(u), up to interpolation and quadrature slack.
	const double osc = v.values.maxCoeff() - v.values.minCoeff();
	const double c = std::sqrt(2.0) * cert.lip_u;
	for (int p = 0; p < n_paths; ++p) {
		const double t = 0.5 + 2.5 * unit(rng);
		const double sigma = std::exp(std::log(1e-3) + unit(rng) * (std::log(1.0) - std::log(1e-3)));
		const double dt = ds / 2;
		const int n = static_cast<int>(std::ceil(t / dt));
		PathSample path;
		path.times.push_back(0);
		path.points.push_back(Vec3(unit(rng), unit(rng), unit(rng) * m.roof()));
		for (int k = 0; k < n; ++k) {
			const Vec3 xi(2 * unit(rng) - 1, 2 * unit(rng) - 1, 2 * unit(rng) - 1);
			path.times.push_back(dt * (k + 1));
			path.points.push_back(m.displace(path.points.back(), dt * (Vec3(0, 0, 1) + sigma * xi)));
		}
		const double a = weighted_action(m, path, phi, c, phi_bar);
		const double bound = -osc - path.duration() * (cert.slack + lip * (delta + diag)) - 2 * cert.lip_u * diag;
		++r.justification_paths;
		r.justification_worst = std::min(r.justification_worst, a - bound);
		if (a < bound) ++r.justification_violations;
	}
	r.pass = r.samples > 0 && r.violations == 0 && r.justification_violations == 0;
	return r;
}

} // namespace wkam
