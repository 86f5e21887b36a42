#include "wkam/observables.hpp"

#include <random>

namespace wkam {

namespace {

constexpr double kPi = 3.14159265358979323846;

double blend(double s, double roof) { return std::pow(std::sin(kPi * s / (2 * roof)), 2); }
double blend_d(double s, double roof) { return kPi / (2 * roof) * std::sin(kPi * s / roof); }
double blend_dd(double s, double roof) { return kPi * kPi / (2 * roof * roof) * std::cos(kPi * s / roof); }

// Sup over a regular lattice of a nonnegative function on the suspension.
template <typename Fn>
double lattice_sup(const SuspensionFlow &model, int n, const Fn &f)
{
	double best = 0;
	for (int i = 0; i < n; ++i)
		for (int j = 0; j < n; ++j)
			for (int k = 0; k < n; ++k) {
				const Vec3 p((i + 0.5) / n, (j + 0.5) / n, (k + 0.5) * model.roof() / n);
				best = std::max(best, f(p));
			}
	return best;
}

} // namespace

TrigPotential::TrigPotential(SuspensionFlow model, double a, double b) : model_(std::move(model)), a_(a), b_(b)
{
	// Derivative sups sampled on a fine lattice with a 10% margin for the unsampled gaps.
	const int n = 40;
	double umax = -1e300, umin = 1e300;
	lip_u_ = 1.1 * lattice_sup(model_, n, [&](const Vec3 &p) {
		const double v = value(p);
		umax = std::max(umax, v);
		umin = std::min(umin, v);
		const Vec3 gr = gradient(p);
		return gr.head<2>().norm() + std::abs(gr(2));
	});
	osc_u_ = umax - umin;
	lip_phi_ = 1.1 * lattice_sup(model_, n, [&](const Vec3 &p) {
		const Vec3 gr = lie_gradient(p);
		return gr.head<2>().norm() + std::abs(gr(2));
	});
	sup_phi_ = 1.1 * lattice_sup(model_, n, [&](const Vec3 &p) { return std::abs(lie(p)); });
}

double TrigPotential::g(const Vec2 &x) const { return std::cos(2 * kPi * x(0)) + 0.5 * std::sin(2 * kPi * x(1)); }

Vec2 TrigPotential::grad_g(const Vec2 &x) const
{
	return Vec2(-2 * kPi * std::sin(2 * kPi * x(0)), kPi * std::cos(2 * kPi * x(1)));
}

double TrigPotential::value(const Vec3 &p) const
{
	const double tau = model_.roof();
	const double w = blend(p(2), tau);
	const Vec2 x = p.head<2>();
	const Vec2 ax = model_.base_matrix() * x;
	return a_ * std::sin(2 * kPi * p(2) / tau) + b_ * ((1 - w) * g(x) + w * g(ax));
}

Vec3 TrigPotential::gradient(const Vec3 &p) const
{
	const double tau = model_.roof();
	const double w = blend(p(2), tau);
	const Vec2 x = p.head<2>();
	const Vec2 ax = model_.base_matrix() * x;
	Vec3 r;
	r.head<2>() = b_ * ((1 - w) * grad_g(x) + w * model_.base_matrix().transpose() * grad_g(ax));
	r(2) = lie(p);
	return r;
}

double TrigPotential::lie(const Vec3 &p) const
{
	const double tau = model_.roof();
	const Vec2 x = p.head<2>();
	const Vec2 ax = model_.base_matrix() * x;
	return 2 * kPi * a_ / tau * std::cos(2 * kPi * p(2) / tau) + b_ * blend_d(p(2), tau) * (g(ax) - g(x));
}

Vec3 TrigPotential::lie_gradient(const Vec3 &p) const
{
	const double tau = model_.roof();
	const Vec2 x = p.head<2>();
	const Vec2 ax = model_.base_matrix() * x;
	Vec3 r;
	r.head<2>() = b_ * blend_d(p(2), tau) * (model_.base_matrix().transpose() * grad_g(ax) - grad_g(x));
	r(2) = -4 * kPi * kPi * a_ / (tau * tau) * std::sin(2 * kPi * p(2) / tau) + b_ * blend_dd(p(2), tau) * (g(ax) - g(x));
	return r;
}

Observable constant_observable(double c)
{
	Observable o;
	o.name = "constant";
	o.evaluate = [c](const Vec3 &) { return c; };
	o.lipschitz_constant = 0;
	o.sup_bound = std::abs(c);
	return o;
}

Observable coboundary_observable(const TrigPotential &u0)
{
	Observable o;
	o.name = "coboundary";
	o.evaluate = [u0](const Vec3 &p) { return u0.lie(p); };
	o.lipschitz_constant = u0.lie_lipschitz();
	o.sup_bound = u0.lie_sup();
	return o;
}

Observable distance_squared_observable(const SuspensionFlow &model)
{
	Observable o;
	o.name = "distsq";
	const double tau = model.roof();
	const Mat2 a = model.base_matrix();
	o.evaluate = [tau, a](const Vec3 &p) {
		const double w = blend(p(2), tau);
		const Vec2 x = min_image(p.head<2>());
		const Vec2 ax = min_image(a * p.head<2>());
		return (1 - w) * x.squaredNorm() + w * ax.squaredNorm();
	};
	o.lipschitz_constant = 1.1 * lattice_sup(model, 40, [&](const Vec3 &p) {
		const double w = blend(p(2), tau);
		const Vec2 x = min_image(p.head<2>());
		const Vec2 ax = min_image(a * p.head<2>());
		const Vec2 gb = 2 * (1 - w) * x + 2 * w * a.transpose() * ax;
		const double gs = blend_d(p(2), tau) * (ax.squaredNorm() - x.squaredNorm());
		return gb.norm() + std::abs(gs);
	});
	o.sup_bound = 0.5;
	return o;
}

Observable sum_observable(const Observable &a, const Observable &b, const std::string &name)
{
	Observable o;
	o.name = name;
	o.evaluate = [fa = a.evaluate, fb = b.evaluate](const Vec3 &p) { return fa(p) + fb(p); };
	o.lipschitz_constant = a.lipschitz_constant + b.lipschitz_constant;
	o.sup_bound = a.sup_bound + b.sup_bound;
	return o;
}

double sampled_lipschitz(const SuspensionFlow &model, const std::function<double(const Vec3 &)> &phi, int n_samples,
						 unsigned long long seed, double separation)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	std::uniform_real_distribution<double> off(-separation, separation);
	double best = 0;
	for (int i = 0; i < n_samples; ++i) {
		const Vec3 p(unit(rng), unit(rng), unit(rng) * model.roof());
		const Vec3 q = model.displace(p, Vec3(off(rng), off(rng), off(rng)));
		const double d = model.distance(p, q);
		if (d <= 0) continue;
		best = std::max(best, std::abs(phi(p) - phi(q)) / d);
	}
	return best;
}

} // namespace wkam
