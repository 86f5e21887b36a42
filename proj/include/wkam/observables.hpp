#pragma once

#include "wkam/flow_models.hpp"

namespace wkam {

// u0(x, s) = a sin(2 pi s / T) + b [(1 - w(s)) g(x) + w(s) g(A x)],  w(s) = sin^2(pi s / 2T),
// g(x) = cos(2 pi x1) + sin(2 pi x2) / 2.  Continuous on the suspension and C^1 along the flow.
class TrigPotential {
public:
	TrigPotential(SuspensionFlow model, double a = 0.15, double b = 0.05);

	double value(const Vec3 &p) const;
	// (d/dx1, d/dx2, d/ds) in the frame of p.
	Vec3 gradient(const Vec3 &p) const;
	// Derivative along the flow, d/ds.
	double lie(const Vec3 &p) const;
	Vec3 lie_gradient(const Vec3 &p) const;

	double operator()(const Vec3 &p) const { return value(p); }
	double lipschitz() const { return lip_u_; }
	double lie_lipschitz() const { return lip_phi_; }
	double lie_sup() const { return sup_phi_; }
	double oscillation() const { return osc_u_; }

private:
	double g(const Vec2 &x) const;
	Vec2 grad_g(const Vec2 &x) const;
	SuspensionFlow model_;
	double a_, b_;
	double lip_u_ = 0, lip_phi_ = 0, sup_phi_ = 0, osc_u_ = 0;
};

Observable constant_observable(double c);
Observable coboundary_observable(const TrigPotential &u0);
// Squared base distance to the fixed orbit through (0,0), blended across the roof so that the
// function is continuous on the suspension. Nonnegative and zero exactly on that orbit.
Observable distance_squared_observable(const SuspensionFlow &model);
Observable sum_observable(const Observable &a, const Observable &b, const std::string &name);

// Largest sampled difference quotient of phi in the suspension metric.
double sampled_lipschitz(const SuspensionFlow &model, const std::function<double(const Vec3 &)> &phi, int n_samples,
						 unsigned long long seed, double separation);

} // namespace wkam
