#include "wkam/flow_models.hpp"

#include <limits>
#include <map>
#include <tuple>
#include <numeric>
#include <set>

namespace wkam {

namespace {

long long mod_pos(long long a, long long m)
{
	long long r = a % m;
	return r < 0 ? r + m : r;
}

// Extended gcd: returns g and p, q with p a + q b = g >= 0.
long long ext_gcd(long long a, long long b, long long &p, long long &q)
{
	long long old_r = a, r = b, old_s = 1, s = 0, old_t = 0, t = 1;
	while (r != 0) {
		const long long k = old_r / r;
		std::tie(old_r, r) = std::make_pair(r, old_r - k * r);
		std::tie(old_s, s) = std::make_pair(s, old_s - k * s);
		std::tie(old_t, t) = std::make_pair(t, old_t - k * t);
	}
	if (old_r < 0) {
		old_r = -old_r;
		old_s = -old_s;
		old_t = -old_t;
	}
	p = old_s;
	q = old_t;
	return old_r;
}

} // namespace

SuspensionFlow::SuspensionFlow(const Mat2l &base, double roof) : a_int_(base), roof_(roof)
{
	const long long det = base(0, 0) * base(1, 1) - base(0, 1) * base(1, 0);
	if (det != 1 && det != -1) throw std::invalid_argument("SuspensionFlow: base matrix must have determinant +-1");
	if (!(roof > 0)) throw std::invalid_argument("SuspensionFlow: roof must be positive");
	a_ = base.cast<double>();
	a_inv_ = a_.inverse();
	const double tr = a_.trace();
	const double disc = tr * tr - 4.0 * static_cast<double>(det);
	if (disc <= 0 || std::abs(tr) <= (det == 1 ? 2.0 : 0.0))
		throw std::invalid_argument("SuspensionFlow: base matrix is not hyperbolic");
	const double r1 = 0.5 * (tr + std::sqrt(disc));
	const double r2 = 0.5 * (tr - std::sqrt(disc));
	mu_u_ = std::abs(r1) > std::abs(r2) ? r1 : r2;
	mu_s_ = static_cast<double>(det) / mu_u_;
	auto eigvec = [&](double mu) {
		// Kernel of A - mu I.
		Vec2 v;
		if (std::abs(a_(0, 1)) > std::abs(a_(1, 0)))
			v << a_(0, 1), mu - a_(0, 0);
		else
			v << mu - a_(1, 1), a_(1, 0);
		v.normalize();
		if (v(0) < 0 || (v(0) == 0 && v(1) < 0)) v = -v;
		return v;
	};
	e_u_ = eigvec(mu_u_);
	e_s_ = eigvec(mu_s_);
	e_.col(0) = e_u_;
	e_.col(1) = e_s_;
	e_inv_ = e_.inverse();
}

Mat2l SuspensionFlow::cat_matrix()
{
	Mat2l a;
	a << 2, 1, 1, 1;
	return a;
}

HyperbolicityData SuspensionFlow::hyperbolicity() const
{
	HyperbolicityData h;
	h.lambda_u = lyapunov_rate();
	h.lambda_s = -h.lambda_u;
	// Flat and eigen max-norm comparison constant.
	const double c1 = e_.cwiseAbs().rowwise().sum().maxCoeff();
	const double c2 = e_inv_.cwiseAbs().rowwise().sum().maxCoeff();
	h.c_hyp = std::max(1.0, c1 * c2);
	h.du = 1;
	h.ds = 1;
	return h;
}

Vec2 SuspensionFlow::apply_base(const Vec2 &x, long k) const
{
	Vec2 y = wrap_unit(x);
	const Mat2 &m = k >= 0 ? a_ : a_inv_;
	for (long i = 0; i < std::abs(k); ++i) y = wrap_unit(m * y);
	return y;
}

Vec3 SuspensionFlow::normalize(const Vec3 &p) const
{
	const double k = std::floor(p(2) / roof_);
	double s = p(2) - k * roof_;
	long kk = static_cast<long>(k);
	if (s >= roof_) {
		s -= roof_;
		++kk;
	}
	if (s < 0) s = 0;
	const Vec2 b = apply_base(p.head<2>(), kk);
	return Vec3(b(0), b(1), s);
}

Vec3 SuspensionFlow::flow(const Vec3 &p, double t) const
{
	return normalize(Vec3(p(0), p(1), p(2) + t));
}

Vec3 SuspensionFlow::difference(const Vec3 &p, const Vec3 &q) const
{
	Vec3 best = Vec3::Zero();
	double best_norm = std::numeric_limits<double>::infinity();
	for (int j : {0, 1, -1}) {
		const Vec2 base = j == 0 ? Vec2(q.head<2>()) : (j == 1 ? Vec2(a_inv_ * q.head<2>()) : Vec2(a_ * q.head<2>()));
		Vec3 d;
		d.head<2>() = min_image(base - p.head<2>());
		d(2) = q(2) + j * roof_ - p(2);
		const double n = metric_norm(d);
		if (n < best_norm) {
			best_norm = n;
			best = d;
		}
	}
	return best;
}

double SuspensionFlow::distance(const Vec3 &p, const Vec3 &q) const
{
	return std::min(metric_norm(difference(p, q)), metric_norm(difference(q, p)));
}

double SuspensionFlow::diameter() const
{
	return std::max(std::sqrt(0.5), 0.5 * roof_);
}

VectorFieldFlow::VectorFieldFlow(VectorFieldSpec spec, double step) : spec_(std::move(spec)), step_(step)
{
	if (spec_.dimension <= 0) throw std::invalid_argument("VectorFieldFlow: dimension must be positive");
	if (!spec_.evaluate) throw std::invalid_argument("VectorFieldFlow: missing vector field");
	if (spec_.lower.size() != spec_.dimension || spec_.upper.size() != spec_.dimension ||
		static_cast<int>(spec_.periodic.size()) != spec_.dimension)
		throw std::invalid_argument("VectorFieldFlow: domain box does not match dimension");
	if (!(step_ > 0)) throw std::invalid_argument("VectorFieldFlow: step must be positive");
}

Eigen::VectorXd VectorFieldFlow::normalize(const Eigen::VectorXd &x) const
{
	Eigen::VectorXd y = x;
	for (int i = 0; i < spec_.dimension; ++i) {
		if (!spec_.periodic[i]) continue;
		const double len = spec_.upper(i) - spec_.lower(i);
		y(i) = spec_.lower(i) + (y(i) - spec_.lower(i)) - len * std::floor((y(i) - spec_.lower(i)) / len);
	}
	return y;
}

bool VectorFieldFlow::inside(const Eigen::VectorXd &x) const
{
	for (int i = 0; i < spec_.dimension; ++i)
		if (!spec_.periodic[i] && (x(i) < spec_.lower(i) || x(i) > spec_.upper(i))) return false;
	return true;
}

Eigen::VectorXd VectorFieldFlow::flow(const Eigen::VectorXd &x, double t) const
{
	if (!inside(x)) throw DomainEscape("flow_map: start point outside the domain", 0.0);
	const long n = static_cast<long>(std::ceil(std::abs(t) / step_ - 1e-9));
	if (n == 0) return normalize(x);
	const double h = t / static_cast<double>(n);
	Eigen::VectorXd y = x;
	for (long i = 0; i < n; ++i) {
		const Eigen::VectorXd k1 = spec_.evaluate(y);
		const Eigen::VectorXd k2 = spec_.evaluate(y + 0.5 * h * k1);
		const Eigen::VectorXd k3 = spec_.evaluate(y + 0.5 * h * k2);
		const Eigen::VectorXd k4 = spec_.evaluate(y + h * k3);
		y += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
		if (!inside(y)) throw DomainEscape("flow_map: trajectory left the domain", static_cast<double>(i + 1) * h);
	}
	return normalize(y);
}

Mat2l int_power(const Mat2l &a, int n)
{
	Mat2l r = Mat2l::Identity();
	for (int i = 0; i < n; ++i) r = r * a;
	return r;
}

long long fixed_point_count(const Mat2l &a, int n)
{
	const Mat2l m = int_power(a, n) - Mat2l::Identity();
	return std::llabs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
}

namespace {

// Points of Fix(A^n) as integer numerators over the common denominator D = |det(A^n - I)|.
std::vector<Vec2l> fixed_numerators(const Mat2l &a, int n, long long &denom)
{
	const Mat2l m = int_power(a, n) - Mat2l::Identity();
	const long long det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
	if (det == 0) throw std::invalid_argument("fixed_points: A^n - I is singular");
	denom = std::llabs(det);
	// Column Hermite form M U = [[g, 0], [b, c]] gives coset representatives of Z^2 / M Z^2.
	long long p, q;
	const long long g = ext_gcd(m(0, 0), m(0, 1), p, q);
	Mat2l u;
	u << p, -m(0, 1) / g, q, m(0, 0) / g;
	const Mat2l h = m * u;
	const long long c = std::llabs(h(1, 1));
	Mat2l adj;
	adj << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
	const long long sgn = det > 0 ? 1 : -1;
	std::vector<Vec2l> out;
	out.reserve(static_cast<size_t>(denom));
	for (long long i = 0; i < g; ++i)
		for (long long j = 0; j < c; ++j) {
			Vec2l k(i, j);
			Vec2l num = sgn * (adj * k);
			num(0) = mod_pos(num(0), denom);
			num(1) = mod_pos(num(1), denom);
			out.push_back(num);
		}
	return out;
}

} // namespace

std::vector<Vec2> fixed_points(const SuspensionFlow &model, int n)
{
	if (n < 1) throw std::invalid_argument("fixed_points: n must be positive");
	long long d;
	const auto nums = fixed_numerators(model.base_matrix_int(), n, d);
	std::vector<Vec2> out;
	out.reserve(nums.size());
	for (const auto &v : nums) out.emplace_back(static_cast<double>(v(0)) / d, static_cast<double>(v(1)) / d);
	return out;
}

std::vector<PeriodicOrbit> periodic_orbits(const SuspensionFlow &model, int max_period)
{
	if (max_period < 1 || max_period > 12) throw std::invalid_argument("periodic_orbits: max_period must be in [1, 12]");
	const Mat2l &a = model.base_matrix_int();
	std::vector<PeriodicOrbit> orbits;
	for (int n = 1; n <= max_period; ++n) {
		long long d;
		const auto nums = fixed_numerators(a, n, d);
		std::set<std::pair<long long, long long>> seen;
		for (const auto &v : nums) {
			if (seen.count({v(0), v(1)})) continue;
			std::vector<Vec2l> orbit{v};
			Vec2l w = v;
			for (int k = 1; k <= n; ++k) {
				w = a * w;
				w(0) = mod_pos(w(0), d);
				w(1) = mod_pos(w(1), d);
				if (w == v) break;
				orbit.push_back(w);
			}
			for (const auto &o : orbit) seen.insert({o(0), o(1)});
			if (static_cast<int>(orbit.size()) != n) continue;
			PeriodicOrbit po;
			po.period = n;
			for (const auto &o : orbit) po.points.emplace_back(static_cast<double>(o(0)) / d, static_cast<double>(o(1)) / d);
			po.base = po.points.front();
			orbits.push_back(std::move(po));
		}
	}
	return orbits;
}

} // namespace wkam
