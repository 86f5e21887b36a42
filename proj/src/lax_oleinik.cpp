#include "wkam/lax_oleinik.hpp"
#include "wkam/detail/parallel.hpp"

#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>
#include <thread>

namespace wkam {

using detail::parallel_chunks;
using detail::parallel_for;

namespace {

long long mod_pos(long long a, long long m)
{
	const long long r = a % m;
	return r < 0 ? r + m : r;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

Grid::Grid(SuspensionFlow model, int n, int ns) : model_(std::move(model)), n_(n), ns_(ns)
{
	if (n < 2 || ns < 2) throw std::invalid_argument("Grid: at least 2 nodes per axis");
	a_ = model_.base_matrix_int();
	a_inv_ << a_(1, 1), -a_(0, 1), -a_(1, 0), a_(0, 0);
	a_inv_ *= a_(0, 0) * a_(1, 1) - a_(0, 1) * a_(1, 0);
}

int Grid::wrap(long long i) const { return static_cast<int>(mod_pos(i, n_)); }

void Grid::coords(int idx, int &i, int &j, int &k) const
{
	i = idx % n_;
	j = (idx / n_) % n_;
	k = idx / (n_ * n_);
}

Vec3 Grid::point(int idx) const
{
	int i, j, k;
	coords(idx, i, j, k);
	return Vec3(i * dx(), j * dx(), k * ds());
}

int Grid::nearest(const Vec3 &p_in) const
{
	const Vec3 p = model_.normalize(p_in);
	const int i = wrap(std::lround(p(0) * n_));
	const int j = wrap(std::lround(p(1) * n_));
	long k = std::lround(p(2) / ds());
	int idx = index(i, j, 0);
	if (k >= ns_) return offset(idx, 0, 0, static_cast<int>(k));
	return index(i, j, static_cast<int>(k));
}

int Grid::next_level(int idx) const
{
	int i, j, k;
	coords(idx, i, j, k);
	if (k + 1 < ns_) return index(i, j, k + 1);
	return index(wrap(a_(0, 0) * i + a_(0, 1) * j), wrap(a_(1, 0) * i + a_(1, 1) * j), 0);
}

int Grid::prev_level(int idx) const
{
	int i, j, k;
	coords(idx, i, j, k);
	if (k > 0) return index(i, j, k - 1);
	return index(wrap(a_inv_(0, 0) * i + a_inv_(0, 1) * j), wrap(a_inv_(1, 0) * i + a_inv_(1, 1) * j), ns_ - 1);
}

int Grid::offset(int idx, int di, int dj, int dk) const
{
	int i, j, k;
	coords(idx, i, j, k);
	int r = index(wrap(i + di), wrap(j + dj), k);
	for (int s = 0; s < dk; ++s) r = next_level(r);
	for (int s = 0; s < -dk; ++s) r = prev_level(r);
	return r;
}

double GridFunction::interpolate(const Vec3 &p_in) const
{
	const SuspensionFlow &m = grid.model();
	const Vec3 p = m.normalize(p_in);
	const int n = grid.n();
	auto bilinear = [&](const Vec2 &x_in, int k) {
		const Vec2 x = wrap_unit(x_in);
		const double fx = x(0) * n, fy = x(1) * n;
		const long i0 = static_cast<long>(std::floor(fx)), j0 = static_cast<long>(std::floor(fy));
		const double a = fx - i0, b = fy - j0;
		auto at = [&](long i, long j) { return values(grid.index(mod_pos(i, n), mod_pos(j, n), k)); };
		return (1 - a) * (1 - b) * at(i0, j0) + a * (1 - b) * at(i0 + 1, j0) + (1 - a) * b * at(i0, j0 + 1) +
			   a * b * at(i0 + 1, j0 + 1);
	};
	const double fk = p(2) / grid.ds();
	int k0 = static_cast<int>(std::floor(fk));
	if (k0 >= grid.ns()) k0 = grid.ns() - 1;
	const double c = fk - k0;
	const Vec2 x = p.head<2>();
	const double lo = bilinear(x, k0);
	if (c == 0) return lo;
	const double hi = k0 + 1 < grid.ns() ? bilinear(x, k0 + 1) : bilinear(m.base_matrix() * x, 0);
	return (1 - c) * lo + c * hi;
}

double GridFunction::discrete_lipschitz() const
{
	double lip = 0;
	for (int idx = 0; idx < grid.size(); ++idx) {
		lip = std::max(lip, std::abs(values(grid.offset(idx, 1, 0, 0)) - values(idx)) / grid.dx());
		lip = std::max(lip, std::abs(values(grid.offset(idx, 0, 1, 0)) - values(idx)) / grid.dx());
		lip = std::max(lip, std::abs(values(grid.next_level(idx)) - values(idx)) / grid.ds());
	}
	return lip;
}

GridFunction sample(const Grid &grid, const std::function<double(const Vec3 &)> &f)
{
	GridFunction g(grid);
	for (int idx = 0; idx < grid.size(); ++idx) g.values(idx) = f(grid.point(idx));
	return g;
}

Observable table_observable(const GridFunction &table, const std::string &name)
{
	Observable o;
	o.name = name;
	auto t = std::make_shared<const GridFunction>(table);
	o.evaluate = [t](const Vec3 &p) { return t->interpolate(p); };
	// Interpolation does not increase the edge Lipschitz constants; the base diagonal adds sqrt 2.
	o.lipschitz_constant = std::sqrt(2.0) * table.discrete_lipschitz();
	o.sup_bound = table.values.cwiseAbs().maxCoeff();
	return o;
}

double ActionKernel::cost(int source, int target) const
{
	const auto b = sources.begin() + row_start[target];
	const auto e = sources.begin() + row_start[target + 1];
	const auto it = std::lower_bound(b, e, source);
	if (it == e || *it != source) return kInf;
	return costs[it - sources.begin()];
}

void write_grid_function(std::ostream &out, const GridFunction &f)
{
	const Grid &g = f.grid;
	out << "i,j,k,x1,x2,s,value\n";
	char buf[256];
	for (int idx = 0; idx < g.size(); ++idx) {
		int i, j, k;
		g.coords(idx, i, j, k);
		const Vec3 p = g.point(idx);
		std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n", i, j, k, p(0), p(1), p(2), f.values(idx));
		out << buf;
	}
}

GridFunction read_grid_function(const Grid &grid, std::istream &in)
{
	std::string line;
	if (!std::getline(in, line)) throw std::invalid_argument("grid table: empty input");
	auto split = [](const std::string &l) {
		std::vector<std::string> out;
		std::stringstream ss(l);
		std::string cell;
		while (std::getline(ss, cell, ',')) out.push_back(cell);
		return out;
	};
	const auto header = split(line);
	auto column = [&](const std::string &name) {
		for (size_t c = 0; c < header.size(); ++c)
			if (header[c] == name) return static_cast<int>(c);
		throw std::invalid_argument("grid table: missing column " + name);
	};
	const int ci = column("i"), cj = column("j"), ck = column("k"), cv = column("value");
	GridFunction f(grid, std::numeric_limits<double>::quiet_NaN());
	int rows = 0;
	while (std::getline(in, line)) {
		if (line.empty()) continue;
		const auto cells = split(line);
		if (static_cast<int>(cells.size()) <= std::max({ci, cj, ck, cv}))
			throw std::invalid_argument("grid table: short row " + std::to_string(rows + 2));
		const int i = std::stoi(cells[ci]), j = std::stoi(cells[cj]), k = std::stoi(cells[ck]);
		if (i < 0 || j < 0 || k < 0 || i >= grid.n() || j >= grid.n() || k >= grid.ns())
			throw std::invalid_argument("grid table: node index out of range in row " + std::to_string(rows + 2));
		f.values(grid.index(i, j, k)) = std::stod(cells[cv]);
		++rows;
	}
	for (int idx = 0; idx < grid.size(); ++idx)
		if (std::isnan(f.values(idx))) throw std::invalid_argument("grid table: missing node " + std::to_string(idx));
	return f;
}

ActionKernel build_kernel(const Grid &grid, const Observable &phi, double c, double phi_bar, double h,
						  double reach_multiplier, int threads)
{
	const SuspensionFlow &m = grid.model();
	if (!(h > 0) || h > m.roof() / 10 + 1e-12) throw std::invalid_argument("build_kernel: need 0 < h <= roof / 10");
	if (!(reach_multiplier >= 2)) throw std::invalid_argument("build_kernel: reach_multiplier must be >= 2");
	if (!(c >= 0)) throw std::invalid_argument("build_kernel: weight must be nonnegative");

	ActionKernel k(grid);
	k.h = h;
	k.c = c;
	k.phi_bar = phi_bar;
	k.reach_multiplier = reach_multiplier;
	k.reach_base = static_cast<int>(std::ceil(reach_multiplier - 1e-9));
	k.reach_levels = static_cast<int>(std::ceil(reach_multiplier * (h + grid.ds()) / grid.ds() - 1e-9));
	k.center_levels = static_cast<int>(std::lround(h / grid.ds()));
	if (grid.n() < 2 * k.reach_base + 1) throw std::invalid_argument("build_kernel: grid too coarse for the base reach");
	const double shrink = std::min({1.0, 1 / m.base_inverse().operatorNorm(), 1 / m.base_matrix().operatorNorm()});
	k.truncation_cost = c * std::min((k.reach_base + 1) * grid.dx() * shrink,
									 (k.reach_levels + 1) * grid.ds() - std::abs(h - k.center_levels * grid.ds()));

	const int n_nodes = grid.size();
	const int rb = k.reach_base;
	struct Chunk {
		std::vector<int> src;
		std::vector<double> cost;
		std::vector<int> len;
	};
	const int n_threads = std::max(1, std::min(threads, n_nodes));
	std::vector<Chunk> chunks(n_threads);
	parallel_chunks(n_nodes, n_threads, [&](int t, int begin, int end) {
		Chunk &ch = chunks[t];
		std::vector<std::pair<int, double>> row;
		for (int q = begin; q < end; ++q) {
			row.clear();
			int iq, jq, kq;
			grid.coords(q, iq, jq, kq);
			for (int dk = k.center_levels - k.reach_levels; dk <= k.center_levels + k.reach_levels; ++dk) {
				const int lifted = grid.offset(q, 0, 0, -dk);
				// Roof crossings between source and target; the base offset is charged in the cheapest frame.
				const int crossings = static_cast<int>(std::floor(static_cast<double>(kq - dk) / grid.ns()));
				const Mat2 step = crossings < 0 ? m.base_matrix() : m.base_inverse();
				for (int dj = -rb; dj <= rb; ++dj)
					for (int di = -rb; di <= rb; ++di) {
						const int p = grid.offset(lifted, -di, -dj, 0);
						const Vec3 d(di * grid.dx(), dj * grid.dx(), dk * grid.ds());
						const Vec3 mid = m.displace(grid.point(p), 0.5 * d);
						Vec2 base = d.head<2>();
						double dev = base.norm();
						for (int j = 0; j < std::abs(crossings); ++j) {
							base = step * base;
							dev = std::min(dev, base.norm());
						}
						const double a = h * (phi(mid) - phi_bar) + c * std::max(dev, std::abs(h - d(2)));
						row.emplace_back(p, a);
					}
			}
			std::sort(row.begin(), row.end());
			int len = 0;
			for (size_t e = 0; e < row.size(); ++e) {
				if (e > 0 && row[e].first == row[e - 1].first) continue;
				ch.src.push_back(row[e].first);
				ch.cost.push_back(row[e].second);
				++len;
			}
			if (len == 0) throw KernelConnectivityError("build_kernel: empty row");
			ch.len.push_back(len);
		}
	});
	k.row_start.assign(n_nodes + 1, 0);
	int q = 0;
	for (const auto &ch : chunks) {
		for (int len : ch.len) {
			k.row_start[q + 1] = k.row_start[q] + len;
			++q;
		}
		k.sources.insert(k.sources.end(), ch.src.begin(), ch.src.end());
		k.costs.insert(k.costs.end(), ch.cost.begin(), ch.cost.end());
	}
	if (q != n_nodes) throw KernelConnectivityError("build_kernel: missing rows");
	return k;
}

ActionKernel rebase(ActionKernel kernel, double delta)
{
	const double shift = kernel.h * delta;
	for (double &c : kernel.costs) c -= shift;
	kernel.phi_bar += delta;
	return kernel;
}

ActionKernel quantize(ActionKernel kernel, int bits)
{
	const double scale = std::ldexp(1.0, bits);
	for (double &c : kernel.costs) c = std::round(c * scale) / scale;
	return kernel;
}

Eigen::VectorXd apply_operator(const ActionKernel &kernel, const Eigen::VectorXd &u, int threads,
							   std::vector<int> *argmin)
{
	const int n = kernel.grid.size();
	if (u.size() != n) throw std::invalid_argument("apply_operator: size mismatch");
	Eigen::VectorXd out(n);
	if (argmin) argmin->assign(n, -1);
	parallel_for(n, threads, [&](int begin, int end) {
		for (int q = begin; q < end; ++q) {
			double best = kInf;
			int arg = -1;
			for (long long e = kernel.row_start[q]; e < kernel.row_start[q + 1]; ++e) {
				const double v = u(kernel.sources[e]) + kernel.costs[e];
				if (v < best) {
					best = v;
					arg = kernel.sources[e];
				}
			}
			out(q) = best;
			if (argmin) (*argmin)[q] = arg;
		}
	});
	return out;
}

GridFunction apply_operator(const ActionKernel &kernel, const GridFunction &u, int threads)
{
	return GridFunction(kernel.grid, apply_operator(kernel, u.values, threads));
}

Eigen::VectorXd apply_power(const ActionKernel &kernel, Eigen::VectorXd u, int n, int threads)
{
	for (int i = 0; i < n; ++i) u = apply_operator(kernel, u, threads);
	return u;
}

MinPlusLawReport check_minplus_laws(const ActionKernel &kernel, int trials, unsigned long long seed, int threads)
{
	const int n = kernel.grid.size();
	const ActionKernel exact = quantize(kernel, 32);
	std::mt19937_64 rng(seed);
	std::uniform_int_distribution<long long> dyadic(-(1ll << 20), 1ll << 20);
	std::uniform_real_distribution<double> real(-1.0, 1.0);
	auto dyadic_vec = [&] {
		Eigen::VectorXd v(n);
		for (int i = 0; i < n; ++i) v(i) = std::ldexp(static_cast<double>(dyadic(rng)), -16);
		return v;
	};
	auto real_vec = [&] {
		Eigen::VectorXd v(n);
		for (int i = 0; i < n; ++i) v(i) = real(rng);
		return v;
	};
	MinPlusLawReport r;
	for (int t = 0; t < trials; ++t) {
		++r.trials;
		const Eigen::VectorXd u = real_vec();
		Eigen::VectorXd w = u;
		for (int i = 0; i < n; ++i) w(i) += std::abs(real(rng)) * (i % 3 == 0 ? 0.0 : 1.0);
		const Eigen::VectorXd tu = apply_operator(kernel, u, threads), tw = apply_operator(kernel, w, threads);
		for (int i = 0; i < n; ++i)
			if (tu(i) > tw(i)) {
				++r.monotonicity_violations;
				break;
			}

		const Eigen::VectorXd ud = dyadic_vec();
		const double a = std::ldexp(static_cast<double>(dyadic(rng)), -16);
		const Eigen::VectorXd shifted = (ud.array() + a).matrix();
		const Eigen::VectorXd lhs = apply_operator(exact, shifted, threads);
		const Eigen::VectorXd rhs = (apply_operator(exact, ud, threads).array() + a).matrix();
		if ((lhs.array() != rhs.array()).any()) ++r.equivariance_violations;
		const Eigen::VectorXd fl = apply_operator(kernel, shifted, threads) -
								   (apply_operator(kernel, ud, threads).array() + a).matrix();
		r.float_equivariance_deviation = std::max(r.float_equivariance_deviation, fl.cwiseAbs().maxCoeff());

		const Eigen::VectorXd v = real_vec();
		const Eigen::VectorXd m3 = u.cwiseMin(v).cwiseMin(w);
		const Eigen::VectorXd tv = apply_operator(kernel, v, threads);
		const Eigen::VectorXd inf_lhs = apply_operator(kernel, m3, threads);
		const Eigen::VectorXd inf_rhs = tu.cwiseMin(tv).cwiseMin(tw);
		if ((inf_lhs.array() != inf_rhs.array()).any()) ++r.inf_violations;
	}
	r.pass = r.monotonicity_violations == 0 && r.equivariance_violations == 0 && r.inf_violations == 0;
	return r;
}

SemigroupReport semigroup_consistency(const Grid &grid, const Observable &phi, const Eigen::VectorXd &u, double c,
									  double horizon, const std::vector<double> &hs, double reach_multiplier,
									  int threads)
{
	SemigroupReport r;
	r.horizon = horizon;
	for (double h : hs) {
		const long steps = std::lround(horizon / (2 * h));
		if (steps < 1 || std::abs(2 * h * static_cast<double>(steps) - horizon) > 1e-9 * horizon)
			throw std::invalid_argument("semigroup_consistency: horizon must be a multiple of 2h");
		const ActionKernel k1 = build_kernel(grid, phi, c, 0.0, h, reach_multiplier, threads);
		const Eigen::VectorXd a = apply_power(k1, u, static_cast<int>(2 * steps), threads);
		const ActionKernel k2 = build_kernel(grid, phi, c, 0.0, 2 * h, reach_multiplier, threads);
		const Eigen::VectorXd b = apply_power(k2, u, static_cast<int>(steps), threads);
		r.h.push_back(h);
		r.defects.push_back((a - b).cwiseAbs().maxCoeff());
	}
	r.pass = r.defects.size() >= 2;
	for (size_t i = 1; i < r.defects.size(); ++i) {
		const double ratio = r.defects[i] > 0 ? r.defects[i - 1] / r.defects[i] : std::numeric_limits<double>::infinity();
		r.ratios.push_back(ratio);
		r.pass = r.pass && ratio >= r.ratio_lo && ratio <= r.ratio_hi;
	}
	return r;
}

CycleMean howard_min_cycle_mean(const ActionKernel &kernel, int max_iters)
{
	const int n = kernel.grid.size();
	double cmax = 0;
	for (double c : kernel.costs) cmax = std::max(cmax, std::abs(c));
	const double eps = 1e-12 * (1 + cmax);

	// Policy: entry index chosen for each target; the target's predecessor is sources[pol[q]].
	std::vector<long long> pol(n);
	for (int q = 0; q < n; ++q) {
		long long best = kernel.row_start[q];
		for (long long e = kernel.row_start[q]; e < kernel.row_start[q + 1]; ++e)
			if (kernel.costs[e] < kernel.costs[best]) best = e;
		pol[q] = best;
	}
	std::vector<double> eta(n), x(n);
	std::vector<char> state(n);
	std::vector<int> stack;
	CycleMean result;
	for (int it = 0; it < max_iters; ++it) {
		result.iterations = it + 1;
		std::fill(state.begin(), state.end(), 0);
		std::vector<int> best_cycle;
		double best_eta = kInf;
		for (int start = 0; start < n; ++start) {
			if (state[start]) continue;
			stack.clear();
			int v = start;
			while (state[v] == 0) {
				state[v] = 1;
				stack.push_back(v);
				v = kernel.sources[pol[v]];
			}
			size_t resolved = stack.size();
			if (state[v] == 1) {
				// New cycle from v to the top of the stack.
				const size_t first = std::find(stack.begin(), stack.end(), v) - stack.begin();
				double sum = 0;
				for (size_t i = first; i < stack.size(); ++i) sum += kernel.costs[pol[stack[i]]];
				const double mean = sum / static_cast<double>(stack.size() - first);
				x[v] = 0;
				eta[v] = mean;
				for (size_t i = stack.size(); i-- > first + 1;) {
					const int w = stack[i];
					eta[w] = mean;
					x[w] = kernel.costs[pol[w]] - mean + x[kernel.sources[pol[w]]];
				}
				for (size_t i = first; i < stack.size(); ++i) state[stack[i]] = 2;
				if (mean < best_eta) {
					best_eta = mean;
					best_cycle.assign(stack.begin() + first, stack.end());
				}
				resolved = first;
			}
			for (size_t i = resolved; i-- > 0;) {
				const int w = stack[i];
				const int p = kernel.sources[pol[w]];
				eta[w] = eta[p];
				x[w] = kernel.costs[pol[w]] - eta[w] + x[p];
				state[w] = 2;
			}
		}
		result.eta = best_eta;
		result.cycle = best_cycle;

		bool changed = false;
		for (int q = 0; q < n; ++q) {
			long long arg = pol[q];
			double best = eta[q];
			for (long long e = kernel.row_start[q]; e < kernel.row_start[q + 1]; ++e) {
				const double ep = eta[kernel.sources[e]];
				if (ep < best - eps) {
					best = ep;
					arg = e;
				}
			}
			if (arg != pol[q]) {
				pol[q] = arg;
				changed = true;
			}
		}
		if (changed) continue;
		for (int q = 0; q < n; ++q) {
			long long arg = pol[q];
			double best = x[q];
			for (long long e = kernel.row_start[q]; e < kernel.row_start[q + 1]; ++e) {
				const int p = kernel.sources[e];
				if (eta[p] > eta[q] + eps) continue;
				const double v = kernel.costs[e] - eta[q] + x[p];
				if (v < best - eps) {
					best = v;
					arg = e;
				}
			}
			if (arg != pol[q]) {
				pol[q] = arg;
				changed = true;
			}
		}
		if (!changed) return result;
	}
	throw NonConvergenceError("howard_min_cycle_mean: policy iteration did not terminate", {});
}

Eigen::VectorXd distances_from(const Grid &grid, int source)
{
	const int n = grid.size();
	Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, kInf);
	dist(source) = 0;
	using Item = std::pair<double, int>;
	std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
	heap.emplace(0.0, source);
	while (!heap.empty()) {
		const auto [d, v] = heap.top();
		heap.pop();
		if (d > dist(v)) continue;
		for (int dk = -1; dk <= 1; ++dk)
			for (int dj = -1; dj <= 1; ++dj)
				for (int di = -1; di <= 1; ++di) {
					if (!di && !dj && !dk) continue;
					const double nd = d + metric_norm(Vec3(di * grid.dx(), dj * grid.dx(), dk * grid.ds()));
					// Across the roof a step and its reverse land on different nodes, so both are edges.
					for (const int w : {grid.offset(v, di, dj, dk), grid.offset(grid.offset(v, 0, 0, -dk), -di, -dj, 0)})
						if (nd < dist(w)) {
							dist(w) = nd;
							heap.emplace(nd, w);
						}
				}
	}
	return dist;
}

double path_distance(const Grid &grid, int p, int q)
{
	const double d = distances_from(grid, p)(q);
	if (!std::isfinite(d)) throw UnreachableError("path_distance: points are not connected");
	return d;
}

double path_distance(const Grid &grid, const Vec3 &p, const Vec3 &q)
{
	return path_distance(grid, grid.nearest(p), grid.nearest(q));
}

double ergodic_value_periodic(const SuspensionFlow &model, const Observable &phi, int max_period, double step)
{
	double best = kInf;
	for (const auto &orbit : periodic_orbits(model, max_period)) {
		const double t = orbit.period * model.roof();
		const Vec3 x(orbit.base(0), orbit.base(1), 0.0);
		best = std::min(best, birkhoff_integral(model, phi, x, t, step) / t);
	}
	return best;
}

double ergodic_value_drift(const ActionKernel &kernel, int n, int threads)
{
	if (n < 1) throw std::invalid_argument("ergodic_value_drift: need n >= 1");
	Eigen::VectorXd u = apply_power(kernel, Eigen::VectorXd::Zero(kernel.grid.size()), n, threads);
	const double m1 = u.minCoeff();
	u = apply_power(kernel, u, n, threads);
	const double m2 = u.minCoeff();
	return kernel.phi_bar + (m2 - m1) / (n * kernel.h);
}

double ergodic_value_howard(const ActionKernel &kernel)
{
	return kernel.phi_bar + howard_min_cycle_mean(kernel).eta / kernel.h;
}

double ergodic_value(const SuspensionFlow &model, const Observable &phi, const ActionKernel &kernel,
					 ErgodicMethod method, const ErgodicParams &params)
{
	switch (method) {
	case ErgodicMethod::periodic_orbits:
		return ergodic_value_periodic(model, phi, params.max_period, params.quadrature_step);
	case ErgodicMethod::minplus_drift:
		return ergodic_value_drift(kernel, std::max(1, static_cast<int>(std::ceil(params.drift_horizon / kernel.h))),
								   params.threads);
	case ErgodicMethod::howard:
		return ergodic_value_howard(kernel);
	}
	throw std::invalid_argument("ergodic_value: unknown method");
}

ErgodicEstimate cross_validate(const SuspensionFlow &model, const Observable &phi, const ActionKernel &kernel,
							   const ErgodicParams &params)
{
	ErgodicEstimate e;
	e.periodic = ergodic_value(model, phi, kernel, ErgodicMethod::periodic_orbits, params);
	e.drift = ergodic_value(model, phi, kernel, ErgodicMethod::minplus_drift, params);
	e.howard = ergodic_value(model, phi, kernel, ErgodicMethod::howard, params);
	e.tolerance = params.tolerance;
	e.disagreement = std::abs(e.periodic - e.drift);
	e.consistent = e.disagreement <= e.tolerance;
	if (e.disagreement > 5 * e.tolerance) {
		std::ostringstream os;
		os << "ergodic_value: periodic-orbit estimate " << e.periodic << " and min-plus drift " << e.drift
		   << " disagree beyond 5 x tolerance " << e.tolerance;
		throw InconsistencyError(os.str());
	}
	return e;
}

WeakKamSolution weak_kam_solve(const ActionKernel &kernel, const WeakKamOptions &options)
{
	if (!(options.tol > 0)) throw std::invalid_argument("weak_kam_solve: tol must be positive");
	const Grid &grid = kernel.grid;
	const int n_a = static_cast<int>(std::ceil(3 * grid.model().diameter() / (kernel.h * grid.model().sup_norm_bound())));

	WeakKamSolution sol(GridFunction{grid});
	sol.c = kernel.c;
	sol.phi_bar = kernel.phi_bar;

	// Stage A, extended until T[v] >= v within the monotonicity tolerance.
	Eigen::VectorXd u = Eigen::VectorXd::Zero(grid.size());
	Eigen::VectorXd v = Eigen::VectorXd::Constant(grid.size(), kInf);
	int steps = 0;
	Eigen::VectorXd tv;
	while (true) {
		for (int i = 0; i < n_a; ++i) {
			u = apply_operator(kernel, u, options.threads);
			v = v.cwiseMin(u);
			++steps;
		}
		tv = apply_operator(kernel, v, options.threads);
		const double worst = (tv - v).minCoeff();
		if (worst >= -options.monotone_tol) break;
		if (steps >= options.max_iters)
			throw DriftError("weak_kam_solve: Stage A minimum is not sub-invariant; phi_bar is likely too large",
							 worst / (steps * kernel.h));
	}
	sol.stage_a_steps = steps;

	// Stage B.
	u = v;
	Eigen::VectorXd next = tv;
	for (int it = 0;; ++it) {
		const Eigen::VectorXd inc = next - u;
		const double change = inc.cwiseAbs().maxCoeff();
		const double lowest = inc.minCoeff();
		sol.residual_history.push_back(change);
		sol.increment_history.push_back(lowest);
		if (lowest < -options.monotone_tol) {
			std::ostringstream os;
			os << "weak_kam_solve: Stage-B step " << it << " decreased by " << -lowest;
			throw DriftError(os.str(), lowest / kernel.h);
		}
		if (change < options.tol) {
			sol.iterations = it;
			sol.residual = change;
			break;
		}
		if (it >= options.max_iters)
			throw NonConvergenceError("weak_kam_solve: iteration limit reached", sol.residual_history);
		u = next;
		next = apply_operator(kernel, u, options.threads);
	}
	sol.u = GridFunction(grid, u);
	sol.lipschitz = sol.u.discrete_lipschitz();
	return sol;
}

AprioriReport verify_apriori(const SuspensionFlow &model, const Observable &phi, double c, double t,
							 const AprioriOptions &options)
{
	const Grid grid(model, options.n, options.ns);
	const double h = grid.ds();
	const int steps = std::max(1, static_cast<int>(std::lround(t / h)));
	ActionKernel kernel = build_kernel(grid, phi, c, 0.0, h, options.reach_multiplier, options.threads);
	kernel = rebase(kernel, ergodic_value_howard(kernel));

	AprioriReport r;
	r.t = steps * h;
	r.slack = c * grid.diagonal();
	const double item1 = r.t * (phi.lipschitz_constant * model.diameter() + c * model.sup_norm_bound());

	std::mt19937_64 rng(options.seed);
	std::uniform_int_distribution<int> node(0, grid.size() - 1);
	const int rb = 1;
	std::uniform_int_distribution<int> shift(-rb, rb);
	auto perturb = [&](int idx) {
		return grid.offset(idx, shift(rng), shift(rng), shift(rng));
	};
	auto actions_from = [&](int p) {
		Eigen::VectorXd ind = Eigen::VectorXd::Constant(grid.size(), kInf);
		ind(p) = 0;
		return apply_power(kernel, ind, steps, options.threads);
	};
	auto record = [&](int item, double excess) {
		r.worst_excess[item] = std::max(r.worst_excess[item], excess);
		if (excess > r.slack) ++r.violations[item];
	};
	for (int s = 0; s < options.n_sources; ++s) {
		const int p = node(rng);
		const int pt = perturb(p);
		const Eigen::VectorXd ap = actions_from(p);
		const Eigen::VectorXd apt = actions_from(pt);
		const Eigen::VectorXd dp = distances_from(grid, p);
		const double d_ppt = dp(pt);
		for (int k = 0; k < options.pairs_per_source; ++k) {
			const int q = node(rng);
			const int qt = perturb(q);
			++r.n_triples;
			if (!std::isfinite(ap(q)) || !std::isfinite(ap(qt)) || !std::isfinite(apt(q))) {
				++r.unreachable;
				++r.violations[0];
				continue;
			}
			record(0, std::abs(ap(q) - c * dp(q)) - item1);
			record(1, std::abs(ap(q) - ap(qt)) - c * path_distance(grid, q, qt));
			record(2, std::abs(ap(q) - apt(q)) - c * d_ppt);
		}
	}
	r.pass = r.violations[0] == 0 && r.violations[1] == 0 && r.violations[2] == 0;
	return r;
}

SubactionCheck verify_integrated_subaction(const GridFunction &u, const Observable &phi, double phi_bar,
										   int n_orbits, double horizon, unsigned long long seed, int levels)
{
	const SuspensionFlow &m = u.grid.model();
	const double lip_u = u.discrete_lipschitz();
	const double diag = u.grid.diagonal();
	const double step = u.grid.ds() / 4;
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	SubactionCheck r;
	for (int o = 0; o < n_orbits; ++o) {
		const Vec3 x(unit(rng), unit(rng), unit(rng) * m.roof());
		for (int l = 0; l < levels; ++l) {
			const double t = horizon / std::ldexp(1.0, l);
			// Interpolation at both ends, orbit-to-node comparison of the integral, quadrature.
			const double slack = 2 * lip_u * diag + t * phi.lipschitz_constant * (diag + step);
			const double lhs = u(m.flow(x, t)) - u(x);
			const double rhs = birkhoff_integral(m, phi, x, t, step) - phi_bar * t;
			const double excess = lhs - rhs;
			++r.checks;
			r.slack = std::max(r.slack, slack);
			if (excess - slack > r.worst_excess) {
				r.worst_excess = excess - slack;
				r.witness = x;
				r.witness_time = t;
			}
			if (excess > slack) ++r.violations;
		}
	}
	r.pass = r.violations == 0;
	return r;
}

} // namespace wkam
