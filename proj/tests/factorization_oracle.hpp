#pragma once

#include <functional>
#include <set>
#include <vector>

namespace wkam::test {

using Splitting = std::vector<int>;

// Splitting conditions on blocks [i_{k-1}, i_k): heads are distinct, every inner block closes a loop,
// and the last block closes on x_N (or on x_{N-1} when relaxed).
inline bool oracle_valid(const std::vector<int> &x, const Splitting &idx, bool relaxed)
{
	const int n = static_cast<int>(x.size()) - 1, r = static_cast<int>(idx.size()) - 1;
	if (r < 1 || idx.front() != 0 || idx.back() != n) return false;
	std::set<int> heads;
	for (int k = 0; k < r; ++k)
		if (!heads.insert(x[idx[k]]).second) return false;
	for (int k = 1; k <= r; ++k) {
		const int first = idx[k - 1], last = idx[k] - 1;
		if (last < first) return false;
		if (last == first) continue;
		if (k < r) {
			if (x[last] != x[first]) return false;
		} else if (x[n] != x[first] && !(relaxed && x[last] == x[first])) {
			return false;
		}
	}
	return true;
}

// Every valid splitting, by depth-first growth of the index list.
inline std::set<Splitting> oracle_splittings(const std::vector<int> &x, bool relaxed)
{
	const int n = static_cast<int>(x.size()) - 1;
	std::set<Splitting> out;
	Splitting cur{0};
	std::function<void(int)> grow = [&](int from) {
		for (int next = from + 1; next <= n; ++next) {
			cur.push_back(next);
			if (next == n) {
				if (oracle_valid(x, cur, relaxed)) out.insert(cur);
			} else {
				grow(next);
			}
			cur.pop_back();
		}
	};
	grow(0);
	return out;
}

} // namespace wkam::test
