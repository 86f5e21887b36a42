#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace wkam::detail {

// Runs body(chunk, begin, end) over [0, n) split into `chunks` contiguous ranges, one thread each.
template <typename Fn>
void parallel_chunks(int n, int chunks, const Fn &body)
{
	auto range = [&](int t) { return static_cast<int>(static_cast<long long>(n) * t / chunks); };
	if (chunks == 1) {
		body(0, 0, n);
		return;
	}
	std::vector<std::thread> pool;
	for (int t = 0; t < chunks; ++t) pool.emplace_back([&body, &range, t] { body(t, range(t), range(t + 1)); });
	for (auto &th : pool) th.join();
}

template <typename Fn>
void parallel_for(int n, int threads, const Fn &body)
{
	parallel_chunks(n, std::max(1, std::min(threads, n)), [&body](int, int b, int e) { body(b, e); });
}

} // namespace wkam::detail
