#include "resdiff/rng.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace resdiff {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                             std::uint64_t c) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ splitmix64(a + 0x1234567ULL));
    h = splitmix64(h ^ splitmix64(b + 0x89abcdefULL));
    h = splitmix64(h ^ splitmix64(c + 0x13579bdfULL));
    return h;
}

void Rng::fill_normal(double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = nd_(eng_);
}

Eigen::MatrixXd Rng::normals(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    fill_normal(m.data(), m.size());
    return m;
}

Eigen::VectorXd Rng::normals(Eigen::Index n) {
    Eigen::VectorXd v(n);
    fill_normal(v.data(), n);
    return v;
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                    next.store(n);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace resdiff
