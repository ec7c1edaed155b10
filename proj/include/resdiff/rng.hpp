#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace resdiff {

std::uint64_t splitmix64(std::uint64_t x);

// Seed for the substream identified by (seed, a, b, c). Order-independent:
// a Monte Carlo draw only depends on its own coordinates.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                             std::uint64_t c = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed = 1) : eng_(seed) {}
    static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                         std::uint64_t c = 0) {
        return Rng(substream_seed(seed, a, b, c));
    }

    double normal() { return nd_(eng_); }
    double uniform() { return boost::random::uniform_01<double>()(eng_); }
    std::uint64_t next_u64() { return eng_(); }

    Eigen::MatrixXd normals(Eigen::Index rows, Eigen::Index cols);
    Eigen::VectorXd normals(Eigen::Index n);
    void fill_normal(double* p, Eigen::Index n);

    boost::random::mt19937_64& engine() { return eng_; }

private:
    boost::random::mt19937_64 eng_;
    boost::random::normal_distribution<double> nd_;
};

// Runs body(i) for i in [0, n) over `threads` workers. Results must be written
// to per-index slots so they do not depend on the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

}  // namespace resdiff
