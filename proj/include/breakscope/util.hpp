#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace breakscope {

// Error families map onto CLI exit codes (2/3/4).
class input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class convergence_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Deterministic, splittable RNG. A splitmix64 stream: portable across
/// platforms, unlike std distributions, so every seeded result is
/// reproducible byte for byte.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling, n >= 1.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller; second draw of each pair is cached.
    double normal();

    /// Derive an independent substream seed (counter-based splitting).
    static std::uint64_t child_seed(std::uint64_t master, std::uint64_t index);

    /// Mix a string into a seed (used to give each data series a stable
    /// substream regardless of which series are selected for a run).
    static std::uint64_t mix_string(std::uint64_t seed, const std::string& s);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Run fn(i) for i in [0, n). jobs <= 1 runs inline; results must be written
/// to caller-indexed slots so the outcome is independent of scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Fisher-Yates shuffle driven by Rng::below (fully specified, portable).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

std::string lower(std::string s);
std::string trim(const std::string& s);

/// Parse 0/1/true/false/yes/no; `what` names the field in the error.
bool parse_bool(const std::string& s, const std::string& what);

/// SHA-256 of a file's bytes as a lowercase hex string.
std::string sha256_file(const std::string& path);

}  // namespace breakscope
