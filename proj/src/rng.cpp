#include "tobit/rng.hpp"

#include <vector>

#include "tobit/numcore.hpp"

namespace tobit::rng {

Engine make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (key.size() + 1) + 1);
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (std::uint64_t k : key) push(k);
    words.push_back(static_cast<std::uint32_t>(key.size()));
    std::seed_seq seq(words.begin(), words.end());
    return Engine(seq);
}

double uniform_open(Engine& eng) {
    // 53 random bits, shifted by half an ulp so neither endpoint occurs.
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Engine& eng) { return numcore::std_normal_quantile(uniform_open(eng)); }

}  // namespace tobit::rng
