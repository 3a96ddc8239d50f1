#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace lploc {

// FNV-1a, used for determinism and freeze-contract checks.
class Digest {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }

    template <typename T>
    void update_value(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(T));
    }

    template <typename T>
    void update_span(std::span<const T> v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(v.data(), v.size_bytes());
    }

    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace lploc
