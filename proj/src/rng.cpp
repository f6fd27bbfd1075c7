#include "pcq/rng.hpp"

#include "pcq/hash.hpp"

namespace pcq {

std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
    Fnv1a h;
    h.update_value(root);
    h.update(name);
    h.update_value(index);
    return mix64(h.digest());
}

}  // namespace pcq
