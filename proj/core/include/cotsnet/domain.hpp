#ifndef COTSNET_DOMAIN_HPP
#define COTSNET_DOMAIN_HPP

#include <stdexcept>
#include <string>

namespace cots {

enum class Domain : int { source = 0, target = 1 };

inline int domain_index(Domain d) { return static_cast<int>(d); }

inline const char* domain_name(Domain d) {
    return d == Domain::source ? "source" : "target";
}

inline Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw std::invalid_argument("unknown domain: " + s);
}

} // namespace cots

#endif
