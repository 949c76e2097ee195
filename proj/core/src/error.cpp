#include "difflens/error.hpp"

namespace difflens {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "io";
        case ErrorKind::validation: return "validation";
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::not_computed: return "not_computed";
        case ErrorKind::conflict: return "conflict";
    }
    return "unknown";
}

}  // namespace difflens
