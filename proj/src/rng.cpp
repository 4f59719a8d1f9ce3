#include "facekit/rng.hpp"

#include <sstream>

#include "facekit/errors.hpp"

namespace facekit {

std::string Rng::serialize_state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
}

void Rng::restore_state(const std::string& text) {
    std::istringstream is(text);
    is >> gen_;
    if (is.fail()) throw ValidationError("rng: malformed generator state");
}

}  // namespace facekit
