#include "cgpnas/rng.hpp"

#include <sstream>

namespace cgpnas {

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

RngStream RngStream::deserialize(const std::string& text) {
  RngStream out(0);
  std::istringstream is(text);
  is >> out.engine_;
  if (is.fail()) throw std::invalid_argument("RngStream: malformed engine state");
  return out;
}

}  // namespace cgpnas
