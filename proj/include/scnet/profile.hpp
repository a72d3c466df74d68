#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scnet {

// full: the published architecture sizes (2048 points, 1024-d latent).
// toy: every width divided by 8 and 256 points, for desk-scale runs.
enum class Profile { toy, full };

inline std::size_t profile_points(Profile p) { return p == Profile::full ? 2048 : 256; }

inline std::string to_string(Profile p) { return p == Profile::full ? "full" : "toy"; }

inline Profile profile_from_string(const std::string& s) {
  if (s == "full") return Profile::full;
  if (s == "toy") return Profile::toy;
  throw std::invalid_argument("unknown profile '" + s + "' (expected toy or full)");
}

}  // namespace scnet
