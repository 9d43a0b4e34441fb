#pragma once

#include <string>
#include <vector>

#include "emmp/models.hpp"

namespace emmp::support {

inline const std::vector<std::size_t> kDeskObservations{0, 0, 1, 1, 0};

/// Two-state chain, binary emissions, shared unknown transition table.
inline HmmSpec desk_hmm_spec(std::size_t n = 5) {
  HmmSpec h;
  h.n = n;
  h.initial = {0.6, 0.4};
  h.emission = {0.9, 0.1, 0.2, 0.8};
  return h;
}

inline ParamAssignment desk_init() { return {{"A", CategoricalValue{2, 2, {0.7, 0.3, 0.4, 0.6}}}}; }

inline std::string data_path(const std::string& name) { return std::string(EMMP_DATA_DIR) + "/" + name; }

}  // namespace emmp::support
