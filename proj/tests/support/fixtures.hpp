#pragma once

#include <vector>

#include "fedsnt/core.hpp"
#include "oracles.hpp"

namespace testing_support {

inline std::vector<fedsnt::ClientUpdate> to_updates(const oracle::Matrix& rows,
                                                    std::vector<std::size_t> sizes = {}) {
  std::vector<fedsnt::ClientUpdate> out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    fedsnt::ClientUpdate u;
    u.client_id = static_cast<fedsnt::ClientId>(k);
    u.params = fedsnt::ParameterVector(rows[k]);
    u.sample_count = sizes.empty() ? 1 : sizes[k];
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace testing_support
