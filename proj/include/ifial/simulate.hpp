#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifial/dataset.hpp"

namespace ifial {

enum class Mechanism : std::uint8_t { none, mcar, mnar };

std::string mechanism_name(Mechanism m);
Mechanism parse_mechanism(const std::string& s);

struct MissingSpec {
  Mechanism mechanism = Mechanism::mcar;
  double rate = 0.0;               // strictly in (0,1)
  std::uint64_t seed = 0;
  std::vector<int> target_features;  // empty = all features
};

// Masks exactly round(rate*n) cells per target feature. MCAR picks rows
// uniformly; MNAR self-censors: the largest numerical values go missing
// (seeded tie-break), categoricals drop the most frequent category first and
// overflow into the next most frequent. Labels are never touched.
Dataset inject(const Dataset& data, const MissingSpec& spec);

}  // namespace ifial
