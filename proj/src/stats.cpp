/*
 * Copyright 2026 The LIVAR Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "livar/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace livar {

double percentile_rank(double value, std::span<const double> population) {
  if (population.empty()) {
    throw std::invalid_argument("percentile_rank: empty population");
  }
  std::size_t below = 0;
  std::size_t equal = 0;
  for (double v : population) {
    if (v < value) {
      ++below;
    } else if (v == value) {
      ++equal;
    }
  }
  return 100.0 * (static_cast<double>(below) + 0.5 * static_cast<double>(equal)) /
         static_cast<double>(population.size());
}

double mean(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("mean: empty input");
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) {
    return 0.0;
  }
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) {
    ss += (v - mu) * (v - mu);
  }
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace livar
