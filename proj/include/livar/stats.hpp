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

#ifndef LIVAR_STATS_HPP_
#define LIVAR_STATS_HPP_

#include <span>

namespace livar {

/// Mid-rank percentile of `value` within `population`, in [0, 100]:
///   100 * (count strictly below + 0.5 * count equal) / population size.
/// The mid-rank convention makes ties deterministic and the result
/// invariant under any positive rescaling of the whole population.
/// Throws std::invalid_argument on an empty population.
double percentile_rank(double value, std::span<const double> population);

double mean(std::span<const double> values);

/// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
double sample_stddev(std::span<const double> values);

}  // namespace livar

#endif  // LIVAR_STATS_HPP_
