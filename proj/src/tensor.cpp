#include "railseg/tensor.hpp"

#include <cmath>

namespace railseg {

void init_uniform_fan_in(Parameter& p, int fan_in, Rng& rng) {
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(double(fan_in)) : 1.0;
    for (double& v : p.value.data) v = rng.uniform(-bound, bound);
}

}  // namespace railseg
