#include "trunet/io/sample.hpp"

#include "trunet/errors.hpp"

namespace trunet {

void validate_sample(const Sample& s) {
  const auto& is = s.image.shape();
  const auto& ms = s.mask.shape();
  if (is.size() != 3 || is[0] != 3) throw DataError(s.id + ": image must be (3,H,W), got " + shape_str(is));
  if (ms.size() != 3 || ms[0] != 1) throw DataError(s.id + ": mask must be (1,H,W), got " + shape_str(ms));
  if (is[1] != ms[1] || is[2] != ms[2]) {
    throw DataError(s.id + ": image " + shape_str(is) + " and mask " + shape_str(ms) + " differ in size");
  }
  for (float v : s.mask.data()) {
    if (v != 0.0f && v != 1.0f) throw DataError(s.id + ": mask is not binary");
  }
}

}  // namespace trunet
