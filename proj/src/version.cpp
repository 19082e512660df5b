#include "ergodic_bem/version.hpp"

#ifndef ERGODIC_BEM_BUILD_ID
#define ERGODIC_BEM_BUILD_ID "unknown"
#endif

namespace ergodic_bem {

const char* build_id() { return ERGODIC_BEM_BUILD_ID; }

}  // namespace ergodic_bem
