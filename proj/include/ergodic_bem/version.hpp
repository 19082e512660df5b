#pragma once

namespace ergodic_bem {

// Build identifier (git describe at configure time) embedded in every output
// file for provenance.
const char* build_id();

}  // namespace ergodic_bem
