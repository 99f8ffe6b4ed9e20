#pragma once

#include <map>
#include <string>

#include "dskt/optim.hpp"
#include "dskt/tensor.hpp"

namespace dskt {

// Single-file tensor container. Layout:
//   "DSKT1\n"
//   one line per metadata entry:  "meta <key> <value...>"
//   one line per tensor:          "tensor <name> <ndim> <d0..> <byte-offset>"
//   "data\n"
//   raw little-endian double arrays at the stated offsets (relative to the
//   first byte after the data marker).
// Round-trips are bit-exact.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParamStore params;
};

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dskt
