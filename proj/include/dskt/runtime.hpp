#pragma once

namespace dskt {

// Number of worker threads for the OpenMP kernels. Honours the DSKT_THREADS
// environment variable (values < 1 are ignored); defaults to the OpenMP
// runtime's own maximum.
int worker_threads();

}  // namespace dskt
