#pragma once

namespace bokeh {

// Threads available to a single tensor op (GEMM). 1 fixes the reduction
// order, which is what deterministic mode relies on.
// n <= 0 means one per hardware thread.
void set_num_threads(int n);
int num_threads();

}  // namespace bokeh
