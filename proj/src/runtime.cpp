#include "bokeh/runtime.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <thread>

namespace bokeh {

void set_num_threads(int n) {
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  Eigen::setNbThreads(std::max(1, n));
}

int num_threads() { return Eigen::nbThreads(); }

}  // namespace bokeh
