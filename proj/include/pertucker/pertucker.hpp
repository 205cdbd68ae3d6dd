#pragma once

// Umbrella header.

#include "pertucker/applications.hpp"
#include "pertucker/bench.hpp"
#include "pertucker/container.hpp"
#include "pertucker/engine.hpp"
#include "pertucker/errors.hpp"
#include "pertucker/linalg.hpp"
#include "pertucker/metrics.hpp"
#include "pertucker/parallel.hpp"
#include "pertucker/pten.hpp"
#include "pertucker/random.hpp"
#include "pertucker/simgen.hpp"
#include "pertucker/tensor.hpp"
#include "pertucker/tucker.hpp"
#include "pertucker/version.hpp"
