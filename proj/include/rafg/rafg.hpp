#pragma once

// Umbrella header for the core library. The HTTP transport lives in
// rafg/http_gateway.hpp and the CLI surface in rafg/cli.hpp; both pull in
// heavier third-party headers and are included only where needed.

#include "rafg/engine.hpp"
#include "rafg/error.hpp"
#include "rafg/fexpr.hpp"
#include "rafg/knowledge.hpp"
#include "rafg/learners.hpp"
#include "rafg/metrics.hpp"
#include "rafg/oracle.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"
