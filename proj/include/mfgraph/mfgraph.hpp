#pragma once

#include "mfgraph/common.hpp"
#include "mfgraph/rng.hpp"
#include "mfgraph/parallel.hpp"
#include "mfgraph/graph.hpp"
#include "mfgraph/trees.hpp"
#include "mfgraph/laws.hpp"
#include "mfgraph/kernel.hpp"
#include "mfgraph/pde.hpp"
#include "mfgraph/particles.hpp"
#include "mfgraph/observables.hpp"
#include "mfgraph/rearrange.hpp"
#include "mfgraph/metrics.hpp"
#include "mfgraph/config.hpp"
#include "mfgraph/commands.hpp"
