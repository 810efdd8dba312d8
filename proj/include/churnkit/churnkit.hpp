#pragma once

#include "churnkit/causal.hpp"
#include "churnkit/data.hpp"
#include "churnkit/ensemble.hpp"
#include "churnkit/error.hpp"
#include "churnkit/explain.hpp"
#include "churnkit/metrics.hpp"
#include "churnkit/model.hpp"
#include "churnkit/rng.hpp"
#include "churnkit/sampling.hpp"
#include "churnkit/synth.hpp"
#include "churnkit/table.hpp"
