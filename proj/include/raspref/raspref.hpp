#pragma once

// Umbrella header. Pulls in the live HTTP backend too; include individual
// headers instead if you want to stay offline-only.

#include "raspref/domain.hpp"
#include "raspref/embed_index.hpp"
#include "raspref/errors.hpp"
#include "raspref/eval_harness.hpp"
#include "raspref/live_backend.hpp"
#include "raspref/model_backend.hpp"
#include "raspref/prompt_engine.hpp"
#include "raspref/refine_loop.hpp"
#include "raspref/scoring.hpp"
#include "raspref/text.hpp"
#include "raspref/trajectory_store.hpp"
