#pragma once

#include "toolplanner/error.hpp"
#include "toolplanner/util.hpp"
#include "toolplanner/provider.hpp"
#include "toolplanner/prompts.hpp"
#include "toolplanner/catalog.hpp"
#include "toolplanner/embedding.hpp"
#include "toolplanner/clustering.hpp"
#include "toolplanner/plan.hpp"
#include "toolplanner/planning.hpp"
#include "toolplanner/env.hpp"
#include "toolplanner/trace.hpp"
#include "toolplanner/explorer.hpp"
#include "toolplanner/simenv.hpp"
#include "toolplanner/simmodel.hpp"
#include "toolplanner/baselines.hpp"
#include "toolplanner/evaluation.hpp"
#include "toolplanner/experiments.hpp"
