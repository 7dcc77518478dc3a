#pragma once

#include "gbmo/bench.hpp"
#include "gbmo/booster.hpp"
#include "gbmo/core.hpp"
#include "gbmo/data.hpp"
#include "gbmo/histogram.hpp"
#include "gbmo/linalg.hpp"
#include "gbmo/losses.hpp"
#include "gbmo/model_io.hpp"
#include "gbmo/split.hpp"
#include "gbmo/stats.hpp"
#include "gbmo/synth.hpp"
#include "gbmo/topk.hpp"
#include "gbmo/tree.hpp"
