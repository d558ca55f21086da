#pragma once

// Everything except the HTTP layer, which pulls in httplib.
#include "subtab/baselines.hpp"
#include "subtab/binning.hpp"
#include "subtab/embedding.hpp"
#include "subtab/error.hpp"
#include "subtab/evaluation.hpp"
#include "subtab/exact_opt.hpp"
#include "subtab/kmeans.hpp"
#include "subtab/metrics.hpp"
#include "subtab/pipeline.hpp"
#include "subtab/rules.hpp"
#include "subtab/selection.hpp"
#include "subtab/table.hpp"
