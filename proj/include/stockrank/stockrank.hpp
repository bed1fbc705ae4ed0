#pragma once

#include "stockrank/backtest.hpp"
#include "stockrank/config.hpp"
#include "stockrank/csv.hpp"
#include "stockrank/error.hpp"
#include "stockrank/feature_matrix.hpp"
#include "stockrank/features.hpp"
#include "stockrank/linear_models.hpp"
#include "stockrank/metrics.hpp"
#include "stockrank/panel.hpp"
#include "stockrank/pca.hpp"
#include "stockrank/pipeline.hpp"
#include "stockrank/ranking.hpp"
#include "stockrank/selection.hpp"
#include "stockrank/synthgen.hpp"
#include "stockrank/target_transform.hpp"
