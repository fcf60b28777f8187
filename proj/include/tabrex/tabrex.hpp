#pragma once

#include "tabrex/decimal.hpp"
#include "tabrex/error.hpp"
#include "tabrex/table.hpp"
#include "tabrex/formatter.hpp"
#include "tabrex/toolkit.hpp"
#include "tabrex/plan.hpp"
#include "tabrex/executor.hpp"
#include "tabrex/explainer.hpp"
#include "tabrex/record.hpp"
#include "tabrex/gateway.hpp"
#include "tabrex/pipeline.hpp"
#include "tabrex/harness.hpp"
