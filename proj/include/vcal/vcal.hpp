#pragma once

#include "vcal/types.hpp"
#include "vcal/dataset.hpp"
#include "vcal/prompting.hpp"
#include "vcal/parsing.hpp"
#include "vcal/scoring.hpp"
#include "vcal/metrics.hpp"
#include "vcal/client.hpp"
#include "vcal/runner.hpp"
#include "vcal/report.hpp"
