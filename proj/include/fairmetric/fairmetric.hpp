#pragma once

#include "fairmetric/commands.hpp"
#include "fairmetric/config.hpp"
#include "fairmetric/constraints.hpp"
#include "fairmetric/core.hpp"
#include "fairmetric/data_ingest.hpp"
#include "fairmetric/error.hpp"
#include "fairmetric/evaluation.hpp"
#include "fairmetric/learners.hpp"
#include "fairmetric/numerics.hpp"
#include "fairmetric/rng.hpp"
#include "fairmetric/survey_report.hpp"
