#pragma once

#include "obsbias/config.hpp"
#include "obsbias/cox.hpp"
#include "obsbias/csv.hpp"
#include "obsbias/dataset.hpp"
#include "obsbias/error.hpp"
#include "obsbias/evalue.hpp"
#include "obsbias/glm.hpp"
#include "obsbias/pipeline.hpp"
#include "obsbias/plot.hpp"
#include "obsbias/presets.hpp"
#include "obsbias/results.hpp"
#include "obsbias/sha256.hpp"
#include "obsbias/stats.hpp"
#include "obsbias/synth.hpp"
#include "obsbias/version.hpp"
