#pragma once

// Umbrella header.

#include "mindbench/agents.hpp"
#include "mindbench/cli.hpp"
#include "mindbench/config.hpp"
#include "mindbench/core.hpp"
#include "mindbench/dialog.hpp"
#include "mindbench/errors.hpp"
#include "mindbench/gateway.hpp"
#include "mindbench/metrics.hpp"
#include "mindbench/pipeline.hpp"
#include "mindbench/prompts.hpp"
#include "mindbench/psychometrics.hpp"
#include "mindbench/records.hpp"
#include "mindbench/replay.hpp"
#include "mindbench/report.hpp"
#include "mindbench/safeguard.hpp"
#include "mindbench/trainer.hpp"
#include "mindbench/util.hpp"
