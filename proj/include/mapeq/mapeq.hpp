#pragma once

#include "mapeq/autodiff.hpp"
#include "mapeq/codelength.hpp"
#include "mapeq/encoder.hpp"
#include "mapeq/experiment.hpp"
#include "mapeq/flow.hpp"
#include "mapeq/graph.hpp"
#include "mapeq/loss.hpp"
#include "mapeq/metrics.hpp"
#include "mapeq/train.hpp"
