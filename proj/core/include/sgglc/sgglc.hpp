#pragma once

// Umbrella header.

#include "sgglc/common.hpp"
#include "sgglc/config.hpp"
#include "sgglc/image.hpp"
#include "sgglc/metrics.hpp"
#include "sgglc/model.hpp"
#include "sgglc/ops.hpp"
#include "sgglc/prior.hpp"
#include "sgglc/sgt_io.hpp"
#include "sgglc/train.hpp"
