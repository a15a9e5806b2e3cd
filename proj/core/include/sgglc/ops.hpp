#pragma once

#include "sgglc/ops_conv.hpp"
#include "sgglc/ops_core.hpp"
#include "sgglc/ops_resize.hpp"
