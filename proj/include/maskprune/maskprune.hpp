#pragma once

#include "maskprune/error.hpp"
#include "maskprune/numerics.hpp"
#include "maskprune/model.hpp"
#include "maskprune/decoder.hpp"
#include "maskprune/pruning.hpp"
#include "maskprune/inference.hpp"
#include "maskprune/analysis.hpp"
#include "maskprune/harness.hpp"
#include "maskprune/report.hpp"
