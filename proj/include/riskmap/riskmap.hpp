#pragma once

#include "riskmap/errors.hpp"
#include "riskmap/eval.hpp"
#include "riskmap/graph.hpp"
#include "riskmap/inference.hpp"
#include "riskmap/init.hpp"
#include "riskmap/io.hpp"
#include "riskmap/model.hpp"
#include "riskmap/parallel.hpp"
#include "riskmap/simulate.hpp"
