#pragma once

// Umbrella header.

#include <adml/aggregate.hpp>
#include <adml/dataset.hpp>
#include <adml/error.hpp>
#include <adml/eval.hpp>
#include <adml/linalg.hpp>
#include <adml/model.hpp>
#include <adml/patch.hpp>
#include <adml/random.hpp>
#include <adml/runtime.hpp>
#include <adml/solver.hpp>
