#pragma once

#include "ecnn/cascade.hpp"
#include "ecnn/dataset.hpp"
#include "ecnn/dtree.hpp"
#include "ecnn/error.hpp"
#include "ecnn/gmdh.hpp"
#include "ecnn/harness.hpp"
#include "ecnn/io.hpp"
#include "ecnn/projection.hpp"
#include "ecnn/random.hpp"
