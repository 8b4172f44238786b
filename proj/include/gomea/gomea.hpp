#pragma once

#include "gomea/bench.hpp"
#include "gomea/conditional.hpp"
#include "gomea/fos.hpp"
#include "gomea/graph.hpp"
#include "gomea/linkage_learning.hpp"
#include "gomea/optimizer.hpp"
#include "gomea/problems.hpp"
#include "gomea/random.hpp"
#include "gomea/sampler.hpp"
