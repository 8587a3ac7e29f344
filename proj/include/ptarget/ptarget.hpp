#pragma once

#include "ptarget/brute_force.hpp"
#include "ptarget/data.hpp"
#include "ptarget/error.hpp"
#include "ptarget/evaluation.hpp"
#include "ptarget/heterogeneity.hpp"
#include "ptarget/learners.hpp"
#include "ptarget/linalg.hpp"
#include "ptarget/matching.hpp"
#include "ptarget/nuisance.hpp"
#include "ptarget/parallel.hpp"
#include "ptarget/rng.hpp"
#include "ptarget/rule.hpp"
#include "ptarget/scores.hpp"
#include "ptarget/synthetic.hpp"
#include "ptarget/validation.hpp"
