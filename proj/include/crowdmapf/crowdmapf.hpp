#pragma once

#include "checkpoint.hpp"
#include "config.hpp"
#include "curriculum.hpp"
#include "eval.hpp"
#include "expert.hpp"
#include "grid.hpp"
#include "oracles.hpp"
#include "policy.hpp"
#include "reward.hpp"
#include "scenario.hpp"
#include "selfcheck.hpp"
#include "train.hpp"
#include "world.hpp"
