#pragma once

#include "cammarl/conformal/conformal_model.hpp"
#include "cammarl/conformal/raps.hpp"
#include "cammarl/env/registry.hpp"
#include "cammarl/env/trajectory.hpp"
#include "cammarl/modeling.hpp"
#include "cammarl/nn/mlp.hpp"
#include "cammarl/ppo/ppo.hpp"
#include "cammarl/rng.hpp"
#include "cammarl/runner/config.hpp"
#include "cammarl/runner/experiment.hpp"
#include "cammarl/runner/metrics.hpp"
#include "cammarl/trainer.hpp"
