#pragma once

#include "dynreg/errors.hpp"
#include "dynreg/vec.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/losses.hpp"
#include "dynreg/variability.hpp"
#include "dynreg/implicit_solve.hpp"
#include "dynreg/prox_oracle.hpp"
#include "dynreg/algorithms.hpp"
#include "dynreg/meta.hpp"
#include "dynreg/envs.hpp"
#include "dynreg/trace.hpp"
#include "dynreg/bounds.hpp"
#include "dynreg/report.hpp"
#include "dynreg/experiment.hpp"
