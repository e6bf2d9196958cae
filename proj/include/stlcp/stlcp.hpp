#pragma once

#include "stlcp/autodiff.hpp"
#include "stlcp/conformal.hpp"
#include "stlcp/error.hpp"
#include "stlcp/evaluation.hpp"
#include "stlcp/formula.hpp"
#include "stlcp/formula_io.hpp"
#include "stlcp/generators.hpp"
#include "stlcp/nonconformity.hpp"
#include "stlcp/rng.hpp"
#include "stlcp/signal.hpp"
#include "stlcp/smooth.hpp"
#include "stlcp/templates.hpp"
#include "stlcp/training.hpp"
