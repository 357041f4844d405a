#pragma once

#include "covexp/calculus.hpp"
#include "covexp/distributions.hpp"
#include "covexp/errors.hpp"
#include "covexp/expansion.hpp"
#include "covexp/oracle.hpp"
#include "covexp/stein.hpp"
#include "covexp/weights.hpp"
