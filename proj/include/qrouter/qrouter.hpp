#pragma once

#include "qrouter/circuit.hpp"
#include "qrouter/core.hpp"
#include "qrouter/dynamics.hpp"
#include "qrouter/experiments.hpp"
#include "qrouter/fidelity.hpp"
#include "qrouter/router.hpp"
