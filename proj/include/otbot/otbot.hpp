#pragma once

// Everything in one include.

#include "otbot/types.hpp"
#include "otbot/config.hpp"
#include "otbot/params.hpp"
#include "otbot/diagnostics.hpp"
#include "otbot/kinematics.hpp"
#include "otbot/inertia.hpp"
#include "otbot/dynamics.hpp"
#include "otbot/ode.hpp"
#include "otbot/simulator.hpp"
#include "otbot/csv.hpp"
#include "otbot/least_squares.hpp"
#include "otbot/identification.hpp"
#include "otbot/interval.hpp"
#include "otbot/control.hpp"
#include "otbot/scenarios.hpp"
