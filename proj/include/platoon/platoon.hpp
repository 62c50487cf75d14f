#pragma once

#include "platoon/comms.hpp"
#include "platoon/controller.hpp"
#include "platoon/core_types.hpp"
#include "platoon/dynamics.hpp"
#include "platoon/gap_approximation.hpp"
#include "platoon/lane_map.hpp"
#include "platoon/lateral_control.hpp"
#include "platoon/localization.hpp"
#include "platoon/scenario.hpp"
#include "platoon/sensors.hpp"
#include "platoon/simulation.hpp"
