#pragma once

#include "smib/certificate.hpp"
#include "smib/config.hpp"
#include "smib/eig4.hpp"
#include "smib/error.hpp"
#include "smib/linearization.hpp"
#include "smib/model.hpp"
#include "smib/pipeline.hpp"
#include "smib/simulator.hpp"
#include "smib/steady_state.hpp"
#include "smib/trajectory.hpp"
