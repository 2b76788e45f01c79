#pragma once

#include "uac/core.hpp"
#include "uac/model.hpp"
#include "uac/projection.hpp"
#include "uac/lyapunov.hpp"
#include "uac/metric.hpp"
#include "uac/geodesic.hpp"
#include "uac/contraction.hpp"
#include "uac/fit.hpp"
#include "uac/certify.hpp"
#include "uac/control.hpp"
#include "uac/integrate.hpp"
#include "uac/reference.hpp"
#include "uac/simulate.hpp"
#include "uac/io.hpp"
#include "uac/experiment/config.hpp"
#include "uac/experiment/batch.hpp"
