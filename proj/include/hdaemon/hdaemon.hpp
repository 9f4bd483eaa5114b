#pragma once

#include "hdaemon/errors.hpp"
#include "hdaemon/model.hpp"
#include "hdaemon/numerics.hpp"
#include "hdaemon/classical.hpp"
#include "hdaemon/ensemble.hpp"
#include "hdaemon/phase_space.hpp"
#include "hdaemon/spectrum.hpp"
#include "hdaemon/quantum.hpp"
#include "hdaemon/lz.hpp"
#include "hdaemon/entropy.hpp"
#include "hdaemon/io.hpp"
#include "hdaemon/config.hpp"
#include "hdaemon/cli.hpp"
