#pragma once

// Umbrella header.

#include "aina/align.hpp"
#include "aina/autodiff.hpp"
#include "aina/bundle.hpp"
#include "aina/common.hpp"
#include "aina/crc32.hpp"
#include "aina/geom.hpp"
#include "aina/kin.hpp"
#include "aina/policy.hpp"
#include "aina/rng.hpp"
#include "aina/rollout.hpp"
#include "aina/synth.hpp"
#include "aina/threading.hpp"
#include "aina/trajectory.hpp"
#include "aina/trajectory_io.hpp"
#include "aina/vn.hpp"
