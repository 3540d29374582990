#pragma once

// Umbrella header. The command-line front end lives in cli.hpp.
#include "assignment.hpp"
#include "core.hpp"
#include "fitdemo.hpp"
#include "geometry.hpp"
#include "gradcheck.hpp"
#include "io.hpp"
#include "lane_attention.hpp"
#include "linalg.hpp"
#include "losses.hpp"
#include "matching.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "predictor.hpp"
#include "preprocess.hpp"
#include "refine.hpp"
#include "scenegen.hpp"
#include "svg.hpp"
