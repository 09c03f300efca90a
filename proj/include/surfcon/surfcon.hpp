#pragma once

#include "surfcon/camera.hpp"
#include "surfcon/geometry.hpp"
#include "surfcon/grid.hpp"
#include "surfcon/mv_loss.hpp"
#include "surfcon/optim.hpp"
#include "surfcon/partition.hpp"
#include "surfcon/pipeline.hpp"
#include "surfcon/rng.hpp"
#include "surfcon/sv_loss.hpp"
#include "surfcon/synth.hpp"
