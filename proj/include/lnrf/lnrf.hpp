#pragma once

#include "lnrf/common.hpp"
#include "lnrf/config.hpp"
#include "lnrf/field/blob_scene.hpp"
#include "lnrf/field/camera.hpp"
#include "lnrf/field/field.hpp"
#include "lnrf/field/render.hpp"
#include "lnrf/geometry/bvh.hpp"
#include "lnrf/geometry/mesh.hpp"
#include "lnrf/geometry/primitives.hpp"
#include "lnrf/geometry/triangle.hpp"
#include "lnrf/guidance/bridge.hpp"
#include "lnrf/guidance/denoiser.hpp"
#include "lnrf/guidance/schedule.hpp"
#include "lnrf/guidance/sds.hpp"
#include "lnrf/image.hpp"
#include "lnrf/objectives.hpp"
#include "lnrf/paint/paint.hpp"
#include "lnrf/paint/raster.hpp"
#include "lnrf/refine/adapter.hpp"
#include "lnrf/refine/refine.hpp"
#include "lnrf/trainer/adam.hpp"
#include "lnrf/trainer/checkpoint.hpp"
#include "lnrf/trainer/field_optimizer.hpp"
#include "lnrf/trainer/marching_cubes.hpp"
#include "lnrf/trainer/tensor_file.hpp"
#include "lnrf/trainer/trainer.hpp"
