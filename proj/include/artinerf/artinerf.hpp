// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/body_io.hpp"
#include "artinerf/body_model.hpp"
#include "artinerf/camera.hpp"
#include "artinerf/canonicalize.hpp"
#include "artinerf/checkpoint.hpp"
#include "artinerf/commands.hpp"
#include "artinerf/config.hpp"
#include "artinerf/dataset.hpp"
#include "artinerf/encoding.hpp"
#include "artinerf/image.hpp"
#include "artinerf/losses.hpp"
#include "artinerf/metrics.hpp"
#include "artinerf/mlp.hpp"
#include "artinerf/networks.hpp"
#include "artinerf/renderer.hpp"
#include "artinerf/synthetic.hpp"
#include "artinerf/trainer.hpp"
#include "artinerf/voxel_grid.hpp"
#include "artinerf/volume_io.hpp"
