#pragma once

#include "voxdiff/codec.hpp"
#include "voxdiff/condition.hpp"
#include "voxdiff/denoiser.hpp"
#include "voxdiff/error.hpp"
#include "voxdiff/evalkit.hpp"
#include "voxdiff/latent.hpp"
#include "voxdiff/pipeline.hpp"
#include "voxdiff/postprocess.hpp"
#include "voxdiff/random.hpp"
#include "voxdiff/sampler.hpp"
#include "voxdiff/schedule.hpp"
#include "voxdiff/volume.hpp"
#include "voxdiff/volume_io.hpp"
