#pragma once

#include "recon/core.hpp"
#include "recon/grid.hpp"
#include "recon/io.hpp"
#include "recon/kdtree.hpp"
#include "recon/mesh.hpp"
#include "recon/metrics.hpp"
#include "recon/phantom.hpp"
#include "recon/pipeline.hpp"
#include "recon/registration.hpp"
#include "recon/report.hpp"
#include "recon/rigid.hpp"
#include "recon/segmentation.hpp"
#include "recon/surface.hpp"
#include "recon/voxel_align.hpp"
#include "recon/voxelize.hpp"
