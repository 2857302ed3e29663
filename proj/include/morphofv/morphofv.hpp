#pragma once

#include "morphofv/error.hpp"
#include "morphofv/fisher.hpp"
#include "morphofv/fusion.hpp"
#include "morphofv/fvc.hpp"
#include "morphofv/gmm.hpp"
#include "morphofv/manifest.hpp"
#include "morphofv/metrics.hpp"
#include "morphofv/model_io.hpp"
#include "morphofv/pca.hpp"
#include "morphofv/phoc.hpp"
#include "morphofv/pipeline.hpp"
#include "morphofv/rng.hpp"
#include "morphofv/synthetic.hpp"
