#pragma once

#include "opal/config.hpp"
#include "opal/errors.hpp"
#include "opal/eval.hpp"
#include "opal/features.hpp"
#include "opal/fusion.hpp"
#include "opal/io.hpp"
#include "opal/library.hpp"
#include "opal/parallel.hpp"
#include "opal/patchmatch.hpp"
#include "opal/phantom.hpp"
#include "opal/rng.hpp"
#include "opal/roi.hpp"
#include "opal/ssd.hpp"
#include "opal/version.hpp"
#include "opal/volume.hpp"
