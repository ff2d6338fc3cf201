#ifndef CCL_CCL_HPP
#define CCL_CCL_HPP

// Everything in one include.

#include "ccl/backbone.hpp"
#include "ccl/ccnet.hpp"
#include "ccl/checkpoint.hpp"
#include "ccl/color_space.hpp"
#include "ccl/commands.hpp"
#include "ccl/data.hpp"
#include "ccl/hrnet.hpp"
#include "ccl/image_io.hpp"
#include "ccl/losses.hpp"
#include "ccl/metrics.hpp"
#include "ccl/pipeline.hpp"
#include "ccl/training.hpp"

#endif  // CCL_CCL_HPP
