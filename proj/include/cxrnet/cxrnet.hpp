#pragma once

#include "cxrnet/data.hpp"
#include "cxrnet/errors.hpp"
#include "cxrnet/grad_check.hpp"
#include "cxrnet/image.hpp"
#include "cxrnet/labels.hpp"
#include "cxrnet/layers.hpp"
#include "cxrnet/metrics.hpp"
#include "cxrnet/model.hpp"
#include "cxrnet/rng.hpp"
#include "cxrnet/synthetic.hpp"
#include "cxrnet/tensor.hpp"
#include "cxrnet/training.hpp"
