#pragma once

#include "aqlm/adam.hpp"
#include "aqlm/beam_search.hpp"
#include "aqlm/block.hpp"
#include "aqlm/codebook_opt.hpp"
#include "aqlm/config.hpp"
#include "aqlm/errors.hpp"
#include "aqlm/format.hpp"
#include "aqlm/init.hpp"
#include "aqlm/kernels.hpp"
#include "aqlm/layer_quantizer.hpp"
#include "aqlm/linalg.hpp"
#include "aqlm/parallel.hpp"
#include "aqlm/rtn.hpp"
#include "aqlm/serialize.hpp"
