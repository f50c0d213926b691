#pragma once

#include "neuzip/ans.hpp"
#include "neuzip/bitfloat.hpp"
#include "neuzip/crc32.hpp"
#include "neuzip/entropy.hpp"
#include "neuzip/errors.hpp"
#include "neuzip/nn.hpp"
#include "neuzip/parallel.hpp"
#include "neuzip/perturb.hpp"
#include "neuzip/rng.hpp"
#include "neuzip/tensorstore.hpp"
