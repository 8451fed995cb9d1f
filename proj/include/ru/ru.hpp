#pragma once

#include "ru/errors.hpp"
#include "ru/stats.hpp"
#include "ru/rng.hpp"
#include "ru/parallel.hpp"
#include "ru/roots.hpp"
#include "ru/path_array.hpp"
#include "ru/market.hpp"
#include "ru/utility.hpp"
#include "ru/correction.hpp"
#include "ru/regression.hpp"
#include "ru/hedging.hpp"
#include "ru/verify.hpp"
#include "ru/io.hpp"
#include "ru/config.hpp"
#include "ru/pipeline.hpp"
