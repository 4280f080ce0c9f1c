#pragma once

#include "fsi/error.hpp"
#include "fsi/mesh.hpp"
#include "fsi/fem.hpp"
#include "fsi/fractime.hpp"
#include "fsi/parallel.hpp"
#include "fsi/gmsfem.hpp"
#include "fsi/io.hpp"
#include "fsi/stochastic.hpp"
#include "fsi/moments.hpp"
#include "fsi/inverse.hpp"
#include "fsi/verify.hpp"
#include "fsi/config.hpp"
#include "fsi/pipeline.hpp"
