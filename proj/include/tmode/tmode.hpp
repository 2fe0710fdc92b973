#pragma once

#include "tmode/error.hpp"
#include "tmode/spectral.hpp"
#include "tmode/jsf.hpp"
#include "tmode/schmidt.hpp"
#include "tmode/amplifier.hpp"
#include "tmode/iteration.hpp"
#include "tmode/random.hpp"
#include "tmode/quantum.hpp"
#include "tmode/io.hpp"
#include "tmode/experiment.hpp"
