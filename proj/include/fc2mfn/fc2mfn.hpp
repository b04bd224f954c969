#pragma once

#include "fc2mfn/autodiff.hpp"
#include "fc2mfn/config.hpp"
#include "fc2mfn/container.hpp"
#include "fc2mfn/conv.hpp"
#include "fc2mfn/ctensor.hpp"
#include "fc2mfn/datagen.hpp"
#include "fc2mfn/gradcheck.hpp"
#include "fc2mfn/layers.hpp"
#include "fc2mfn/model.hpp"
#include "fc2mfn/rng.hpp"
#include "fc2mfn/training.hpp"
