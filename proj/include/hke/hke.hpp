#pragma once

#include "hke/constants.hpp"
#include "hke/embed.hpp"
#include "hke/harmonic.hpp"
#include "hke/ks.hpp"
#include "hke/maps.hpp"
#include "hke/mesh.hpp"
#include "hke/space.hpp"
#include "hke/space_io.hpp"
#include "hke/tensor.hpp"
#include "hke/version.hpp"
