#pragma once

#include "confident/adapt.hpp"
#include "confident/believability.hpp"
#include "confident/core.hpp"
#include "confident/error.hpp"
#include "confident/generalize.hpp"
#include "confident/io.hpp"
#include "confident/reject.hpp"
#include "confident/repeatability.hpp"
#include "confident/serialize.hpp"
