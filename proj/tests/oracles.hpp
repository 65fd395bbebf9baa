#pragma once

#include "twsc/reference.hpp"

namespace oracle = twsc::reference;
