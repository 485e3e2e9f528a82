#pragma once

// Umbrella header.

#include "qstrong/errors.hpp"
#include "qstrong/numerics.hpp"
#include "qstrong/io.hpp"
#include "qstrong/field.hpp"
#include "qstrong/sfa.hpp"
#include "qstrong/quantum_state.hpp"
#include "qstrong/hhg.hpp"
#include "qstrong/ati.hpp"
#include "qstrong/tomography.hpp"
#include "qstrong/qspec.hpp"
