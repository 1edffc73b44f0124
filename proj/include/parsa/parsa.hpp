#pragma once

// Searchlight representational similarity analysis with partial-correlation
// adjustment for design-induced bias.

#include "parsa/correlate.hpp"
#include "parsa/csv.hpp"
#include "parsa/design.hpp"
#include "parsa/errors.hpp"
#include "parsa/geometry.hpp"
#include "parsa/glm.hpp"
#include "parsa/hrf.hpp"
#include "parsa/inference.hpp"
#include "parsa/nifti.hpp"
#include "parsa/noise.hpp"
#include "parsa/parallel.hpp"
#include "parsa/perm_labels.hpp"
#include "parsa/rng.hpp"
#include "parsa/searchlight.hpp"
#include "parsa/searchlight_rsa.hpp"
#include "parsa/similarity.hpp"
#include "parsa/simulate.hpp"
