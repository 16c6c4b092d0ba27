#pragma once

#include "ocil/augment.hpp"
#include "ocil/clustering.hpp"
#include "ocil/config.hpp"
#include "ocil/data.hpp"
#include "ocil/errors.hpp"
#include "ocil/exemplar.hpp"
#include "ocil/experiment.hpp"
#include "ocil/learner.hpp"
#include "ocil/metrics.hpp"
#include "ocil/ncm.hpp"
#include "ocil/nn.hpp"
