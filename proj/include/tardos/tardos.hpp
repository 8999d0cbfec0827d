#pragma once

#include "tardos/errors.hpp"
#include "tardos/random.hpp"
#include "tardos/parallel.hpp"
#include "tardos/codebook.hpp"
#include "tardos/codebook_io.hpp"
#include "tardos/scores.hpp"
#include "tardos/channel.hpp"
#include "tardos/distributions.hpp"
#include "tardos/sprt.hpp"
#include "tardos/whitebox.hpp"
#include "tardos/harness/config.hpp"
#include "tardos/harness/experiment.hpp"
#include "tardos/harness/output.hpp"
