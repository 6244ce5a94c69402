#pragma once

#include "phnn/analysis.hpp"
#include "phnn/diffcore/finite_diff.hpp"
#include "phnn/diffcore/params.hpp"
#include "phnn/diffcore/scalar_net.hpp"
#include "phnn/diffcore/tape.hpp"
#include "phnn/error.hpp"
#include "phnn/integrate.hpp"
#include "phnn/io/config.hpp"
#include "phnn/io/dataset.hpp"
#include "phnn/io/text.hpp"
#include "phnn/model/baseline.hpp"
#include "phnn/model/checkpoint.hpp"
#include "phnn/model/force_net.hpp"
#include "phnn/model/model.hpp"
#include "phnn/model/operator.hpp"
#include "phnn/model/phnn.hpp"
#include "phnn/parallel.hpp"
#include "phnn/pdezoo.hpp"
#include "phnn/random.hpp"
#include "phnn/spatial.hpp"
#include "phnn/train.hpp"
