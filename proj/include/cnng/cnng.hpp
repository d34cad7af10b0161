#pragma once

#include "cnng/checksum.hpp"
#include "cnng/data.hpp"
#include "cnng/dataset.hpp"
#include "cnng/error.hpp"
#include "cnng/evaluate.hpp"
#include "cnng/kmeans.hpp"
#include "cnng/matrix.hpp"
#include "cnng/model_io.hpp"
#include "cnng/nn.hpp"
#include "cnng/reflect.hpp"
#include "cnng/reflect_config.hpp"
#include "cnng/report.hpp"
#include "cnng/rng.hpp"
#include "cnng/run_config.hpp"
#include "cnng/tree.hpp"
