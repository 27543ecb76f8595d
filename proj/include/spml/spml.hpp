#pragma once

#include "spml/data.hpp"
#include "spml/error.hpp"
#include "spml/losses.hpp"
#include "spml/matrix.hpp"
#include "spml/metrics.hpp"
#include "spml/model.hpp"
#include "spml/pipeline.hpp"
#include "spml/pseudo.hpp"
#include "spml/report.hpp"
