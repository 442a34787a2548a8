#pragma once

#include "pacediff/analysis.hpp"
#include "pacediff/clustering.hpp"
#include "pacediff/config.hpp"
#include "pacediff/csv.hpp"
#include "pacediff/dataset.hpp"
#include "pacediff/experiments.hpp"
#include "pacediff/model.hpp"
#include "pacediff/point_set.hpp"
#include "pacediff/rng.hpp"
#include "pacediff/sampling.hpp"
#include "pacediff/schedule.hpp"
#include "pacediff/stats.hpp"
#include "pacediff/training.hpp"
