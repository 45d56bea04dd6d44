#pragma once

#include "analytics.hpp"
#include "coordination.hpp"
#include "corpus.hpp"
#include "narrative.hpp"
#include "pipeline.hpp"
#include "simindex.hpp"
#include "svd.hpp"
#include "synthlab.hpp"
