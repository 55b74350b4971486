#pragma once

#include "memshield/baselines.hpp"
#include "memshield/bench.hpp"
#include "memshield/catalog.hpp"
#include "memshield/classifier.hpp"
#include "memshield/dataset.hpp"
#include "memshield/error.hpp"
#include "memshield/experiments.hpp"
#include "memshield/explain.hpp"
#include "memshield/fixture.hpp"
#include "memshield/forest.hpp"
#include "memshield/metrics.hpp"
#include "memshield/report.hpp"
#include "memshield/rng.hpp"
#include "memshield/serialize.hpp"
#include "memshield/split.hpp"
