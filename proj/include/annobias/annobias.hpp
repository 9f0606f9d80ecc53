#pragma once

// Umbrella header for the annotator-bias audit toolkit.

#include "annobias/attribution.hpp"
#include "annobias/classifier.hpp"
#include "annobias/corpus.hpp"
#include "annobias/dataset.hpp"
#include "annobias/error.hpp"
#include "annobias/experiments.hpp"
#include "annobias/lexicon.hpp"
#include "annobias/metrics.hpp"
#include "annobias/rng.hpp"
#include "annobias/sampling.hpp"
